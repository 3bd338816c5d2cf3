#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "diflo/experiment.hpp"

using namespace diflo;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file: ", path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ConfigMap tiny_profile() {
    return {
        {"hidden", "16"},        {"depth", "2"},         {"iterations", "40"},
        {"batch_size", "32"},    {"ode_steps", "8"},     {"n_train", "30"},
        {"n_cal", "50"},         {"n_id_test", "40"},    {"n_ood", "40"},
        {"mse_conditions", "6"}, {"pred_samples", "2"},  {"n_probes", "2"},
        {"energy_conditions", "8"}, {"energy_mc", "2"},  {"grid_resolution", "200"},
        {"seed", "11"},
    };
}

std::string fresh_dir(const std::string& name) {
    const std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("gen-data: declared row counts, determinism, empty OOD") {
    ConfigMap kv = tiny_profile();
    kv["out"] = fresh_dir("diflo_it_gen");
    const ExperimentConfig cfg = make_config(kv, false);
    cmd_gen_data(cfg);

    const DatasetFile train_file = read_dataset_csv(cfg.out_dir + "/data/train.csv");
    CHECK(train_file.conditions.size() == 30);
    CHECK(train_file.target_dim == 20);
    CHECK(train_file.labels.front() == "ID");
    CHECK(read_dataset_csv(cfg.out_dir + "/data/cal.csv").conditions.size() == 50);
    CHECK(read_dataset_csv(cfg.out_dir + "/data/test.csv").conditions.size() == 40);
    CHECK(read_dataset_csv(cfg.out_dir + "/data/ood.csv").conditions.size() == 40);

    // Byte-identical rerun.
    const std::string before = slurp(cfg.out_dir + "/data/train.csv");
    cmd_gen_data(cfg);
    CHECK(slurp(cfg.out_dir + "/data/train.csv") == before);

    // n_ood = 0 writes a header-only file.
    ConfigMap kv0 = tiny_profile();
    kv0["n_ood"] = "0";
    kv0["out"] = fresh_dir("diflo_it_gen0");
    const ExperimentConfig cfg0 = make_config(kv0, false);
    cmd_gen_data(cfg0);
    CHECK(slurp(cfg0.out_dir + "/data/ood.csv") == "regression,2,20\n");
}

TEST_CASE("train + eval end-to-end at a miniature profile") {
    ConfigMap kv = tiny_profile();
    kv["out"] = fresh_dir("diflo_it_run");
    const ExperimentConfig cfg = make_config(kv, false);

    const TrainOutput trained = cmd_train(cfg);
    CHECK(fs::exists(trained.checkpoint_path));
    CHECK(fs::exists(trained.history_path));
    CHECK(trained.history.size() == 40);

    const MetricsResult metrics = cmd_eval(cfg, trained.checkpoint_path, 2);
    CHECK(metrics.auroc >= 0.0);
    CHECK(metrics.auroc <= 1.0);
    CHECK(metrics.fpr >= 0.0);
    CHECK(metrics.fpr <= 1.0);
    CHECK(metrics.q_lo <= metrics.q_hi);
    REQUIRE(metrics.mse.has_value());
    CHECK(*metrics.mse >= 0.0);
    CHECK(metrics.cal_scores.size() == 50);
    CHECK(metrics.id_scores.size() == 40);
    CHECK(metrics.ood_scores.size() == 40);

    // metrics.json carries exactly the documented schema.
    const auto mj = nlohmann::json::parse(slurp(cfg.out_dir + "/eval/metrics.json"));
    for (const char* key : {"task", "seed", "auroc", "fpr", "alpha", "q_lo", "q_hi",
                            "empirical_coverage", "mse", "config_hash"}) {
        CHECK_MESSAGE(mj.contains(key), "missing key ", key);
    }
    CHECK(mj.size() == 10);
    CHECK(mj["task"] == "regression");
    CHECK(mj["config_hash"] == config_hash(cfg));

    // Idempotent: a rerun reproduces the metrics file byte for byte.
    const std::string before = slurp(cfg.out_dir + "/eval/metrics.json");
    cmd_eval(cfg, trained.checkpoint_path);
    CHECK(slurp(cfg.out_dir + "/eval/metrics.json") == before);

    // Trajectory dumps share the chord schema.
    const std::string traj = slurp(cfg.out_dir + "/eval/trajectories.csv");
    const std::string chord = slurp(cfg.out_dir + "/eval/trajectories_chord.csv");
    CHECK(traj.substr(0, traj.find('\n')) == chord.substr(0, chord.find('\n')));

    // Sweep consumes the written scores.
    const auto sweep = cmd_sweep(cfg, {0.5, 0.05});
    REQUIRE(sweep.size() == 2);
    CHECK(fs::exists(cfg.out_dir + "/eval/sweep.csv"));

    // Landscape: resolution^2 rows over exactly [-1,1]^2.
    cmd_landscape(cfg, trained.checkpoint_path, 4);
    std::ifstream ls(cfg.out_dir + "/eval/landscape.csv");
    std::string line;
    std::getline(ls, line);
    CHECK(line == "cx,cy,s_dot,accepted");
    int rows = 0;
    bool saw_corner = false;
    while (std::getline(ls, line)) {
        ++rows;
        if (line.rfind("1,1,", 0) == 0) saw_corner = true;
    }
    CHECK(rows == 16);
    CHECK(saw_corner);

    // Predict: parseable JSON with the calibrated band.
    Vec condition(2);
    condition << 0.1, 0.2;
    const PredictResult pred = cmd_predict(cfg, trained.checkpoint_path, condition);
    const auto pj = nlohmann::json::parse(pred.json);
    CHECK(pj["prediction"].size() == 20);
    CHECK(pj.contains("s_dot"));
    CHECK(pj.contains("accepted"));
    CHECK(pj["q_lo"].get<double>() == metrics.q_lo);

    // Likelihood scoring populates the log_p column and the same machinery.
    ConfigMap kv_lik = tiny_profile();
    kv_lik["score"] = "likelihood";
    kv_lik["out"] = fresh_dir("diflo_it_lik");
    const ExperimentConfig cfg_lik = make_config(kv_lik, false);
    const MetricsResult lik = cmd_eval(cfg_lik, trained.checkpoint_path);
    CHECK(lik.q_lo <= lik.q_hi);
    const auto rows_lik = read_scores_csv(cfg_lik.out_dir + "/eval/scores.csv");
    CHECK(rows_lik.front().log_p.has_value());
}

TEST_CASE("fm training reduces the flow-matching loss on spiral regression") {
    const SpiralConfig spiral;
    const SpiralTaskSource source(Task::regression, spiral);
    TrainConfig cfg;
    cfg.negative_mode = NegativeMode::none;
    cfg.lambda_repel = 0.0;
    cfg.beta_curve = 0.0;
    cfg.iterations = 2000;
    cfg.batch_size = 32;
    const TrainResult result = train(source, 24, 2, cfg, 3);

    auto window_mean = [&](int begin, int end) {
        double sum = 0.0;
        for (int i = begin; i < end; ++i) sum += result.history[i].fm;
        return sum / (end - begin);
    };
    CHECK(window_mean(1800, 2000) < window_mean(0, 200));
}

TEST_CASE("fm training histories carry zero contrastive terms") {
    ConfigMap kv = tiny_profile();
    kv["method"] = "fm";
    kv["out"] = fresh_dir("diflo_it_fm");
    const ExperimentConfig cfg = make_config(kv, false);
    const TrainOutput trained = cmd_train(cfg);
    for (const LossBreakdown& loss : trained.history) {
        CHECK(loss.repel == 0.0);
        CHECK(loss.curve == 0.0);
        CHECK(loss.total == loss.fm);
    }
}

TEST_CASE("checkpoints from the wrong task are rejected") {
    ConfigMap kv = tiny_profile();
    kv["task"] = "generation";
    kv["iterations"] = "2";
    kv["out"] = fresh_dir("diflo_it_wrongtask");
    const ExperimentConfig gen_cfg = make_config(kv, false);
    const TrainOutput trained = cmd_train(gen_cfg);

    ConfigMap kv_reg = tiny_profile();
    kv_reg["out"] = kv["out"];
    const ExperimentConfig reg_cfg = make_config(kv_reg, false);
    CHECK_THROWS(cmd_eval(reg_cfg, trained.checkpoint_path));
}

TEST_CASE("cli binary: gen-data determinism and predict json") {
    const std::string dir1 = fresh_dir("diflo_cli_a");
    const std::string dir2 = fresh_dir("diflo_cli_b");
    const std::string base = std::string(DIFLO_CLI_PATH);
    REQUIRE(fs::exists(base));

    auto run = [](const std::string& cmd) { return std::system(cmd.c_str()); };
    auto cmd_for = [&](const std::string& dir) {
        return base + " gen-data --config " + dir + "/tiny.cfg --seed 11 --out " + dir +
               " >/dev/null 2>&1";
    };

    for (const std::string& dir : {dir1, dir2}) {
        fs::create_directories(dir);
        std::ofstream cfg(dir + "/tiny.cfg");
        cfg << "hidden=16\niterations=4\nn_train=20\nn_cal=12\nn_id_test=10\nn_ood=8\n"
               "grid_resolution=200\nbatch_size=8\node_steps=6\n";
    }
    REQUIRE(run(cmd_for(dir1)) == 0);
    REQUIRE(run(cmd_for(dir2)) == 0);
    CHECK(slurp(dir1 + "/data/train.csv") == slurp(dir2 + "/data/train.csv"));
    CHECK(slurp(dir1 + "/data/ood.csv") == slurp(dir2 + "/data/ood.csv"));

    // Unknown config keys abort with a nonzero exit.
    {
        std::ofstream bad(dir1 + "/bad.cfg");
        bad << "lamda=0.1\n";
    }
    CHECK(run(base + " gen-data --config " + dir1 + "/bad.cfg >/dev/null 2>&1") != 0);
}
