#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diflo/experiment.hpp"

namespace {

using namespace diflo;

struct GlobalArgs {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::string out_dir;
    bool paper_scale = false;
    std::string method;
    std::string score;
    std::optional<double> alpha;
    std::string task;
};

ConfigMap collect_overrides(const GlobalArgs& args) {
    ConfigMap kv;
    if (!args.config_path.empty()) kv = parse_config_file(args.config_path);
    if (args.seed) kv["seed"] = std::to_string(*args.seed);
    if (!args.out_dir.empty()) kv["out"] = args.out_dir;
    if (!args.method.empty()) kv["method"] = args.method;
    if (!args.score.empty()) kv["score"] = args.score;
    if (args.alpha) kv["alpha"] = fmt_g17(*args.alpha);
    if (!args.task.empty()) kv["task"] = args.task;
    return kv;
}

ExperimentConfig build_config(const GlobalArgs& args) {
    return make_config(collect_overrides(args), args.paper_scale);
}

std::vector<double> parse_alpha_list(const std::string& text) {
    std::vector<double> alphas;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) {
        if (!field.empty()) alphas.push_back(std::stod(field));
    }
    if (alphas.empty()) throw std::invalid_argument("--alphas: empty list");
    return alphas;
}

void add_global_flags(CLI::App* cmd, GlobalArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--seed", args.seed, "master seed (overrides config)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_flag("--paper-scale", args.paper_scale,
                  "hidden=512 and the full iteration budget instead of the desk profile");
    cmd->add_option("--method", args.method, "diflo | fm");
    cmd->add_option("--score", args.score, "dot | likelihood");
    cmd->add_option("--alpha", args.alpha, "conformal significance level");
    cmd->add_option("--task", args.task, "regression | generation");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diverging-flows training, scoring and calibration toolkit"};
    app.require_subcommand(1);

    GlobalArgs args;
    std::string checkpoint;
    std::string condition_text;
    std::string alphas_text = "0.01,0.02,0.05,0.1,0.15,0.2,0.3,0.4,0.5";
    int resolution = 64;
    int dump_traj = 0;
    bool with_baselines = false;

    CLI::App* gen = app.add_subcommand("gen-data", "write train/cal/test/ood CSVs");
    add_global_flags(gen, args);

    CLI::App* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint + history");
    add_global_flags(train_cmd, args);

    CLI::App* eval_cmd = app.add_subcommand("eval", "score, calibrate and report metrics");
    add_global_flags(eval_cmd, args);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.bin)");
    eval_cmd->add_option("--dump-traj", dump_traj, "dump N test + N OOD trajectories with chords");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the four objective variants");
    add_global_flags(ablate_cmd, args);
    ablate_cmd->add_flag("--with-baselines", with_baselines, "append FM-DOT and FM-likelihood rows");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "coverage-vs-FPR sweep from existing scores");
    add_global_flags(sweep_cmd, args);
    sweep_cmd->add_option("--alphas", alphas_text, "comma-separated significance levels");

    CLI::App* landscape_cmd = app.add_subcommand("landscape", "divergence-score grid over [-1,1]^2");
    add_global_flags(landscape_cmd, args);
    landscape_cmd->add_option("--checkpoint", checkpoint, "checkpoint path");
    landscape_cmd->add_option("--resolution", resolution, "grid resolution per axis");

    CLI::App* repro_cmd = app.add_subcommand("repro-table1", "full benchmark reproduction");
    add_global_flags(repro_cmd, args);

    CLI::App* predict_cmd =
        app.add_subcommand("predict", "mean prediction + divergence score for one condition");
    add_global_flags(predict_cmd, args);
    predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint path");
    predict_cmd->add_option("--condition", condition_text, "condition as 'cx,cy'")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            cmd_gen_data(build_config(args));
        } else if (train_cmd->parsed()) {
            const ExperimentConfig cfg = build_config(args);
            std::cerr << "[train] " << to_string(cfg.task) << " method=" << cfg.method
                      << " iterations=" << cfg.train.iterations << "\n";
            cmd_train(cfg);
        } else if (eval_cmd->parsed()) {
            const ExperimentConfig cfg = build_config(args);
            if (checkpoint.empty()) checkpoint = cfg.out_dir + "/checkpoint.bin";
            const MetricsResult metrics = cmd_eval(cfg, checkpoint, dump_traj);
            std::cerr << "[eval] auroc=" << metrics.auroc << " fpr=" << metrics.fpr
                      << " coverage=" << metrics.empirical_coverage << "\n";
        } else if (ablate_cmd->parsed()) {
            const ExperimentConfig cfg = build_config(args);
            for (const AblateRow& row : cmd_ablate(cfg, with_baselines)) {
                std::cerr << "[ablate] " << row.variant << " auroc=" << row.auroc
                          << " fpr=" << row.fpr << "\n";
            }
        } else if (sweep_cmd->parsed()) {
            const ExperimentConfig cfg = build_config(args);
            cmd_sweep(cfg, parse_alpha_list(alphas_text));
        } else if (landscape_cmd->parsed()) {
            const ExperimentConfig cfg = build_config(args);
            if (checkpoint.empty()) checkpoint = cfg.out_dir + "/checkpoint.bin";
            cmd_landscape(cfg, checkpoint, resolution);
        } else if (repro_cmd->parsed()) {
            ConfigMap kv = collect_overrides(args);
            const std::uint64_t seed = args.seed ? static_cast<std::uint64_t>(*args.seed) : 42;
            std::string out_root = args.out_dir.empty() ? "out/repro" : args.out_dir;
            kv.erase("out");
            kv.erase("seed");
            kv.erase("task");
            kv.erase("method");
            const ReproReport report = cmd_repro_table1(kv, args.paper_scale, seed, out_root);
            std::cerr << report.table_markdown;
            if (!report.all_pass) {
                std::cerr << "[repro] acceptance thresholds FAILED\n";
                return 1;
            }
        } else if (predict_cmd->parsed()) {
            const ExperimentConfig cfg = build_config(args);
            if (checkpoint.empty()) checkpoint = cfg.out_dir + "/checkpoint.bin";
            const auto fields = parse_alpha_list(condition_text);
            if (fields.size() != 2) throw std::invalid_argument("--condition needs 'cx,cy'");
            Vec condition(2);
            condition << fields[0], fields[1];
            const PredictResult result = cmd_predict(cfg, checkpoint, condition);
            std::cout << result.json << std::endl;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
