#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diflo/checkpoint.hpp"
#include "diflo/config.hpp"
#include "diflo/conformal.hpp"
#include "diflo/csv.hpp"

namespace diflo {

// Streams fresh (target, condition) pairs from the task's generative process.
class SpiralTaskSource : public PairSource {
public:
    SpiralTaskSource(Task task, const SpiralConfig& cfg) : task_(task), cfg_(cfg) {}
    int state_dim() const override { return task_ == Task::regression ? 20 : 2; }
    int cond_dim() const override { return 2; }
    void sample(Rng& rng, Vec& x1, Vec& c) const override {
        if (task_ == Task::regression) {
            draw_regression_sample(rng, cfg_, c, x1);
        } else {
            draw_generation_sample(rng, cfg_, c, x1);
        }
    }

private:
    Task task_;
    SpiralConfig cfg_;
};

struct EvalConditions {
    std::vector<Vec> cal;
    std::vector<Vec> test;
    std::vector<Vec> test_targets;
    std::vector<Vec> ood;
};

// Calibration/test/OOD sets are regenerated deterministically from the seed's
// named streams; gen-data writes the same draws to disk.
EvalConditions build_eval_conditions(const ExperimentConfig& cfg);

struct ScoreSet {
    std::vector<double> s_dot;
    std::vector<double> neg_log_p;  // empty unless likelihood scoring was requested
};

ScoreSet score_conditions(const MlpParams& params, const std::vector<Vec>& conditions,
                          const ExperimentConfig& cfg, const Rng& eval_rng,
                          const std::string& set_name, bool with_likelihood);

struct TrainOutput {
    MlpParams params;
    std::vector<LossBreakdown> history;
    std::string checkpoint_path;
    std::string history_path;
};

void cmd_gen_data(const ExperimentConfig& cfg);

TrainOutput cmd_train(const ExperimentConfig& cfg);

struct MetricsResult {
    double auroc = 0.0;
    double fpr = 0.0;
    double q_lo = 0.0;
    double q_hi = 0.0;
    double empirical_coverage = 0.0;
    std::optional<double> mse;
    std::string hash;
    std::vector<double> cal_scores;
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
};

MetricsResult cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                       int dump_trajectories = 0);

struct AblateRow {
    std::string variant;
    double auroc = 0.0;
    double fpr = 0.0;
    std::optional<double> mse;
};

std::vector<AblateRow> cmd_ablate(const ExperimentConfig& cfg, bool with_baselines);

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::vector<double>& alphas);

void cmd_landscape(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                   int resolution);

struct PredictResult {
    Vec prediction;
    double s_dot = 0.0;
    bool accepted = false;
    ConformalInterval interval;
    std::string json;
};

PredictResult cmd_predict(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                          const Vec& condition);

struct CriterionResult {
    std::string id;
    std::string description;
    bool pass = false;
    std::string detail;
};

struct ReproRow {
    std::string name;  // e.g. "reg/diflo"
    std::string task;
    std::string method;
    std::string score;
    MetricsResult metrics;
    double paper_auroc = 0.0;
    double paper_fpr = 0.0;
    std::optional<double> paper_mse;
};

struct ReproReport {
    std::vector<ReproRow> rows;
    double energy_on_diflo = 0.0, energy_pgd_diflo = 0.0;
    double energy_on_fm = 0.0, energy_pgd_fm = 0.0;
    double energy_on_diflo_gen = 0.0, energy_pgd_diflo_gen = 0.0;
    double energy_on_fm_gen = 0.0, energy_pgd_fm_gen = 0.0;
    std::vector<SweepRow> sweep_diflo;
    std::vector<SweepRow> sweep_fm;
    double landscape_reject_ood = 0.0;
    double landscape_reject_curve = 0.0;
    std::vector<CriterionResult> criteria;
    bool all_pass = false;
    std::string report_json;
    std::string table_markdown;
};

// Runs both tasks x {FM-DOT, FM-likelihood, DiFlo} plus the three regression
// ablations with shared seeds, evaluates the acceptance thresholds it can
// compute, and writes report/table files under out_root.
ReproReport cmd_repro_table1(const ConfigMap& overrides, bool paper_scale, std::uint64_t seed,
                             const std::string& out_root);

const ReproRow* find_row(const ReproReport& report, const std::string& name);

}  // namespace diflo
