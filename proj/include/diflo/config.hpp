#pragma once

#include <map>
#include <string>

#include "diflo/flow.hpp"
#include "diflo/spiral.hpp"

namespace diflo {

// One experiment: task + method + scoring rule + every training, data and
// evaluation knob. Flat key=value text format with '#' comments; unknown keys
// are rejected so a typo cannot silently fall back to a default.
struct ExperimentConfig {
    Task task = Task::regression;
    std::string method = "diflo";  // diflo | fm
    std::string score = "dot";     // dot | likelihood
    int hidden = 256;
    int depth = 3;
    TrainConfig train;
    SpiralConfig spiral;
    int n_train = 4096;
    int n_cal = 1000;
    int n_id_test = 2000;
    int n_ood = 2000;
    int pred_samples = 16;
    int mse_conditions = 512;
    int n_probes = 16;
    int energy_conditions = 256;
    int energy_mc = 8;
    std::string out_dir = "out";

    int state_dim() const { return task == Task::regression ? 20 : 2; }
    int cond_dim() const { return 2; }

    void validate() const;
};

using ConfigMap = std::map<std::string, std::string>;

// Parses key=value lines; '#' starts a comment, blank lines are ignored.
ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// Builds a config from explicit keys. Unset fields take their defaults, which
// depend on the task (beta, iterations) and on the paper-scale switch
// (hidden 512 and the full iteration budget instead of the desk profile).
ExperimentConfig make_config(const ConfigMap& keys, bool paper_scale);

std::string serialize(const ExperimentConfig& cfg);

// FNV-1a over the canonical serialization, excluding the output directory.
std::string config_hash(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace diflo
