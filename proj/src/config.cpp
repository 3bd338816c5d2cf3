#include "diflo/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "diflo/csv.hpp"

namespace diflo {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "task",        "method",        "score",          "seed",
        "hidden",      "depth",         "lambda",         "beta",
        "margin_r",    "margin_c",      "pgd_steps",      "pgd_eta",
        "pgd_epsilon", "negative_mode", "lr",             "weight_decay",
        "batch_size",  "iterations",    "ode_steps",      "ode_method",
        "alpha",       "theta_max",     "noise_sigma",    "epsilon_buffer",
        "grid_resolution", "n_train",   "n_cal",          "n_id_test",
        "n_ood",       "pred_samples",  "mse_conditions", "n_probes",
        "energy_conditions", "energy_mc", "out",
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &consumed);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad numeric value for " + key + ": " + value);
    }
    if (consumed != value.size()) {
        throw std::invalid_argument("config: trailing characters in value for " + key);
    }
    return v;
}

long long parse_int(const std::string& key, const std::string& value) {
    std::size_t consumed = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &consumed);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer value for " + key + ": " + value);
    }
    if (consumed != value.size()) {
        throw std::invalid_argument("config: trailing characters in value for " + key);
    }
    return v;
}

bool has(const ConfigMap& keys, const std::string& key) { return keys.count(key) > 0; }

}  // namespace

void ExperimentConfig::validate() const {
    if (method != "diflo" && method != "fm") {
        throw std::invalid_argument("config: method must be diflo or fm");
    }
    if (score != "dot" && score != "likelihood") {
        throw std::invalid_argument("config: score must be dot or likelihood");
    }
    if (hidden < 1 || depth < 1) throw std::invalid_argument("config: hidden/depth must be >= 1");
    train.validate();
    spiral.validate();
    if (n_train < 1 || n_cal < 2 || n_id_test < 1 || n_ood < 0) {
        throw std::invalid_argument("config: invalid split sizes");
    }
    if (pred_samples < 1 || mse_conditions < 1 || n_probes < 1 || energy_conditions < 1 ||
        energy_mc < 1) {
        throw std::invalid_argument("config: evaluation sample counts must be >= 1");
    }
    if (out_dir.empty()) throw std::invalid_argument("config: out must be nonempty");
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_keys().count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
        if (out.count(key)) {
            throw std::invalid_argument("config: duplicate key '" + key + "'");
        }
        out[key] = value;
    }
    return out;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

ExperimentConfig make_config(const ConfigMap& keys, bool paper_scale) {
    for (const auto& [key, value] : keys) {
        if (!known_keys().count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }

    ExperimentConfig cfg;
    cfg.task = task_from_string(has(keys, "task") ? keys.at("task") : "regression");
    cfg.method = has(keys, "method") ? keys.at("method") : "diflo";

    // Task- and scale-dependent defaults; explicit keys always win.
    const bool regression = cfg.task == Task::regression;
    cfg.train.beta_curve = regression ? 0.1 : 0.05;
    cfg.train.iterations =
        paper_scale ? (regression ? 20000 : 10000) : (regression ? 8000 : 6000);
    cfg.hidden = paper_scale ? 512 : 256;
    cfg.train.negative_mode = cfg.method == "fm" ? NegativeMode::none : NegativeMode::pgd;

    for (const auto& [key, value] : keys) {
        if (key == "task" || key == "method") continue;
        if (key == "score") cfg.score = value;
        else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "hidden") cfg.hidden = static_cast<int>(parse_int(key, value));
        else if (key == "depth") cfg.depth = static_cast<int>(parse_int(key, value));
        else if (key == "lambda") cfg.train.lambda_repel = parse_double(key, value);
        else if (key == "beta") cfg.train.beta_curve = parse_double(key, value);
        else if (key == "margin_r") cfg.train.margin_r = parse_double(key, value);
        else if (key == "margin_c") cfg.train.margin_c = parse_double(key, value);
        else if (key == "pgd_steps") cfg.train.pgd_steps = static_cast<int>(parse_int(key, value));
        else if (key == "pgd_eta") cfg.train.pgd_eta = parse_double(key, value);
        else if (key == "pgd_epsilon") cfg.train.pgd_epsilon = parse_double(key, value);
        else if (key == "negative_mode") cfg.train.negative_mode = negative_mode_from_string(value);
        else if (key == "lr") cfg.train.lr = parse_double(key, value);
        else if (key == "weight_decay") cfg.train.weight_decay = parse_double(key, value);
        else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "iterations") cfg.train.iterations = static_cast<int>(parse_int(key, value));
        else if (key == "ode_steps") cfg.train.ode_steps = static_cast<int>(parse_int(key, value));
        else if (key == "ode_method") cfg.train.ode_method = ode_method_from_string(value);
        else if (key == "alpha") cfg.train.alpha = parse_double(key, value);
        else if (key == "theta_max") cfg.spiral.theta_max = parse_double(key, value);
        else if (key == "noise_sigma") cfg.spiral.noise_sigma = parse_double(key, value);
        else if (key == "epsilon_buffer") cfg.spiral.epsilon_buffer = parse_double(key, value);
        else if (key == "grid_resolution") cfg.spiral.grid_resolution = static_cast<int>(parse_int(key, value));
        else if (key == "n_train") cfg.n_train = static_cast<int>(parse_int(key, value));
        else if (key == "n_cal") cfg.n_cal = static_cast<int>(parse_int(key, value));
        else if (key == "n_id_test") cfg.n_id_test = static_cast<int>(parse_int(key, value));
        else if (key == "n_ood") cfg.n_ood = static_cast<int>(parse_int(key, value));
        else if (key == "pred_samples") cfg.pred_samples = static_cast<int>(parse_int(key, value));
        else if (key == "mse_conditions") cfg.mse_conditions = static_cast<int>(parse_int(key, value));
        else if (key == "n_probes") cfg.n_probes = static_cast<int>(parse_int(key, value));
        else if (key == "energy_conditions") cfg.energy_conditions = static_cast<int>(parse_int(key, value));
        else if (key == "energy_mc") cfg.energy_mc = static_cast<int>(parse_int(key, value));
        else if (key == "out") cfg.out_dir = value;
    }

    cfg.validate();
    return cfg;
}

std::string serialize(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "task=" << to_string(cfg.task) << '\n';
    out << "method=" << cfg.method << '\n';
    out << "score=" << cfg.score << '\n';
    out << "seed=" << cfg.train.seed << '\n';
    out << "hidden=" << cfg.hidden << '\n';
    out << "depth=" << cfg.depth << '\n';
    out << "lambda=" << fmt_g17(cfg.train.lambda_repel) << '\n';
    out << "beta=" << fmt_g17(cfg.train.beta_curve) << '\n';
    out << "margin_r=" << fmt_g17(cfg.train.margin_r) << '\n';
    out << "margin_c=" << fmt_g17(cfg.train.margin_c) << '\n';
    out << "pgd_steps=" << cfg.train.pgd_steps << '\n';
    out << "pgd_eta=" << fmt_g17(cfg.train.pgd_eta) << '\n';
    out << "pgd_epsilon=" << fmt_g17(cfg.train.pgd_epsilon) << '\n';
    out << "negative_mode=" << to_string(cfg.train.negative_mode) << '\n';
    out << "lr=" << fmt_g17(cfg.train.lr) << '\n';
    out << "weight_decay=" << fmt_g17(cfg.train.weight_decay) << '\n';
    out << "batch_size=" << cfg.train.batch_size << '\n';
    out << "iterations=" << cfg.train.iterations << '\n';
    out << "ode_steps=" << cfg.train.ode_steps << '\n';
    out << "ode_method=" << to_string(cfg.train.ode_method) << '\n';
    out << "alpha=" << fmt_g17(cfg.train.alpha) << '\n';
    out << "theta_max=" << fmt_g17(cfg.spiral.theta_max) << '\n';
    out << "noise_sigma=" << fmt_g17(cfg.spiral.noise_sigma) << '\n';
    out << "epsilon_buffer=" << fmt_g17(cfg.spiral.epsilon_buffer) << '\n';
    out << "grid_resolution=" << cfg.spiral.grid_resolution << '\n';
    out << "n_train=" << cfg.n_train << '\n';
    out << "n_cal=" << cfg.n_cal << '\n';
    out << "n_id_test=" << cfg.n_id_test << '\n';
    out << "n_ood=" << cfg.n_ood << '\n';
    out << "pred_samples=" << cfg.pred_samples << '\n';
    out << "mse_conditions=" << cfg.mse_conditions << '\n';
    out << "n_probes=" << cfg.n_probes << '\n';
    out << "energy_conditions=" << cfg.energy_conditions << '\n';
    out << "energy_mc=" << cfg.energy_mc << '\n';
    out << "out=" << cfg.out_dir << '\n';
    return out.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = serialize(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.rfind("out=", 0) == 0) continue;  // output path is not identity
        for (const char ch : line) {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ULL;
        }
        h ^= '\n';
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize(a) == serialize(b);
}

}  // namespace diflo
