#include "diflo/spiral.hpp"

#include <cmath>
#include <stdexcept>

namespace diflo {

namespace {

double sq_dist_to_curve_point(const Vec& p, double theta, const SpiralConfig& cfg) {
    const double r = theta / cfg.theta_max;
    const double dx = p(0) - r * std::cos(theta);
    const double dy = p(1) - r * std::sin(theta);
    return dx * dx + dy * dy;
}

// Golden-section search for the minimum of the squared distance on [a, b].
double refine_min(const Vec& p, double a, double b, const SpiralConfig& cfg) {
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = sq_dist_to_curve_point(p, x1, cfg);
    double f2 = sq_dist_to_curve_point(p, x2, cfg);
    for (int i = 0; i < 80 && (b - a) > 1e-13; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = sq_dist_to_curve_point(p, x1, cfg);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = sq_dist_to_curve_point(p, x2, cfg);
        }
    }
    return std::sqrt(std::min(f1, f2));
}

Vec noisy_spiral_sample(Rng& rng, const SpiralConfig& cfg) {
    const double theta = rng.uniform(0.0, cfg.theta_max);
    Vec p = spiral_point(theta, cfg);
    p(0) += cfg.noise_sigma * rng.normal();
    p(1) += cfg.noise_sigma * rng.normal();
    return p;
}

bool in_unit_box(const Vec& p) {
    return p(0) >= -1.0 && p(0) <= 1.0 && p(1) >= -1.0 && p(1) <= 1.0;
}

// Spiral sample conditioned on landing inside [-1,1]^2. Conditions must stay
// in the ambient box; only the outermost arc can ever spill past it.
Vec boxed_spiral_sample(Rng& rng, const SpiralConfig& cfg) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vec p = noisy_spiral_sample(rng, cfg);
        if (in_unit_box(p)) return p;
    }
    throw std::runtime_error("sample rejected 10000 times; noise_sigma misconfigured?");
}

}  // namespace

void SpiralConfig::validate() const {
    if (theta_max <= 0.0 || noise_sigma <= 0.0 || epsilon_buffer <= 0.0 || grid_resolution <= 0) {
        throw std::invalid_argument("SpiralConfig: all fields must be positive");
    }
    if (epsilon_buffer <= 3.0 * noise_sigma) {
        throw std::invalid_argument("SpiralConfig: epsilon_buffer must exceed 3*noise_sigma");
    }
}

Task task_from_string(const std::string& name) {
    if (name == "regression") return Task::regression;
    if (name == "generation") return Task::generation;
    throw std::invalid_argument("unknown task: " + name);
}

std::string to_string(Task task) {
    return task == Task::regression ? "regression" : "generation";
}

Vec spiral_point(double theta, const SpiralConfig& cfg) {
    if (theta < 0.0 || theta > cfg.theta_max) {
        throw std::invalid_argument("spiral_point: theta out of [0, theta_max]");
    }
    const double r = theta / cfg.theta_max;
    Vec p(2);
    p(0) = r * std::cos(theta);
    p(1) = r * std::sin(theta);
    return p;
}

std::vector<Vec> sample_spiral(Rng& rng, int n, const SpiralConfig& cfg) {
    if (n < 1) throw std::invalid_argument("sample_spiral: n must be >= 1");
    std::vector<Vec> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(noisy_spiral_sample(rng, cfg));
    return out;
}

double min_dist_to_spiral(const Vec& point, const SpiralConfig& cfg) {
    if (point.size() != 2) throw std::invalid_argument("min_dist_to_spiral: point must be 2-D");
    const int res = cfg.grid_resolution;
    const double step = cfg.theta_max / res;

    int best = 0;
    double best_sq = sq_dist_to_curve_point(point, 0.0, cfg);
    for (int j = 1; j <= res; ++j) {
        const double sq = sq_dist_to_curve_point(point, j * step, cfg);
        if (sq < best_sq) {
            best_sq = sq;
            best = j;
        }
    }
    const double lo = std::max(0.0, (best - 1) * step);
    const double hi = std::min(cfg.theta_max, (best + 1) * step);
    return refine_min(point, lo, hi, cfg);
}

std::vector<Vec> sample_ood(Rng& rng, int n, const SpiralConfig& cfg) {
    if (n < 1) throw std::invalid_argument("sample_ood: n must be >= 1");
    std::vector<Vec> out;
    out.reserve(n);
    long attempts_in_window = 0;
    long accepted_in_window = 0;
    while (static_cast<int>(out.size()) < n) {
        Vec p(2);
        p(0) = rng.uniform(-1.0, 1.0);
        p(1) = rng.uniform(-1.0, 1.0);
        ++attempts_in_window;
        if (min_dist_to_spiral(p, cfg) > cfg.epsilon_buffer) {
            out.push_back(std::move(p));
            ++accepted_in_window;
        }
        if (attempts_in_window >= 100000) {
            if (accepted_in_window == 0) {
                throw std::runtime_error(
                    "sample_ood: sustained rejection rate above 99.9%; "
                    "epsilon_buffer leaves no feasible region");
            }
            attempts_in_window = 0;
            accepted_in_window = 0;
        }
    }
    return out;
}

void draw_regression_sample(Rng& rng, const SpiralConfig& cfg, Vec& cond, Vec& target) {
    if (cfg.grid_resolution < 11) {
        throw std::invalid_argument("regression sample: grid_resolution must be >= 11");
    }
    const double step = cfg.theta_max / cfg.grid_resolution;
    constexpr int kHorizon = 10;

    const auto k =
        static_cast<int>(rng.uniform_index(cfg.grid_resolution - kHorizon));  // [0, res-11]
    do {
        cond = spiral_point(k * step, cfg);
        cond(0) += cfg.noise_sigma * rng.normal();
        cond(1) += cfg.noise_sigma * rng.normal();
    } while (!in_unit_box(cond));

    target.resize(2 * kHorizon);
    for (int j = 1; j <= kHorizon; ++j) {
        Vec p = spiral_point((k + j) * step, cfg);
        p(0) += cfg.noise_sigma * rng.normal();
        p(1) += cfg.noise_sigma * rng.normal();
        target.segment(2 * (j - 1), 2) = p;
    }
}

void draw_generation_sample(Rng& rng, const SpiralConfig& cfg, Vec& cond, Vec& target) {
    cond = boxed_spiral_sample(rng, cfg);
    target = noisy_spiral_sample(rng, cfg);
    while ((target - cond).norm() < 1e-9) target = noisy_spiral_sample(rng, cfg);
}

TaskDataset build_regression_dataset(Rng& rng, int n, const SpiralConfig& cfg) {
    if (n < 1) throw std::invalid_argument("build_regression_dataset: n must be >= 1");
    TaskDataset ds;
    ds.task = Task::regression;
    ds.conditions.resize(n);
    ds.targets.resize(n);
    for (int i = 0; i < n; ++i) draw_regression_sample(rng, cfg, ds.conditions[i], ds.targets[i]);
    return ds;
}

TaskDataset build_generation_dataset(Rng& rng, int n, const SpiralConfig& cfg) {
    if (n < 1) throw std::invalid_argument("build_generation_dataset: n must be >= 1");
    TaskDataset ds;
    ds.task = Task::generation;
    ds.conditions.resize(n);
    ds.targets.resize(n);
    for (int i = 0; i < n; ++i) draw_generation_sample(rng, cfg, ds.conditions[i], ds.targets[i]);
    return ds;
}

TaskDataset build_task_dataset(Task task, Rng& rng, int n, const SpiralConfig& cfg) {
    return task == Task::regression ? build_regression_dataset(rng, n, cfg)
                                    : build_generation_dataset(rng, n, cfg);
}

}  // namespace diflo
