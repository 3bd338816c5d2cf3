#pragma once

#include <string>
#include <vector>

#include "diflo/net.hpp"
#include "diflo/rng.hpp"

namespace diflo {

// 2-D spiral benchmark: x(theta) = r(theta) (cos theta, sin theta) + noise,
// r = theta / theta_max, theta uniform on [0, theta_max].
struct SpiralConfig {
    double theta_max = 5.0 * 3.14159265358979323846;
    double noise_sigma = 0.005;
    double epsilon_buffer = 0.025;
    int grid_resolution = 1000;

    void validate() const;
};

enum class Task { regression, generation };

Task task_from_string(const std::string& name);
std::string to_string(Task task);

// Paired conditions and targets for one task. Conditions always live in
// [-1,1]^2; regression targets are the 10 following grid points flattened to
// 20 dims, generation targets are independent spiral samples.
struct TaskDataset {
    Task task = Task::regression;
    std::vector<Vec> conditions;
    std::vector<Vec> targets;

    int size() const { return static_cast<int>(conditions.size()); }
    int cond_dim() const { return conditions.empty() ? 0 : static_cast<int>(conditions[0].size()); }
    int target_dim() const { return targets.empty() ? 0 : static_cast<int>(targets[0].size()); }
};

// Noiseless curve point; theta must lie in [0, theta_max].
Vec spiral_point(double theta, const SpiralConfig& cfg);

// n noisy samples with theta ~ U[0, theta_max], noise ~ N(0, sigma^2 I).
std::vector<Vec> sample_spiral(Rng& rng, int n, const SpiralConfig& cfg);

// Minimum Euclidean distance from a point to the noiseless curve: coarse
// theta scan at grid_resolution, then golden-section refinement in the
// bracketing interval.
double min_dist_to_spiral(const Vec& point, const SpiralConfig& cfg);

// Rejection-samples uniform [-1,1]^2 points whose curve distance exceeds the
// buffer. Throws if the acceptance rate collapses (misconfigured buffer).
std::vector<Vec> sample_ood(Rng& rng, int n, const SpiralConfig& cfg);

// Single draws from the task's generative process; dataset builders and the
// streaming training source share these, so a materialized dataset is exactly
// a prefix of the training stream under the same rng.
void draw_regression_sample(Rng& rng, const SpiralConfig& cfg, Vec& cond, Vec& target);
void draw_generation_sample(Rng& rng, const SpiralConfig& cfg, Vec& cond, Vec& target);

TaskDataset build_regression_dataset(Rng& rng, int n, const SpiralConfig& cfg);
TaskDataset build_generation_dataset(Rng& rng, int n, const SpiralConfig& cfg);
TaskDataset build_task_dataset(Task task, Rng& rng, int n, const SpiralConfig& cfg);

}  // namespace diflo
