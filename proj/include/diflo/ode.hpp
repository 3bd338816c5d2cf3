#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diflo/net.hpp"
#include "diflo/rng.hpp"

namespace diflo {

enum class OdeMethod { euler, rk4 };

OdeMethod ode_method_from_string(const std::string& name);
std::string to_string(OdeMethod method);

// Time-stamped states of one integration run over t in [0,1], uniform step
// 1/N. states.front() is the initial noise sample, states.back() the
// generated endpoint.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;

    const Vec& x0() const { return states.front(); }
    const Vec& x1_hat() const { return states.back(); }
};

// Batched trajectories: states[i] holds row-per-sample states at times[i].
struct TrajectoryBatch {
    std::vector<double> times;
    std::vector<Mat> states;

    int batch_size() const { return static_cast<int>(states.front().rows()); }
};

Trajectory integrate(const MlpParams& params, const Vec& x0, const Vec& c, int steps,
                     OdeMethod method);
TrajectoryBatch integrate_batch(const MlpParams& params, const Mat& x0, const Mat& c,
                                int steps, OdeMethod method);

// Accumulated per-step L1 gap (averaged over state dimensions) between the
// trajectory and the straight chord from its start to its generated endpoint.
// Near zero for straight flows, large under induced divergence.
double dot_score(const Trajectory& traj);
Vec dot_score_batch(const TrajectoryBatch& traj);

// Draws x0 from the standard normal, integrates under the condition, and
// returns the generated endpoint together with its divergence score.
std::pair<Vec, double> score_condition(const MlpParams& params, const Vec& c, int steps,
                                       OdeMethod method, Rng& rng);

// Monte-Carlo conditional mean over independent trajectory endpoints.
Vec predict_mean(const MlpParams& params, const Vec& c, int n_samples, int steps,
                 OdeMethod method, Rng& rng);

struct LikelihoodEstimate {
    double log_p = 0.0;
    int n_probes = 0;
    double divergence_integral = 0.0;
};

// Log-density of x1 under the flow, via reverse Euler integration to t=0 and
// a Rademacher-probe divergence estimate accumulated per step:
// log_p = log N(x_0; 0, I) - integral of div v dt.
LikelihoodEstimate log_likelihood(const MlpParams& params, const Vec& x1, const Vec& c,
                                  int steps, int n_probes, Rng& rng);
std::vector<LikelihoodEstimate> log_likelihood_batch(const MlpParams& params, const Mat& x1,
                                                     const Mat& c, int steps, int n_probes,
                                                     Rng& rng);

// Divergence scores over a resolution x resolution grid of 2-D conditions
// spanning [lo, hi]^2 inclusive; entry (iy, ix) pairs with (cx[ix], cy[iy]).
// One shared x0 (drawn once from rng) keeps the landscape visually coherent.
Mat landscape_grid(const MlpParams& params, double lo, double hi, int resolution, int steps,
                   OdeMethod method, Rng& rng);

double standard_normal_logpdf(const Vec& x);

}  // namespace diflo
