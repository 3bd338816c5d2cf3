#include "diflo/ode.hpp"

#include <cmath>
#include <stdexcept>

namespace diflo {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

Mat eval_field(const MlpParams& params, const Mat& x, const Mat& c, double t) {
    const auto n = x.rows();
    Mat in(n, x.cols() + c.cols() + 1);
    in.leftCols(x.cols()) = x;
    in.middleCols(x.cols(), c.cols()) = c;
    in.rightCols(1).setConstant(t);
    return forward_batch(params, in);
}

void check_state_finite(const Mat& x, int step) {
    if (!x.allFinite()) {
        throw std::runtime_error("integrate: non-finite state at step " + std::to_string(step));
    }
}

}  // namespace

OdeMethod ode_method_from_string(const std::string& name) {
    if (name == "euler") return OdeMethod::euler;
    if (name == "rk4") return OdeMethod::rk4;
    throw std::invalid_argument("unknown ODE method: " + name);
}

std::string to_string(OdeMethod method) {
    return method == OdeMethod::euler ? "euler" : "rk4";
}

TrajectoryBatch integrate_batch(const MlpParams& params, const Mat& x0, const Mat& c,
                                int steps, OdeMethod method) {
    if (steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
    if (x0.rows() != c.rows()) throw std::invalid_argument("integrate: batch size mismatch");

    const double dt = 1.0 / steps;
    TrajectoryBatch traj;
    traj.times.resize(steps + 1);
    traj.states.reserve(steps + 1);
    for (int i = 0; i <= steps; ++i) traj.times[i] = static_cast<double>(i) / steps;

    Mat x = x0;
    check_state_finite(x, 0);
    traj.states.push_back(x);
    for (int i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        if (method == OdeMethod::euler) {
            x += dt * eval_field(params, x, c, t);
        } else {
            const Mat k1 = eval_field(params, x, c, t);
            const Mat k2 = eval_field(params, x + (0.5 * dt) * k1, c, t + 0.5 * dt);
            const Mat k3 = eval_field(params, x + (0.5 * dt) * k2, c, t + 0.5 * dt);
            const Mat k4 = eval_field(params, x + dt * k3, c, t + dt);
            x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        check_state_finite(x, i + 1);
        traj.states.push_back(x);
    }
    return traj;
}

Trajectory integrate(const MlpParams& params, const Vec& x0, const Vec& c, int steps,
                     OdeMethod method) {
    const TrajectoryBatch batch =
        integrate_batch(params, x0.transpose(), c.transpose(), steps, method);
    Trajectory traj;
    traj.times = batch.times;
    traj.states.reserve(batch.states.size());
    for (const Mat& s : batch.states) traj.states.push_back(s.row(0).transpose());
    return traj;
}

Vec dot_score_batch(const TrajectoryBatch& traj) {
    const auto points = traj.states.size();
    if (points < 2) throw std::invalid_argument("dot_score: trajectory needs at least 2 points");
    const Mat& start = traj.states.front();
    const Mat& end = traj.states.back();
    const double dims = static_cast<double>(start.cols());

    Vec score = Vec::Zero(start.rows());
    for (std::size_t i = 0; i < points; ++i) {
        const double t = traj.times[i];
        // Chord point at t: (1-t) x0 + t x1_hat. Endpoints contribute zero.
        const Mat chord = (1.0 - t) * start + t * end;
        score += (traj.states[i] - chord).cwiseAbs().rowwise().sum() / dims;
    }
    return score;
}

double dot_score(const Trajectory& traj) {
    if (traj.states.size() < 2) {
        throw std::invalid_argument("dot_score: trajectory needs at least 2 points");
    }
    TrajectoryBatch batch;
    batch.times = traj.times;
    batch.states.reserve(traj.states.size());
    for (const Vec& s : traj.states) batch.states.push_back(s.transpose());
    return dot_score_batch(batch)(0);
}

std::pair<Vec, double> score_condition(const MlpParams& params, const Vec& c, int steps,
                                       OdeMethod method, Rng& rng) {
    const int dim = params.output_dim();
    Vec x0(dim);
    for (int i = 0; i < dim; ++i) x0(i) = rng.normal();
    const Trajectory traj = integrate(params, x0, c, steps, method);
    return {traj.x1_hat(), dot_score(traj)};
}

Vec predict_mean(const MlpParams& params, const Vec& c, int n_samples, int steps,
                 OdeMethod method, Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("predict_mean: n_samples must be >= 1");
    const int dim = params.output_dim();
    Mat x0(n_samples, dim);
    for (int s = 0; s < n_samples; ++s) {
        for (int i = 0; i < dim; ++i) x0(s, i) = rng.normal();
    }
    Mat conds(n_samples, c.size());
    conds.rowwise() = c.transpose();
    const TrajectoryBatch traj = integrate_batch(params, x0, conds, steps, method);
    // Fixed summation order; the mean is independent of sample permutation up
    // to round-off.
    return traj.states.back().colwise().sum().transpose() / static_cast<double>(n_samples);
}

double standard_normal_logpdf(const Vec& x) {
    return -0.5 * (static_cast<double>(x.size()) * kLogTwoPi + x.squaredNorm());
}

std::vector<LikelihoodEstimate> log_likelihood_batch(const MlpParams& params, const Mat& x1,
                                                     const Mat& c, int steps, int n_probes,
                                                     Rng& rng) {
    if (steps < 1) throw std::invalid_argument("log_likelihood: steps must be >= 1");
    if (n_probes < 1) throw std::invalid_argument("log_likelihood: n_probes must be >= 1");
    const auto n = x1.rows();
    const auto dim = x1.cols();
    const double dt = 1.0 / steps;

    // One probe set per sample, fixed across time steps: the expectation over
    // probes sits outside the time integral.
    std::vector<Mat> probes(n_probes, Mat(n, dim));
    for (Eigen::Index s = 0; s < n; ++s) {
        for (int p = 0; p < n_probes; ++p) {
            for (Eigen::Index d = 0; d < dim; ++d) probes[p](s, d) = rng.rademacher();
        }
    }

    Vec divergence = Vec::Zero(n);
    Mat x = x1;
    Mat in(n, dim + c.cols() + 1);
    for (int i = steps; i >= 1; --i) {
        const double t = static_cast<double>(i) / steps;
        in.leftCols(dim) = x;
        in.middleCols(dim, c.cols()) = c;
        in.rightCols(1).setConstant(t);
        ForwardCache cache;
        const Mat v = forward_batch(params, in, &cache);

        Vec trace_sum = Vec::Zero(n);
        for (int p = 0; p < n_probes; ++p) {
            const Mat grads = backward_input_batch(params, cache, probes[p]);
            trace_sum += grads.leftCols(dim).cwiseProduct(probes[p]).rowwise().sum();
        }
        divergence += (dt / n_probes) * trace_sum;

        x -= dt * v;
        check_state_finite(x, i - 1);
    }

    std::vector<LikelihoodEstimate> out(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        out[s].n_probes = n_probes;
        out[s].divergence_integral = divergence(s);
        out[s].log_p = standard_normal_logpdf(x.row(s).transpose()) - divergence(s);
    }
    return out;
}

LikelihoodEstimate log_likelihood(const MlpParams& params, const Vec& x1, const Vec& c,
                                  int steps, int n_probes, Rng& rng) {
    return log_likelihood_batch(params, x1.transpose(), c.transpose(), steps, n_probes, rng)[0];
}

Mat landscape_grid(const MlpParams& params, double lo, double hi, int resolution, int steps,
                   OdeMethod method, Rng& rng) {
    if (resolution < 2) throw std::invalid_argument("landscape_grid: resolution must be >= 2");
    const int dim = params.output_dim();
    if (params.input_dim() != dim + 3) {
        throw std::invalid_argument("landscape_grid: requires a 2-D condition space");
    }

    Vec x0(dim);
    for (int i = 0; i < dim; ++i) x0(i) = rng.normal();

    Mat scores(resolution, resolution);
    const int n = resolution * resolution;
    Mat conds(n, 2);
    for (int iy = 0; iy < resolution; ++iy) {
        const double cy = lo + (hi - lo) * iy / (resolution - 1);
        for (int ix = 0; ix < resolution; ++ix) {
            const double cx = lo + (hi - lo) * ix / (resolution - 1);
            conds(iy * resolution + ix, 0) = cx;
            conds(iy * resolution + ix, 1) = cy;
        }
    }

    // Chunked so dense trajectory storage stays bounded at high resolutions.
    const int chunk = 1024;
    Vec flat(n);
    for (int begin = 0; begin < n; begin += chunk) {
        const int count = std::min(chunk, n - begin);
        Mat x0_rows(count, dim);
        x0_rows.rowwise() = x0.transpose();
        flat.segment(begin, count) = dot_score_batch(
            integrate_batch(params, x0_rows, conds.middleRows(begin, count), steps, method));
    }
    for (int iy = 0; iy < resolution; ++iy) {
        for (int ix = 0; ix < resolution; ++ix) scores(iy, ix) = flat(iy * resolution + ix);
    }
    return scores;
}

}  // namespace diflo
