#include "diflo/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diflo/parallel.hpp"

namespace diflo {

namespace {

// Fixed chunk width for batch reductions. Results are combined in chunk order,
// so they do not depend on the worker-pool size.
constexpr int kChunk = 64;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// d/dv of ||v - u||_2, or zero near the kink.
Vec euclidean_dist_grad(const Vec& v, const Vec& u) {
    const Vec diff = v - u;
    const double norm = diff.norm();
    if (norm < 1e-12) return Vec::Zero(v.size());
    return diff / norm;
}

// d/dv of (1 - u.v / (||u|| ||v||)); norms clamped away from zero.
Vec cosine_dist_grad(const Vec& u, const Vec& v) {
    const double nu = std::max(u.norm(), 1e-8);
    const double nv = std::max(v.norm(), 1e-8);
    return -(u / (nu * nv) - (u.dot(v) / (nu * nv * nv * nv)) * v);
}

struct ChunkAccum {
    MlpGrads grads;
    double fm = 0.0;
    double repel = 0.0;
    double curve = 0.0;
};

// Mines negatives for rows [begin, end) of the batch, reusing the positive
// cache for the first ascent step (the search starts at c itself).
Mat mine_negatives_chunk(const MlpParams& params, const std::vector<FlowSample>& batch,
                         std::int64_t begin, std::int64_t end, const Mat& x_pos,
                         const ForwardCache& pos_cache, const Mat& v_pos,
                         const TrainConfig& cfg) {
    const auto n = end - begin;
    const auto d = batch[begin].x1.size();
    const auto k = batch[begin].c.size();

    Mat cond(n, k), cond_lo(n, k), cond_hi(n, k);
    for (std::int64_t i = 0; i < n; ++i) {
        cond.row(i) = batch[begin + i].c.transpose();
    }
    cond_lo = cond.array() - cfg.pgd_epsilon;
    cond_hi = cond.array() + cfg.pgd_epsilon;

    Mat x_cur = x_pos;
    for (int step = 0; step < cfg.pgd_steps; ++step) {
        Mat cotangent(n, d);
        Mat cond_grad;
        if (step == 0) {
            for (std::int64_t i = 0; i < n; ++i) {
                cotangent.row(i) = 2.0 * (v_pos.row(i) - batch[begin + i].u_t.transpose());
            }
            cond_grad = backward_input_batch(params, pos_cache, cotangent).middleCols(d, k);
        } else {
            ForwardCache cache;
            const Mat v = forward_batch(params, x_cur, &cache);
            for (std::int64_t i = 0; i < n; ++i) {
                cotangent.row(i) = 2.0 * (v.row(i) - batch[begin + i].u_t.transpose());
            }
            cond_grad = backward_input_batch(params, cache, cotangent).middleCols(d, k);
        }
        const Mat stepped =
            cond.array() + cfg.pgd_eta * cond_grad.unaryExpr([](double g) { return sign(g); }).array();
        cond = stepped.cwiseMax(cond_lo).cwiseMin(cond_hi);
        x_cur.middleCols(d, k) = cond;
    }
    return cond;
}

}  // namespace

NegativeMode negative_mode_from_string(const std::string& name) {
    if (name == "pgd") return NegativeMode::pgd;
    if (name == "uniform_random") return NegativeMode::uniform_random;
    if (name == "none") return NegativeMode::none;
    throw std::invalid_argument("unknown negative mode: " + name);
}

std::string to_string(NegativeMode mode) {
    switch (mode) {
        case NegativeMode::pgd: return "pgd";
        case NegativeMode::uniform_random: return "uniform_random";
        default: return "none";
    }
}

void TrainConfig::validate() const {
    if (lambda_repel < 0.0 || beta_curve < 0.0) {
        throw std::invalid_argument("TrainConfig: contrastive weights must be >= 0");
    }
    if (margin_r < 0.0 || margin_c < 0.0) {
        throw std::invalid_argument("TrainConfig: margins must be >= 0");
    }
    if (pgd_steps < 0) throw std::invalid_argument("TrainConfig: pgd_steps must be >= 0");
    if (negative_mode == NegativeMode::pgd && pgd_epsilon <= 0.0) {
        throw std::invalid_argument("TrainConfig: pgd_epsilon must be > 0 in pgd mode");
    }
    if (alpha <= 0.0 || alpha >= 1.0) {
        throw std::invalid_argument("TrainConfig: alpha must lie in (0, 1)");
    }
    if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
    if (ode_steps < 1) throw std::invalid_argument("TrainConfig: ode_steps must be >= 1");
}

FlowSample make_flow_sample(Rng& rng, const Vec& x1, const Vec& c) {
    if (!x1.allFinite() || !c.allFinite()) {
        throw std::invalid_argument("make_flow_sample: non-finite input");
    }
    FlowSample s;
    s.x1 = x1;
    s.c = c;
    s.x0.resize(x1.size());
    for (Eigen::Index i = 0; i < x1.size(); ++i) s.x0(i) = rng.normal();
    s.t = rng.uniform();
    s.x_t = (1.0 - s.t) * s.x0 + s.t * s.x1;
    s.u_t = s.x1 - s.x0;
    return s;
}

double fm_loss(const Vec& v_hat, const Vec& u_t) {
    if (v_hat.size() != u_t.size()) throw std::invalid_argument("fm_loss: dimension mismatch");
    return (v_hat - u_t).squaredNorm();
}

double cosine_distance(const Vec& a, const Vec& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) return 1.0;
    return 1.0 - a.dot(b) / (na * nb);
}

double repel_loss(const Vec& u_t, const Vec& v_pos, const Vec& v_neg, double margin_r) {
    if (u_t.size() != v_pos.size() || u_t.size() != v_neg.size()) {
        throw std::invalid_argument("repel_loss: dimension mismatch");
    }
    return std::max((u_t - v_pos).norm() - (u_t - v_neg).norm() + margin_r, 0.0);
}

double curve_loss(const Vec& u_t, const Vec& v_pos, const Vec& v_neg, double margin_c) {
    if (u_t.size() != v_pos.size() || u_t.size() != v_neg.size()) {
        throw std::invalid_argument("curve_loss: dimension mismatch");
    }
    return std::max(cosine_distance(u_t, v_pos) - cosine_distance(u_t, v_neg) + margin_c, 0.0);
}

Vec pgd_mine(const MlpParams& params, const FlowSample& sample, int steps, double eta,
             double epsilon) {
    if (steps == 0) return sample.c;
    if (eta <= 0.0 || epsilon <= 0.0) {
        throw std::invalid_argument("pgd_mine: eta and epsilon must be > 0");
    }
    TrainConfig cfg;
    cfg.pgd_steps = steps;
    cfg.pgd_eta = eta;
    cfg.pgd_epsilon = epsilon;

    const std::vector<FlowSample> batch{sample};
    const Mat x_pos = pack_input(sample.x_t, sample.c, sample.t).transpose();
    ForwardCache cache;
    const Mat v_pos = forward_batch(params, x_pos, &cache);
    return mine_negatives_chunk(params, batch, 0, 1, x_pos, cache, v_pos, cfg).row(0).transpose();
}

std::pair<LossBreakdown, MlpGrads> diflo_batch_loss(const MlpParams& params,
                                                    const std::vector<FlowSample>& batch,
                                                    const TrainConfig& cfg, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("diflo_batch_loss: empty batch");
    const auto n = static_cast<std::int64_t>(batch.size());
    const auto d = batch[0].x1.size();
    const auto k = batch[0].c.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    const bool negatives =
        cfg.negative_mode != NegativeMode::none && (cfg.lambda_repel > 0.0 || cfg.beta_curve > 0.0);

    // Uniform negatives are drawn up front in sample order, outside the
    // (possibly threaded) chunk loop.
    Mat uniform_neg;
    if (negatives && cfg.negative_mode == NegativeMode::uniform_random) {
        uniform_neg.resize(n, k);
        for (std::int64_t i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < k; ++j) uniform_neg(i, j) = rng.uniform(-1.0, 1.0);
        }
    }

    const auto n_chunks = (n + kChunk - 1) / kChunk;
    std::vector<ChunkAccum> accums(n_chunks);

    parallel_chunks(n, kChunk, [&](std::int64_t ci, std::int64_t begin, std::int64_t end) {
        const auto rows = end - begin;
        Mat x_pos(rows, d + k + 1);
        Mat targets(rows, d);
        for (std::int64_t i = 0; i < rows; ++i) {
            const FlowSample& s = batch[begin + i];
            if (s.x1.size() != d || s.c.size() != k) {
                throw std::invalid_argument("diflo_batch_loss: inconsistent sample dims");
            }
            x_pos.row(i) = pack_input(s.x_t, s.c, s.t).transpose();
            targets.row(i) = s.u_t.transpose();
        }

        ForwardCache pos_cache;
        const Mat v_pos = forward_batch(params, x_pos, &pos_cache);

        Mat v_neg;
        ForwardCache neg_cache;
        if (negatives) {
            Mat neg_cond;
            if (cfg.negative_mode == NegativeMode::pgd) {
                neg_cond =
                    mine_negatives_chunk(params, batch, begin, end, x_pos, pos_cache, v_pos, cfg);
            } else {
                neg_cond = uniform_neg.middleRows(begin, rows);
            }
            Mat x_neg = x_pos;
            x_neg.middleCols(d, k) = neg_cond;
            v_neg = forward_batch(params, x_neg, &neg_cache);
        }

        ChunkAccum& acc = accums[ci];
        Mat g_pos = Mat::Zero(rows, d);
        Mat g_neg = negatives ? Mat::Zero(rows, d) : Mat();
        const double inv_dim = 1.0 / static_cast<double>(d);
        for (std::int64_t i = 0; i < rows; ++i) {
            const Vec u = targets.row(i).transpose();
            const Vec vp = v_pos.row(i).transpose();
            // The objective's FM component is the per-dimension mean of the
            // squared velocity error; the hinge terms use raw norms.
            acc.fm += fm_loss(vp, u) * inv_dim;
            g_pos.row(i) = (2.0 * inv_n * inv_dim) * (vp - u).transpose();

            if (!negatives) continue;
            const Vec vn = v_neg.row(i).transpose();

            const double repel = repel_loss(u, vp, vn, cfg.margin_r);
            acc.repel += repel;
            if (repel > 0.0 && cfg.lambda_repel > 0.0) {
                g_pos.row(i) +=
                    (cfg.lambda_repel * inv_n) * euclidean_dist_grad(vp, u).transpose();
                g_neg.row(i) -=
                    (cfg.lambda_repel * inv_n) * euclidean_dist_grad(vn, u).transpose();
            }

            const double curve = curve_loss(u, vp, vn, cfg.margin_c);
            acc.curve += curve;
            if (curve > 0.0 && cfg.beta_curve > 0.0) {
                g_pos.row(i) += (cfg.beta_curve * inv_n) * cosine_dist_grad(u, vp).transpose();
                g_neg.row(i) -= (cfg.beta_curve * inv_n) * cosine_dist_grad(u, vn).transpose();
            }
        }

        acc.grads = backward_batch(params, pos_cache, g_pos).param_grads;
        if (negatives) {
            acc.grads.add(backward_batch(params, neg_cache, g_neg).param_grads);
        }
    });

    LossBreakdown loss;
    MlpGrads grads = MlpGrads::zeros_like(params);
    for (const ChunkAccum& acc : accums) {
        loss.fm += acc.fm;
        loss.repel += acc.repel;
        loss.curve += acc.curve;
        grads.add(acc.grads);
    }
    loss.fm *= inv_n;
    loss.repel *= inv_n;
    loss.curve *= inv_n;
    loss.total = loss.fm + cfg.lambda_repel * loss.repel + cfg.beta_curve * loss.curve;
    return {loss, std::move(grads)};
}

VectorPairSource::VectorPairSource(std::vector<std::pair<Vec, Vec>> pairs)
    : pairs_(std::move(pairs)) {
    if (pairs_.empty()) throw std::invalid_argument("VectorPairSource: empty dataset");
}

int VectorPairSource::state_dim() const { return static_cast<int>(pairs_[0].first.size()); }
int VectorPairSource::cond_dim() const { return static_cast<int>(pairs_[0].second.size()); }

void VectorPairSource::sample(Rng& rng, Vec& x1, Vec& c) const {
    const auto idx = rng.uniform_index(pairs_.size());
    x1 = pairs_[idx].first;
    c = pairs_[idx].second;
}

TrainResult train(const PairSource& data, int hidden, int depth, const TrainConfig& cfg,
                  std::uint64_t master_seed) {
    cfg.validate();
    const Rng master(master_seed);
    Rng data_rng = master.fork("data");
    Rng init_rng = master.fork("init");
    Rng batch_rng = master.fork("batch");
    Rng pgd_rng = master.fork("pgd");

    TrainResult result;
    result.params = init_params(init_rng, data.state_dim(), data.cond_dim(), hidden, depth);
    result.history.reserve(cfg.iterations);

    AdamwState opt = AdamwState::zeros_like(result.params);
    std::vector<FlowSample> batch;
    batch.reserve(cfg.batch_size);

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        batch.clear();
        Vec x1, c;
        for (int i = 0; i < cfg.batch_size; ++i) {
            data.sample(data_rng, x1, c);
            batch.push_back(make_flow_sample(batch_rng, x1, c));
        }

        auto [loss, grads] = diflo_batch_loss(result.params, batch, cfg, pgd_rng);
        if (!std::isfinite(loss.total)) {
            throw std::runtime_error(
                "train: non-finite loss at iteration " + std::to_string(iter) +
                " (fm=" + std::to_string(loss.fm) + ", repel=" + std::to_string(loss.repel) +
                ", curve=" + std::to_string(loss.curve) + ")");
        }
        adamw_step(result.params, grads, opt, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
        result.history.push_back(loss);
    }
    return result;
}

double transport_energy_field(const FieldFn& field, int state_dim,
                              const std::vector<std::pair<Vec, Vec>>& pairs, int n_mc, Rng& rng) {
    if (pairs.empty()) throw std::invalid_argument("transport_energy: empty input");
    if (n_mc < 1) throw std::invalid_argument("transport_energy: n_mc must be >= 1");

    const auto d = static_cast<Eigen::Index>(state_dim);
    const auto k = pairs[0].second.size();
    const auto n = static_cast<std::int64_t>(pairs.size()) * n_mc;

    Mat inputs(n, d + k + 1);
    Mat targets(n, d);
    std::int64_t row = 0;
    Vec x0(d);
    for (const auto& [x1, c] : pairs) {
        for (int j = 0; j < n_mc; ++j, ++row) {
            for (Eigen::Index i = 0; i < d; ++i) x0(i) = rng.normal();
            const double t = rng.uniform();
            inputs.row(row).head(d) = ((1.0 - t) * x0 + t * x1).transpose();
            inputs.row(row).segment(d, k) = c.transpose();
            inputs(row, d + k) = t;
            targets.row(row) = (x1 - x0).transpose();
        }
    }

    const auto n_chunks = (n + 255) / 256;
    std::vector<double> sums(n_chunks, 0.0);
    parallel_chunks(n, 256, [&](std::int64_t ci, std::int64_t begin, std::int64_t end) {
        const Mat v = field(inputs.middleRows(begin, end - begin));
        sums[ci] = (v - targets.middleRows(begin, end - begin)).rowwise().squaredNorm().sum();
    });
    double total = 0.0;
    for (const double s : sums) total += s;
    return total / static_cast<double>(n);
}

double transport_energy(const MlpParams& params, const std::vector<std::pair<Vec, Vec>>& pairs,
                        int n_mc, Rng& rng) {
    const FieldFn field = [&params](const Mat& inputs) { return forward_batch(params, inputs); };
    const int d = pairs.empty() ? 0 : static_cast<int>(pairs[0].first.size());
    return transport_energy_field(field, d, pairs, n_mc, rng);
}

}  // namespace diflo
