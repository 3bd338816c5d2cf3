#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "diflo/net.hpp"
#include "diflo/ode.hpp"
#include "diflo/rng.hpp"

namespace diflo {

enum class NegativeMode { pgd, uniform_random, none };

NegativeMode negative_mode_from_string(const std::string& name);
std::string to_string(NegativeMode mode);

// One training tuple on the straight transport path:
// x_t = (1-t) x0 + t x1, u_t = x1 - x0.
struct FlowSample {
    Vec x0;
    Vec x1;
    Vec c;
    double t = 0.0;
    Vec x_t;
    Vec u_t;
};

struct TrainConfig {
    double lambda_repel = 0.1;
    double beta_curve = 0.1;
    double margin_r = 1.0;
    double margin_c = 0.9;
    int pgd_steps = 3;
    double pgd_eta = 0.1;
    double pgd_epsilon = 0.1;
    NegativeMode negative_mode = NegativeMode::pgd;
    double lr = 3e-4;
    double weight_decay = 1e-3;
    int batch_size = 256;
    int iterations = 8000;
    std::uint64_t seed = 42;
    int ode_steps = 50;
    OdeMethod ode_method = OdeMethod::rk4;
    double alpha = 0.05;

    void validate() const;
};

struct LossBreakdown {
    double fm = 0.0;
    double repel = 0.0;
    double curve = 0.0;
    double total = 0.0;
};

FlowSample make_flow_sample(Rng& rng, const Vec& x1, const Vec& c);

// Squared L2 norm of (v_hat - u_t), summed over dimensions.
double fm_loss(const Vec& v_hat, const Vec& u_t);

// 1 - cos(angle); returns 1 when either norm is below 1e-12.
double cosine_distance(const Vec& a, const Vec& b);

// Hinge on the difference of Euclidean velocity errors.
double repel_loss(const Vec& u_t, const Vec& v_pos, const Vec& v_neg, double margin_r);

// Hinge on the difference of cosine distances to the target velocity.
double curve_loss(const Vec& u_t, const Vec& v_pos, const Vec& v_neg, double margin_c);

// Sign-gradient ascent on the pointwise FM loss with respect to the condition,
// L-inf projected onto the epsilon ball around sample.c after every step.
// steps = 0 returns c unchanged. The result is treated as a constant during
// training (no gradient flows through the mining).
Vec pgd_mine(const MlpParams& params, const FlowSample& sample, int steps, double eta,
             double epsilon);

// Batch-averaged training objective and its parameter gradients. The FM
// component is the per-dimension mean of the squared velocity error (the
// hinges use raw norms); total = fm + lambda*repel + beta*curve. rng feeds
// uniform-random negatives only; it is untouched in the other modes.
std::pair<LossBreakdown, MlpGrads> diflo_batch_loss(const MlpParams& params,
                                                    const std::vector<FlowSample>& batch,
                                                    const TrainConfig& cfg, Rng& rng);

// Streaming source of (target, condition) pairs.
class PairSource {
public:
    virtual ~PairSource() = default;
    virtual int state_dim() const = 0;
    virtual int cond_dim() const = 0;
    virtual void sample(Rng& rng, Vec& x1, Vec& c) const = 0;
};

// Resamples uniformly (with replacement) from a fixed list of pairs.
class VectorPairSource : public PairSource {
public:
    explicit VectorPairSource(std::vector<std::pair<Vec, Vec>> pairs);
    int state_dim() const override;
    int cond_dim() const override;
    void sample(Rng& rng, Vec& x1, Vec& c) const override;

private:
    std::vector<std::pair<Vec, Vec>> pairs_;
};

struct TrainResult {
    MlpParams params;
    std::vector<LossBreakdown> history;
};

// Full training loop: fresh minibatch per iteration, AdamW updates, loss
// history per iteration. The master seed spawns independent streams (data,
// init, batch, pgd) so toggling negatives never shifts the other draws.
TrainResult train(const PairSource& data, int hidden, int depth, const TrainConfig& cfg,
                  std::uint64_t master_seed);

// Monte-Carlo estimate of the expected squared deviation of the learned field
// from the straight transport velocity over the given (target, condition)
// pairs, resampling (x0, t) n_mc times per pair.
double transport_energy(const MlpParams& params, const std::vector<std::pair<Vec, Vec>>& pairs,
                        int n_mc, Rng& rng);

// Same estimate over any velocity field (rows of the input are [x_t | c | t]);
// lets tests drive the estimator with exact fields.
using FieldFn = std::function<Mat(const Mat& inputs)>;
double transport_energy_field(const FieldFn& field, int state_dim,
                              const std::vector<std::pair<Vec, Vec>>& pairs, int n_mc, Rng& rng);

}  // namespace diflo
