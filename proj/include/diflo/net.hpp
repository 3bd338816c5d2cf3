#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "diflo/rng.hpp"

namespace diflo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense time-conditioned velocity network: input is the concatenation
// [state | condition | t], hidden layers use SiLU, the output layer is linear
// and has the state's dimension. widths[0] = state_dim + cond_dim + 1.
struct MlpParams {
    std::vector<Mat> weights;  // layer l: widths[l+1] x widths[l]
    std::vector<Vec> biases;   // layer l: widths[l+1]
    std::vector<int> widths;   // size = layer count + 1

    int layer_count() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }

    void check_consistent() const;
};

// Gradients (or any other accumulator) shaped like a parameter set.
struct MlpGrads {
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    static MlpGrads zeros_like(const MlpParams& params);
    void add(const MlpGrads& other);
    void scale(double factor);
};

// Per-layer pre- and post-activation values captured by a forward pass; rows
// are batch samples. Required by the backward pass, which rejects caches whose
// shapes do not match the parameter set.
struct ForwardCache {
    Mat input;             // n x widths[0]
    std::vector<Mat> pre;  // layer l: n x widths[l+1]
    std::vector<Mat> post;

    int batch_size() const { return static_cast<int>(input.rows()); }
};

struct BackwardResult {
    MlpGrads param_grads;
    Mat input_grads;  // n x widths[0]
};

// He-uniform weights (bound sqrt(6/fan_in)), zero biases. depth = number of
// hidden layers of the given width.
MlpParams init_params(Rng& rng, int state_dim, int cond_dim, int hidden, int depth);

// Batched forward: rows of X are already-concatenated inputs. Returns n x out.
Mat forward_batch(const MlpParams& params, const Mat& X, ForwardCache* cache = nullptr);

// Reverse-mode gradients of <cotangents, output> summed over the batch.
BackwardResult backward_batch(const MlpParams& params, const ForwardCache& cache,
                              const Mat& cotangents);

// Input gradients only; skips the parameter-gradient GEMMs.
Mat backward_input_batch(const MlpParams& params, const ForwardCache& cache,
                         const Mat& cotangents);

// Single-sample wrappers over the batched kernels.
Vec pack_input(const Vec& x_t, const Vec& c, double t);
Vec forward(const MlpParams& params, const Vec& x_t, const Vec& c, double t,
            ForwardCache* cache = nullptr);
BackwardResult backward(const MlpParams& params, const ForwardCache& cache,
                        const Vec& cotangent);

// probe . (dv/dx_t) . probe with the condition and time held fixed.
double vjp_state(const MlpParams& params, const Vec& x_t, const Vec& c, double t,
                 const Vec& probe);

// Decoupled-weight-decay Adam with bias correction.
struct AdamwState {
    MlpGrads m;
    MlpGrads v;
    std::int64_t step = 0;

    static AdamwState zeros_like(const MlpParams& params);
};

void adamw_step(MlpParams& params, const MlpGrads& grads, AdamwState& state, double lr,
                double beta1, double beta2, double eps, double weight_decay);

}  // namespace diflo
