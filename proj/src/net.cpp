#include "diflo/net.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diflo {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double silu(double z) { return z * sigmoid(z); }

// Analytic derivative: sigma(z) * (1 + z * (1 - sigma(z))).
double silu_grad(double z) {
    const double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

void check_cache_matches(const MlpParams& params, const ForwardCache& cache) {
    const auto layers = static_cast<std::size_t>(params.layer_count());
    if (cache.pre.size() != layers || cache.post.size() != layers) {
        throw std::invalid_argument("forward cache does not match parameter layer count");
    }
    if (cache.input.cols() != params.input_dim()) {
        throw std::invalid_argument("forward cache input width does not match parameters");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        if (cache.pre[l].cols() != params.widths[l + 1] || cache.pre[l].rows() != cache.input.rows()) {
            throw std::invalid_argument("stale forward cache: layer shape mismatch");
        }
    }
}

}  // namespace

void MlpParams::check_consistent() const {
    if (weights.empty() || weights.size() != biases.size() || widths.size() != weights.size() + 1) {
        throw std::invalid_argument("MlpParams: empty or inconsistent layer lists");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l] ||
            biases[l].size() != widths[l + 1]) {
            throw std::invalid_argument("MlpParams: layer " + std::to_string(l) + " shape mismatch");
        }
        if (!weights[l].allFinite() || !biases[l].allFinite()) {
            throw std::invalid_argument("MlpParams: non-finite entries in layer " + std::to_string(l));
        }
    }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
    MlpGrads g;
    g.weights.reserve(params.weights.size());
    g.biases.reserve(params.biases.size());
    for (const auto& w : params.weights) g.weights.push_back(Mat::Zero(w.rows(), w.cols()));
    for (const auto& b : params.biases) g.biases.push_back(Vec::Zero(b.size()));
    return g;
}

void MlpGrads::add(const MlpGrads& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
}

void MlpGrads::scale(double factor) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= factor;
        biases[l] *= factor;
    }
}

MlpParams init_params(Rng& rng, int state_dim, int cond_dim, int hidden, int depth) {
    if (state_dim < 1 || cond_dim < 0 || hidden < 1 || depth < 1) {
        throw std::invalid_argument("init_params: nonpositive dimension");
    }
    MlpParams params;
    params.widths.push_back(state_dim + cond_dim + 1);
    for (int i = 0; i < depth; ++i) params.widths.push_back(hidden);
    params.widths.push_back(state_dim);

    for (std::size_t l = 0; l + 1 < params.widths.size(); ++l) {
        const int fan_in = params.widths[l];
        const int fan_out = params.widths[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Mat w(fan_out, fan_in);
        // Row-major fill order keeps initialization independent of the
        // matrix storage layout.
        for (int r = 0; r < fan_out; ++r) {
            for (int col = 0; col < fan_in; ++col) w(r, col) = rng.uniform(-bound, bound);
        }
        params.weights.push_back(std::move(w));
        params.biases.push_back(Vec::Zero(fan_out));
    }
    return params;
}

Mat forward_batch(const MlpParams& params, const Mat& X, ForwardCache* cache) {
    if (X.cols() != params.input_dim()) {
        throw std::invalid_argument("forward: input width " + std::to_string(X.cols()) +
                                    " does not match network input " +
                                    std::to_string(params.input_dim()));
    }
    if (!X.allFinite()) throw std::invalid_argument("forward: non-finite input");

    const int layers = params.layer_count();
    if (cache) {
        cache->input = X;
        cache->pre.assign(layers, Mat());
        cache->post.assign(layers, Mat());
    }

    Mat activ = X;
    for (int l = 0; l < layers; ++l) {
        Mat z = activ * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        Mat a = (l + 1 < layers) ? z.unaryExpr([](double v) { return silu(v); }) : z;
        if (cache) {
            cache->pre[l] = std::move(z);
            cache->post[l] = a;
        }
        activ = std::move(a);
    }
    return activ;
}

BackwardResult backward_batch(const MlpParams& params, const ForwardCache& cache,
                              const Mat& cotangents) {
    check_cache_matches(params, cache);
    const int layers = params.layer_count();
    if (cotangents.rows() != cache.input.rows() || cotangents.cols() != params.output_dim()) {
        throw std::invalid_argument("backward: cotangent shape mismatch");
    }

    BackwardResult result;
    result.param_grads.weights.resize(layers);
    result.param_grads.biases.resize(layers);

    Mat delta = cotangents;  // d(loss)/d(post[l]); output layer is linear
    for (int l = layers - 1; l >= 0; --l) {
        if (l + 1 < layers) {
            delta = delta.cwiseProduct(cache.pre[l].unaryExpr([](double v) { return silu_grad(v); }));
        }
        const Mat& below = (l == 0) ? cache.input : cache.post[l - 1];
        result.param_grads.weights[l].noalias() = delta.transpose() * below;
        result.param_grads.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = delta * params.weights[l];
        } else {
            result.input_grads.noalias() = delta * params.weights[0];
        }
    }
    return result;
}

Mat backward_input_batch(const MlpParams& params, const ForwardCache& cache,
                         const Mat& cotangents) {
    check_cache_matches(params, cache);
    const int layers = params.layer_count();
    if (cotangents.rows() != cache.input.rows() || cotangents.cols() != params.output_dim()) {
        throw std::invalid_argument("backward: cotangent shape mismatch");
    }
    Mat delta = cotangents;
    for (int l = layers - 1; l >= 0; --l) {
        if (l + 1 < layers) {
            delta = delta.cwiseProduct(cache.pre[l].unaryExpr([](double v) { return silu_grad(v); }));
        }
        delta = delta * params.weights[l];
    }
    return delta;
}

Vec pack_input(const Vec& x_t, const Vec& c, double t) {
    Vec in(x_t.size() + c.size() + 1);
    in.head(x_t.size()) = x_t;
    in.segment(x_t.size(), c.size()) = c;
    in(in.size() - 1) = t;
    return in;
}

Vec forward(const MlpParams& params, const Vec& x_t, const Vec& c, double t,
            ForwardCache* cache) {
    const Vec in = pack_input(x_t, c, t);
    return forward_batch(params, in.transpose(), cache).transpose();
}

BackwardResult backward(const MlpParams& params, const ForwardCache& cache,
                        const Vec& cotangent) {
    return backward_batch(params, cache, cotangent.transpose());
}

double vjp_state(const MlpParams& params, const Vec& x_t, const Vec& c, double t,
                 const Vec& probe) {
    if (probe.size() != x_t.size()) {
        throw std::invalid_argument("vjp_state: probe dimension mismatch");
    }
    ForwardCache cache;
    forward(params, x_t, c, t, &cache);
    const Mat input_grads = backward_input_batch(params, cache, probe.transpose());
    return input_grads.row(0).head(x_t.size()).dot(probe);
}

AdamwState AdamwState::zeros_like(const MlpParams& params) {
    AdamwState state;
    state.m = MlpGrads::zeros_like(params);
    state.v = MlpGrads::zeros_like(params);
    state.step = 0;
    return state;
}

void adamw_step(MlpParams& params, const MlpGrads& grads, AdamwState& state, double lr,
                double beta1, double beta2, double eps, double weight_decay) {
    if (lr <= 0.0) throw std::invalid_argument("adamw_step: nonpositive learning rate");
    if (eps <= 0.0) throw std::invalid_argument("adamw_step: nonpositive epsilon");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            const auto m_hat = m / bc1;
            const auto v_hat = v / bc2;
            p -= lr * weight_decay * p;
            p.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
        };
        update(params.weights[l], state.m.weights[l], state.v.weights[l], grads.weights[l]);
        update(params.biases[l], state.m.biases[l], state.v.biases[l], grads.biases[l]);
    }
}

}  // namespace diflo
