#include <doctest.h>

#include <cmath>

#include "diflo/flow.hpp"
#include "support/oracles.hpp"

using namespace diflo;
using namespace diflo::testing;

namespace {

// Fixed-pair source for miniature training runs.
class SinglePairSource : public PairSource {
public:
    SinglePairSource(Vec x1, Vec c) : x1_(std::move(x1)), c_(std::move(c)) {}
    int state_dim() const override { return static_cast<int>(x1_.size()); }
    int cond_dim() const override { return static_cast<int>(c_.size()); }
    void sample(Rng&, Vec& x1, Vec& c) const override {
        x1 = x1_;
        c = c_;
    }

private:
    Vec x1_, c_;
};

}  // namespace

TEST_CASE("make_flow_sample endpoints and algebra") {
    Vec x1(2), c(2);
    x1 << 2.0, 4.0;
    c << 0.1, 0.2;

    Rng rng(3);
    FlowSample s = make_flow_sample(rng, x1, c);
    CHECK(s.x_t.isApprox((1.0 - s.t) * s.x0 + s.t * s.x1, 1e-15));
    CHECK(s.u_t.isApprox(s.x1 - s.x0, 1e-15));

    // Forced endpoints.
    s.t = 0.0;
    s.x_t = (1.0 - s.t) * s.x0 + s.t * s.x1;
    CHECK(s.x_t == s.x0);
    s.t = 1.0;
    s.x_t = (1.0 - s.t) * s.x0 + s.t * s.x1;
    CHECK(s.x_t == s.x1);

    // Midpoint arithmetic.
    FlowSample mid;
    mid.x0 = Vec::Zero(2);
    mid.x1 = x1;
    mid.t = 0.5;
    mid.x_t = (1.0 - mid.t) * mid.x0 + mid.t * mid.x1;
    mid.u_t = mid.x1 - mid.x0;
    CHECK(mid.x_t(0) == 1.0);
    CHECK(mid.x_t(1) == 2.0);
    CHECK(mid.u_t == x1);

    // Reconstructing x1 from (x_t, x0, t) for t > 0.
    Rng rng2(4);
    for (int i = 0; i < 50; ++i) {
        const FlowSample r = make_flow_sample(rng2, x1, c);
        if (r.t < 1e-3) continue;
        const Vec recon = (r.x_t - (1.0 - r.t) * r.x0) / r.t;
        CHECK((recon - r.x1).cwiseAbs().maxCoeff() < 1e-10);
    }

    Vec bad = x1;
    bad(0) = std::nan("");
    CHECK_THROWS(make_flow_sample(rng, bad, c));
}

TEST_CASE("fm_loss") {
    Vec a(2), b(2);
    a << 3.0, 4.0;
    b << 0.0, 0.0;
    CHECK(fm_loss(a, a) == 0.0);
    CHECK(fm_loss(b, a) == 25.0);

    Rng rng(6);
    Vec u(7), v(7);
    for (int i = 0; i < 7; ++i) {
        u(i) = rng.normal();
        v(i) = rng.normal();
    }
    double oracle = 0.0;
    for (int i = 0; i < 7; ++i) oracle += (v(i) - u(i)) * (v(i) - u(i));
    CHECK(std::abs(fm_loss(v, u) - oracle) < 1e-12);
    CHECK_THROWS(fm_loss(a, u));
}

TEST_CASE("cosine_distance") {
    Vec a(2), b(2);
    a << 1.0, 0.0;
    b << 0.0, 1.0;
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cosine_distance(a, Vec(-a)) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(cosine_distance(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_distance(a, Vec::Zero(2)) == 1.0);
}

TEST_CASE("repel and curve hinges") {
    Vec u(2);
    u << 1.0, 0.0;

    // v_pos = u and the negative exactly at the margin: boundary 0.
    Vec v_neg(2);
    v_neg << 0.0, 0.0;  // distance 1 from u
    CHECK(repel_loss(u, u, v_neg, 1.0) == 0.0);
    CHECK(repel_loss(u, u, u, 1.0) == 1.0);  // negative at distance 0

    Vec v_pos(2), far(2);
    v_pos << 3.0, 0.0;  // d(u, v_pos) = 2
    far << 6.0, 0.0;    // d(u, v_neg) = 5
    CHECK(repel_loss(u, v_pos, far, 1.0) == 0.0);

    // Curve: parallel positive, antiparallel negative clears the margin.
    Vec anti(2);
    anti << -2.0, 0.0;
    Vec par(2);
    par << 0.5, 0.0;
    CHECK(curve_loss(u, par, anti, 0.9) == 0.0);
    CHECK(curve_loss(u, anti, par, 0.9) == doctest::Approx(2.9).epsilon(1e-15));
    CHECK(curve_loss(u, par, par, 0.9) == doctest::Approx(0.9).epsilon(1e-15));

    // Nonnegativity and curve scale invariance on random inputs.
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        Vec x(3), y(3), z(3);
        for (int j = 0; j < 3; ++j) {
            x(j) = rng.normal();
            y(j) = rng.normal();
            z(j) = rng.normal();
        }
        const double m = rng.uniform(0.0, 2.0);
        CHECK(repel_loss(x, y, z, m) >= 0.0);
        const double cv = curve_loss(x, y, z, m);
        CHECK(cv >= 0.0);
        CHECK(cv <= 2.0 + m);
        const double scale = rng.uniform(0.1, 9.0);
        CHECK(curve_loss(Vec(scale * x), Vec(scale * y), Vec(scale * z), m) ==
              doctest::Approx(cv).epsilon(1e-9));
    }
}

TEST_CASE("pgd_mine: flat loss, feasibility, linear closed form") {
    Vec x1(2), c(2);
    x1 << 0.5, -0.5;
    c << 0.2, -0.1;
    Rng rng(14);
    const FlowSample sample = make_flow_sample(rng, x1, c);

    // Zero network: gradient 0 everywhere, sgn(0) = 0, condition unchanged.
    const MlpParams zero = linear_net(Mat::Zero(2, 5), Vec::Zero(2));
    CHECK(pgd_mine(zero, sample, 3, 0.1, 0.2) == c);

    // K = 0 short-circuits.
    Rng rng2(15);
    const MlpParams net = init_params(rng2, 2, 2, 8, 1);
    CHECK(pgd_mine(net, sample, 0, 0.1, 0.2) == c);

    // Mined conditions always stay inside the L-inf ball.
    for (int trial = 0; trial < 30; ++trial) {
        Rng r(100 + trial);
        const FlowSample s = make_flow_sample(r, x1, c);
        const double eps = r.uniform(0.01, 0.4);
        const Vec mined = pgd_mine(net, s, 3, 0.1, eps);
        CHECK((mined - c).cwiseAbs().maxCoeff() <= eps + 1e-15);
    }

    // One step on a hand-built linear net matches the analytic update.
    Mat w(2, 5);
    w << 0.3, -0.2, 1.4, -0.7, 0.2,
         0.1,  0.9, -0.5, 0.8, -0.3;
    Vec b(2);
    b << 0.05, -0.02;
    const MlpParams lin = linear_net(w, b);

    const Vec v = naive_forward(lin, pack_input(sample.x_t, c, sample.t));
    const Mat w_cond = w.middleCols(2, 2);
    const Vec g = 2.0 * w_cond.transpose() * (v - sample.u_t);
    Vec expect = c;
    for (int i = 0; i < 2; ++i) {
        const double stepped = c(i) + 0.1 * (g(i) > 0 ? 1.0 : (g(i) < 0 ? -1.0 : 0.0));
        expect(i) = std::clamp(stepped, c(i) - 0.05, c(i) + 0.05);
    }
    CHECK((pgd_mine(lin, sample, 1, 0.1, 0.05) - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("diflo_batch_loss: breakdown identity and ablation consistency") {
    Rng rng(23);
    const MlpParams params = init_params(rng, 2, 2, 8, 1);
    Vec x1(2), c(2);
    x1 << 0.4, 0.6;
    c << -0.3, 0.2;

    std::vector<FlowSample> batch;
    Rng srng(24);
    for (int i = 0; i < 5; ++i) batch.push_back(make_flow_sample(srng, x1, c));

    TrainConfig cfg;
    cfg.lambda_repel = 0.1;
    cfg.beta_curve = 0.05;
    Rng neg_rng(25);
    const auto [loss, grads] = diflo_batch_loss(params, batch, cfg, neg_rng);
    CHECK(loss.total ==
          doctest::Approx(loss.fm + 0.1 * loss.repel + 0.05 * loss.curve).epsilon(1e-12));
    CHECK(loss.fm >= 0.0);
    CHECK(loss.repel >= 0.0);
    CHECK(loss.curve >= 0.0);

    // lambda = beta = 0 collapses to plain FM regardless of negative mode.
    TrainConfig fm_only = cfg;
    fm_only.lambda_repel = 0.0;
    fm_only.beta_curve = 0.0;
    Rng r1(26), r2(26);
    const auto [l1, g1] = diflo_batch_loss(params, batch, fm_only, r1);
    TrainConfig none = fm_only;
    none.negative_mode = NegativeMode::none;
    const auto [l2, g2] = diflo_batch_loss(params, batch, none, r2);
    CHECK(l1.total == l2.total);
    CHECK(l1.repel == 0.0);
    CHECK(l1.curve == 0.0);
    for (std::size_t l = 0; l < g1.weights.size(); ++l) CHECK(g1.weights[l] == g2.weights[l]);

    CHECK_THROWS(diflo_batch_loss(params, {}, cfg, neg_rng));
}

TEST_CASE("diflo_batch_loss gradients match finite differences") {
    // Uniform-random negatives with a fixed stream make the total loss a
    // plain function of the parameters, matching the stop-gradient treatment
    // of mined conditions.
    Rng rng(31);
    MlpParams params = init_params(rng, 2, 2, 8, 1);
    Vec x1(2), c(2);
    x1 << 0.8, -0.1;
    c << 0.4, 0.3;
    std::vector<FlowSample> batch;
    Rng srng(32);
    for (int i = 0; i < 4; ++i) batch.push_back(make_flow_sample(srng, x1, c));

    for (const NegativeMode mode : {NegativeMode::uniform_random, NegativeMode::none}) {
        TrainConfig cfg;
        cfg.negative_mode = mode;
        cfg.lambda_repel = 0.3;
        cfg.beta_curve = 0.2;
        cfg.margin_r = 1.0;
        cfg.margin_c = 0.9;

        Rng g_rng(77);
        const auto [loss, grads] = diflo_batch_loss(params, batch, cfg, g_rng);

        auto total = [&](MlpParams& p) {
            Rng fd_rng(77);
            const auto [l, g] = diflo_batch_loss(p, batch, cfg, fd_rng);
            return l.total;
        };
        Rng pick(55);
        for (int probe = 0; probe < 10; ++probe) {
            const auto l = pick.uniform_index(params.weights.size());
            const auto r = pick.uniform_index(params.weights[l].rows());
            const auto col = pick.uniform_index(params.weights[l].cols());
            const double fd = central_diff(params, params.weights[l](r, col), total);
            const double an = grads.weights[l](r, col);
            CHECK_MESSAGE(close_rel(an, fd, 1e-4), "mode=", to_string(mode), " fd=", fd,
                          " analytic=", an);
        }
        // Bias gradients too.
        const double fd_b = central_diff(params, params.biases[0](1), total);
        CHECK(close_rel(grads.biases[0](1), fd_b, 1e-4));
    }
}

TEST_CASE("train: zero iterations, determinism, ablation equivalence") {
    const SinglePairSource source(Vec::Ones(2), Vec::Zero(2));

    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.batch_size = 4;
    const TrainResult zero = train(source, 8, 1, cfg, 5);
    Rng init = Rng(5).fork("init");
    const MlpParams expect = init_params(init, 2, 2, 8, 1);
    for (int l = 0; l < expect.layer_count(); ++l) {
        CHECK(zero.params.weights[l] == expect.weights[l]);
    }

    // lambda = beta = 0 with PGD mode produces the identical parameter
    // trajectory as explicit FM-only mode (mining branch skipped).
    TrainConfig ab = cfg;
    ab.iterations = 10;
    ab.lambda_repel = 0.0;
    ab.beta_curve = 0.0;
    ab.negative_mode = NegativeMode::pgd;
    const TrainResult a = train(source, 8, 1, ab, 9);
    TrainConfig fm = ab;
    fm.negative_mode = NegativeMode::none;
    const TrainResult b = train(source, 8, 1, fm, 9);
    for (int l = 0; l < a.params.layer_count(); ++l) {
        CHECK(a.params.weights[l] == b.params.weights[l]);
        CHECK(a.params.biases[l] == b.params.biases[l]);
    }
    CHECK(a.history.size() == 10);
}

TEST_CASE("transport_energy") {
    Rng rng(41);
    std::vector<std::pair<Vec, Vec>> pairs;
    Vec x1(2), c(2);
    x1 << 0.3, -0.6;
    c << 0.1, 0.1;
    pairs.emplace_back(x1, c);

    // Zero network: E ||x1 - x0||^2 = ||x1||^2 + d for standard-normal x0.
    const MlpParams zero = linear_net(Mat::Zero(2, 5), Vec::Zero(2));
    Rng mc(42);
    const double energy = transport_energy(zero, pairs, 20000, mc);
    const double expect = x1.squaredNorm() + 2.0;
    CHECK(std::abs(energy - expect) < 0.15);

    // Field that reproduces the exact target velocity when targets are zero:
    // u = x1 - x0 = -x_t / (1 - t).
    std::vector<std::pair<Vec, Vec>> zero_targets;
    zero_targets.emplace_back(Vec::Zero(2), c);
    const FieldFn oracle_field = [](const Mat& in) {
        Mat v(in.rows(), 2);
        for (Eigen::Index i = 0; i < in.rows(); ++i) {
            const double t = in(i, 4);
            v.row(i) = -in.row(i).head(2) / (1.0 - t);
        }
        return v;
    };
    Rng mc2(43);
    CHECK(transport_energy_field(oracle_field, 2, zero_targets, 500, mc2) < 1e-20);

    Rng mc3(44);
    CHECK_THROWS(transport_energy(zero, {}, 10, mc3));
}
