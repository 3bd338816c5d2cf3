#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "diflo/spiral.hpp"

using namespace diflo;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Brute-force distance scan, used as the oracle for the refined version.
double scan_distance(const Vec& p, const SpiralConfig& cfg, int points) {
    double best = 1e300;
    for (int i = 0; i <= points; ++i) {
        const double theta = cfg.theta_max * i / points;
        const double r = theta / cfg.theta_max;
        const double dx = p(0) - r * std::cos(theta);
        const double dy = p(1) - r * std::sin(theta);
        best = std::min(best, dx * dx + dy * dy);
    }
    return std::sqrt(best);
}

}  // namespace

TEST_CASE("spiral_point geometry") {
    SpiralConfig cfg;
    CHECK(spiral_point(0.0, cfg).isZero(0.0));

    const Vec end = spiral_point(5.0 * kPi, cfg);
    CHECK(end(0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(end(1) == doctest::Approx(0.0).epsilon(1e-9));

    const Vec half = spiral_point(2.5 * kPi, cfg);
    CHECK(half(0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(half(1) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS(spiral_point(-0.1, cfg));
    CHECK_THROWS(spiral_point(5.0 * kPi + 0.1, cfg));
}

TEST_CASE("sample_spiral: noiseless samples sit on the curve; radii bounded") {
    SpiralConfig noiseless;
    noiseless.noise_sigma = 0.0;
    Rng rng(3);
    for (const Vec& p : sample_spiral(rng, 200, noiseless)) {
        CHECK(min_dist_to_spiral(p, noiseless) < 1e-7);
    }

    SpiralConfig cfg;
    Rng rng2(4);
    const auto samples = sample_spiral(rng2, 10000, cfg);
    double max_radius = 0.0;
    for (const Vec& p : samples) max_radius = std::max(max_radius, p.norm());
    CHECK(max_radius <= 1.0 + 5.0 * cfg.noise_sigma);

    // Theta is uniform: chi-squared on 20 radius-derived bins at the 1% level
    // (critical value 36.19 for 19 dof).
    std::vector<int> bins(20, 0);
    SpiralConfig exact = cfg;
    exact.noise_sigma = 1e-12;
    Rng rng3(5);
    const int n = 20000;
    for (const Vec& p : sample_spiral(rng3, n, exact)) {
        const double theta_hat = p.norm() * exact.theta_max;
        int bin = static_cast<int>(theta_hat / exact.theta_max * 20.0);
        bin = std::clamp(bin, 0, 19);
        ++bins[bin];
    }
    const double expected = n / 20.0;
    double chi2 = 0.0;
    for (const int count : bins) chi2 += (count - expected) * (count - expected) / expected;
    CHECK(chi2 < 36.19);
}

TEST_CASE("min_dist_to_spiral") {
    SpiralConfig cfg;

    // Points on the curve at high grid resolution.
    SpiralConfig dense = cfg;
    dense.grid_resolution = 10000;
    CHECK(min_dist_to_spiral(spiral_point(3.7, cfg), dense) < 1e-4);
    CHECK(min_dist_to_spiral(Vec(Vec::Zero(2)), dense) < 1e-6);

    // Off-curve point matches the brute-force scan.
    Vec p(2);
    p << 1.0, 0.0;
    const double oracle = scan_distance(p, cfg, 1000000);
    CHECK(std::abs(min_dist_to_spiral(p, cfg) - oracle) < 1e-4);

    // Refining the grid 10x does not move distances by more than 1e-4.
    Rng rng(6);
    SpiralConfig coarse = cfg;
    coarse.grid_resolution = 10000;
    SpiralConfig fine = cfg;
    fine.grid_resolution = 100000;
    for (int i = 0; i < 25; ++i) {
        Vec q(2);
        q << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
        CHECK(std::abs(min_dist_to_spiral(q, coarse) - min_dist_to_spiral(q, fine)) < 1e-4);
    }
}

TEST_CASE("sample_ood: buffer contract, infeasible config, acceptance stability") {
    SpiralConfig cfg;
    Rng rng(7);
    const auto ood = sample_ood(rng, 500, cfg);
    for (const Vec& p : ood) {
        CHECK(min_dist_to_spiral(p, cfg) > cfg.epsilon_buffer);
        CHECK(p.cwiseAbs().maxCoeff() <= 1.0);
    }

    // A buffer larger than the box makes rejection certain.
    SpiralConfig infeasible = cfg;
    infeasible.epsilon_buffer = 2.9;
    infeasible.grid_resolution = 200;
    Rng rng2(8);
    CHECK_THROWS(sample_ood(rng2, 1, infeasible));

    // Acceptance fraction is stable across seeds (Monte-Carlo area ratio).
    auto acceptance = [&](std::uint64_t seed) {
        Rng r(seed);
        int accepted = 0;
        const int attempts = 4000;
        for (int i = 0; i < attempts; ++i) {
            Vec q(2);
            q << r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0);
            accepted += min_dist_to_spiral(q, cfg) > cfg.epsilon_buffer ? 1 : 0;
        }
        return accepted / static_cast<double>(attempts);
    };
    const double a1 = acceptance(1), a2 = acceptance(2), a3 = acceptance(3);
    const double sigma = std::sqrt(0.9 * 0.1 / 4000.0);
    CHECK(std::abs(a1 - a2) < 6.0 * sigma);
    CHECK(std::abs(a1 - a3) < 6.0 * sigma);
}

TEST_CASE("regression dataset: grid alignment, shapes, noise bound") {
    SpiralConfig exact;
    exact.noise_sigma = 1e-300;  // effectively noiseless draws
    const double step = exact.theta_max / exact.grid_resolution;

    // Noiseless draws: the condition sits on a grid point and the targets are
    // exactly the next ten grid points.
    Rng rng(9);
    Vec cond, target;
    for (int trial = 0; trial < 20; ++trial) {
        draw_regression_sample(rng, exact, cond, target);
        // Recover the grid index from the nearest grid point.
        int k = -1;
        for (int j = 0; j + 10 < exact.grid_resolution; ++j) {
            if ((spiral_point(j * step, exact) - cond).norm() < 1e-9) {
                k = j;
                break;
            }
        }
        REQUIRE(k >= 0);
        for (int j = 1; j <= 10; ++j) {
            const Vec expect = spiral_point((k + j) * step, exact);
            CHECK((target.segment(2 * (j - 1), 2) - expect).norm() < 1e-9);
        }
    }

    // The k = 0 case: condition is the origin, targets are the first ten
    // noiseless grid points.
    for (std::uint64_t seed = 0;; ++seed) {
        Rng probe(seed);
        if (probe.uniform_index(exact.grid_resolution - 10) != 0) continue;
        Rng use(seed);
        draw_regression_sample(use, exact, cond, target);
        CHECK(cond.norm() < 1e-9);
        for (int j = 1; j <= 10; ++j) {
            CHECK((target.segment(2 * (j - 1), 2) - spiral_point(j * step, exact)).norm() < 1e-9);
        }
        break;
    }

    // Default-noise datasets: shape, box membership, 5-sigma proximity.
    SpiralConfig cfg;
    Rng rng2(10);
    const TaskDataset ds = build_regression_dataset(rng2, 300, cfg);
    CHECK(ds.size() == 300);
    CHECK(ds.cond_dim() == 2);
    CHECK(ds.target_dim() == 20);
    for (int i = 0; i < ds.size(); ++i) {
        CHECK(ds.conditions[i].cwiseAbs().maxCoeff() <= 1.0);
        for (int j = 0; j < 10; ++j) {
            const Vec point = ds.targets[i].segment(2 * j, 2);
            CHECK(min_dist_to_spiral(point, cfg) < 5.0 * cfg.noise_sigma);
        }
    }

    SpiralConfig small = cfg;
    small.grid_resolution = 10;
    Rng rng3(11);
    CHECK_THROWS(build_regression_dataset(rng3, 5, small));
}

TEST_CASE("generation dataset: marginals match, x != c, shapes") {
    SpiralConfig cfg;
    Rng rng(12);
    const int n = 4000;
    const TaskDataset ds = build_generation_dataset(rng, n, cfg);
    CHECK(ds.cond_dim() == 2);
    CHECK(ds.target_dim() == 2);

    for (int i = 0; i < n; ++i) CHECK((ds.targets[i] - ds.conditions[i]).norm() >= 1e-9);

    // Two-sample Kolmogorov-Smirnov per coordinate at the 1% level:
    // D_crit = 1.63 sqrt(2/n).
    for (int coord = 0; coord < 2; ++coord) {
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = ds.conditions[i](coord);
            b[i] = ds.targets[i](coord);
        }
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        double d_stat = 0.0;
        std::size_t ia = 0, ib = 0;
        while (ia < a.size() && ib < b.size()) {
            if (a[ia] <= b[ib]) ++ia;
            else ++ib;
            d_stat = std::max(d_stat, std::abs(static_cast<double>(ia) / n -
                                               static_cast<double>(ib) / n));
        }
        CHECK(d_stat < 1.63 * std::sqrt(2.0 / n));
    }
}

TEST_CASE("benchmark disjointness and determinism") {
    SpiralConfig cfg;

    Rng a(42), b(42);
    const TaskDataset da = build_regression_dataset(a, 50, cfg);
    const TaskDataset db = build_regression_dataset(b, 50, cfg);
    for (int i = 0; i < 50; ++i) {
        CHECK(da.conditions[i] == db.conditions[i]);
        CHECK(da.targets[i] == db.targets[i]);
    }

    Rng ood_rng(43);
    const auto ood = sample_ood(ood_rng, 300, cfg);
    double min_ood = 1e300;
    for (const Vec& p : ood) min_ood = std::min(min_ood, min_dist_to_spiral(p, cfg));
    CHECK(min_ood > cfg.epsilon_buffer);

    int near = 0;
    for (int i = 0; i < 50; ++i) {
        if (min_dist_to_spiral(da.conditions[i], cfg) < 5.0 * cfg.noise_sigma + 1e-6) ++near;
    }
    CHECK(near >= 49);  // >= 99% of ID conditions hug the curve
}
