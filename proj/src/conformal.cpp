#include "diflo/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace diflo {

namespace {

// floor/ceil with a relative nudge so short-decimal alphas hit their exact
// rank even when (M+1)*alpha picks up round-off.
double snap(double v) {
    const double r = std::round(v);
    if (std::abs(v - r) < 1e-9 * std::max(1.0, std::abs(v))) return r;
    return v;
}

int clamp_rank(double rank, int m) {
    return std::clamp(static_cast<int>(rank), 1, m);
}

}  // namespace

ConformalInterval calibrate(const std::vector<double>& cal_scores, double alpha) {
    const int m = static_cast<int>(cal_scores.size());
    if (m < 2) throw std::invalid_argument("calibrate: need at least 2 calibration scores");
    if (alpha <= 0.0 || alpha >= 1.0) {
        throw std::invalid_argument("calibrate: alpha must lie in (0, 1)");
    }

    std::vector<double> sorted = cal_scores;
    std::sort(sorted.begin(), sorted.end());

    const double mp1 = static_cast<double>(m) + 1.0;
    const int k_lo = clamp_rank(std::floor(snap(mp1 * alpha / 2.0)), m);
    const int k_hi = clamp_rank(std::ceil(snap(mp1 * (1.0 - alpha / 2.0))), m);
    if (k_lo == k_hi) {
        std::cerr << "[conformal] warning: calibration too small for alpha=" << alpha
                  << " (M=" << m << "); interval collapsed to a single rank\n";
    }

    ConformalInterval interval;
    interval.q_lo = sorted[k_lo - 1];
    interval.q_hi = sorted[k_hi - 1];
    interval.alpha = alpha;
    interval.m_cal = m;
    return interval;
}

bool accept(const ConformalInterval& interval, double score) {
    if (std::isnan(score)) return false;
    return score >= interval.q_lo && score <= interval.q_hi;
}

double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
    if (id_scores.empty() || ood_scores.empty()) {
        throw std::invalid_argument("auroc: empty score set");
    }
    // Mann-Whitney U via midranks over the pooled sample.
    struct Entry {
        double score;
        bool is_ood;
    };
    std::vector<Entry> pooled;
    pooled.reserve(id_scores.size() + ood_scores.size());
    for (const double s : id_scores) pooled.push_back({s, false});
    for (const double s : ood_scores) pooled.push_back({s, true});
    std::sort(pooled.begin(), pooled.end(),
              [](const Entry& a, const Entry& b) { return a.score < b.score; });

    double ood_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j + 1 < pooled.size() && pooled[j + 1].score == pooled[i].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t idx = i; idx <= j; ++idx) {
            if (pooled[idx].is_ood) ood_rank_sum += midrank;
        }
        i = j + 1;
    }

    const double n_ood = static_cast<double>(ood_scores.size());
    const double n_id = static_cast<double>(id_scores.size());
    const double u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    return u / (n_ood * n_id);
}

double fpr_at_interval(const ConformalInterval& interval, const std::vector<double>& ood_scores) {
    if (ood_scores.empty()) throw std::invalid_argument("fpr_at_interval: empty score set");
    std::size_t accepted = 0;
    for (const double s : ood_scores) accepted += accept(interval, s) ? 1 : 0;
    return static_cast<double>(accepted) / static_cast<double>(ood_scores.size());
}

std::vector<SweepRow> coverage_sweep(const std::vector<double>& cal_scores,
                                     const std::vector<double>& id_test_scores,
                                     const std::vector<double>& ood_scores,
                                     const std::vector<double>& alphas) {
    if (id_test_scores.empty()) throw std::invalid_argument("coverage_sweep: empty ID test set");
    std::vector<SweepRow> rows;
    rows.reserve(alphas.size());
    for (const double alpha : alphas) {
        const ConformalInterval interval = calibrate(cal_scores, alpha);
        std::size_t covered = 0;
        for (const double s : id_test_scores) covered += accept(interval, s) ? 1 : 0;
        SweepRow row;
        row.alpha = alpha;
        row.empirical_coverage =
            static_cast<double>(covered) / static_cast<double>(id_test_scores.size());
        row.fpr = fpr_at_interval(interval, ood_scores);
        rows.push_back(row);
    }
    return rows;
}

double mse(const std::vector<Vec>& preds, const std::vector<Vec>& targets) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw std::invalid_argument("mse: size mismatch or empty input");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != targets[i].size()) {
            throw std::invalid_argument("mse: dimension mismatch");
        }
        total += (preds[i] - targets[i]).squaredNorm() / static_cast<double>(preds[i].size());
    }
    return total / static_cast<double>(preds.size());
}

}  // namespace diflo
