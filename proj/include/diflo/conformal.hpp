#pragma once

#include <vector>

#include "diflo/net.hpp"

namespace diflo {

// Two-sided acceptance band on anomaly scores, calibrated at level alpha from
// M exchangeable in-distribution scores:
//   k_lo = floor((M+1) alpha/2), k_hi = ceil((M+1)(1 - alpha/2)),
// 1-based ranks into the ascending scores, clamped to [1, M].
struct ConformalInterval {
    double q_lo = 0.0;
    double q_hi = 0.0;
    double alpha = 0.0;
    int m_cal = 0;
};

struct DetectionReport {
    double auroc = 0.0;
    double fpr = 0.0;
    double tpr_empirical = 0.0;
    int n_id = 0;
    int n_ood = 0;
};

struct SweepRow {
    double alpha = 0.0;
    double empirical_coverage = 0.0;
    double fpr = 0.0;
};

ConformalInterval calibrate(const std::vector<double>& cal_scores, double alpha);

// Closed-interval membership; NaN scores are never accepted.
bool accept(const ConformalInterval& interval, double score);

// P(random OOD score > random ID score), ties at half weight (midranks).
double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores);

// Fraction of OOD scores the interval fails to reject.
double fpr_at_interval(const ConformalInterval& interval, const std::vector<double>& ood_scores);

std::vector<SweepRow> coverage_sweep(const std::vector<double>& cal_scores,
                                     const std::vector<double>& id_test_scores,
                                     const std::vector<double>& ood_scores,
                                     const std::vector<double>& alphas);

// Mean over samples of the per-dimension mean squared error.
double mse(const std::vector<Vec>& preds, const std::vector<Vec>& targets);

}  // namespace diflo
