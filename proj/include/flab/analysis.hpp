#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flab/errors.hpp"

namespace flab::analysis {

struct CorrelationResult {
    double pearson_r = 0.0;
    double pearson_p = 1.0;
    double spearman_rho = 0.0;
    double spearman_p = 1.0;
    int n = 0;
};

// Sample Pearson correlation; two-sided p-value from the t statistic
// t = r*sqrt((n-2)/(1-r^2)) against Student-t with n-2 dof.
std::pair<double, double> pearson(const std::vector<double>& x, const std::vector<double>& y);

// Spearman rank correlation with mid-ranks for ties; p via the same
// t approximation.
std::pair<double, double> spearman(const std::vector<double>& x, const std::vector<double>& y);

CorrelationResult correlate(const std::vector<double>& x, const std::vector<double>& y);

// Mid-ranks (average rank over tied values), 1-based.
std::vector<double> midranks(const std::vector<double>& v);

// Two-sided p-value for |t| with nu degrees of freedom.
double student_t_two_sided_p(double t, int nu);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Percentile with linear interpolation between order statistics; q in [0,1].
double percentile(std::vector<double> values, double q);

struct QuantileBand {
    double center = 0.0; // mean x of the bin
    double mean_y = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    int count = 0;
};

// Equal-count binning of x (counts differ by at most one); per-bin mean and
// 25th/75th percentiles of y.
std::vector<QuantileBand> quantile_bands(const std::vector<double>& x,
                                         const std::vector<double>& y, int n_bins);

struct RunSummary {
    std::string label;
    double bleu = 0.0;
    std::optional<double> overwrite_acc;
    std::optional<double> drift_acc;
};

struct ParadoxFlag {
    std::string from_label;
    std::string to_label;
    double bleu_from = 0.0;
    double bleu_to = 0.0;
    std::vector<std::string> degraded_metrics; // "overwrite" / "drift"
    double max_drop = 0.0;
};

struct DecouplingReport {
    std::vector<RunSummary> runs;
    std::vector<ParadoxFlag> flags;
    double delta = 0.05;
};

// Flags every ordered pair (i, j), i < j in input order, where BLEU is
// non-decreasing while overwrite or drift accuracy drops by more than delta.
// One flag per pair even when both QA metrics degrade.
DecouplingReport decoupling_report(const std::vector<RunSummary>& runs, double delta = 0.05);

} // namespace flab::analysis
