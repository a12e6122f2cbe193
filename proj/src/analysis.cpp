#include "flab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flab::analysis {

namespace {

void check_inputs(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw LengthMismatch("correlation: |x| = " + std::to_string(x.size()) +
                             " but |y| = " + std::to_string(y.size()));
    if (x.size() < 3) throw TooFewPoints("correlation: need n >= 3");
    auto constant = [](const std::vector<double>& v) {
        for (double u : v)
            if (u != v[0]) return false;
        return true;
    };
    if (constant(x) || constant(y)) throw ConstantInput("correlation: constant input");
}

double pearson_r_only(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

// Continued fraction for the incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int nu) {
    if (!std::isfinite(t)) return 0.0;
    const double x = nu / (nu + t * t);
    return std::clamp(incomplete_beta(nu / 2.0, 0.5, x), 0.0, 1.0);
}

std::pair<double, double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    check_inputs(x, y);
    const int n = static_cast<int>(x.size());
    const double r = pearson_r_only(x, y);
    double p;
    if (std::fabs(r) >= 1.0) {
        p = 0.0;
    } else {
        const double t = r * std::sqrt((n - 2) / (1.0 - r * r));
        p = student_t_two_sided_p(t, n - 2);
    }
    return {r, p};
}

std::vector<double> midranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

std::pair<double, double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    check_inputs(x, y);
    return pearson(midranks(x), midranks(y));
}

CorrelationResult correlate(const std::vector<double>& x, const std::vector<double>& y) {
    CorrelationResult out;
    out.n = static_cast<int>(x.size());
    auto [r, pp] = pearson(x, y);
    auto [rho, sp] = spearman(x, y);
    out.pearson_r = r;
    out.pearson_p = pp;
    out.spearman_rho = rho;
    out.spearman_p = sp;
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw TooFewPoints("percentile: empty input");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double h = q * (static_cast<double>(values.size()) - 1.0);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<QuantileBand> quantile_bands(const std::vector<double>& x,
                                         const std::vector<double>& y, int n_bins) {
    if (x.size() != y.size()) throw LengthMismatch("quantile_bands: |x| != |y|");
    const int n = static_cast<int>(x.size());
    if (n_bins < 1 || n < n_bins) throw TooFewPoints("quantile_bands: need n >= n_bins >= 1");

    std::vector<size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });

    // First (n mod bins) bins take one extra point.
    const int base = n / n_bins, extra = n % n_bins;
    std::vector<QuantileBand> bands;
    bands.reserve(n_bins);
    size_t pos = 0;
    for (int b = 0; b < n_bins; ++b) {
        const int cnt = base + (b < extra ? 1 : 0);
        std::vector<double> ys;
        ys.reserve(cnt);
        double sum_x = 0, sum_y = 0;
        for (int k = 0; k < cnt; ++k) {
            const size_t i = idx[pos++];
            sum_x += x[i];
            sum_y += y[i];
            ys.push_back(y[i]);
        }
        QuantileBand band;
        band.count = cnt;
        band.center = sum_x / cnt;
        band.mean_y = sum_y / cnt;
        band.q25 = percentile(ys, 0.25);
        band.q75 = percentile(ys, 0.75);
        bands.push_back(band);
    }
    return bands;
}

DecouplingReport decoupling_report(const std::vector<RunSummary>& runs, double delta) {
    if (runs.size() < 2) throw TooFewPoints("decoupling_report: need at least 2 runs");
    DecouplingReport rep;
    rep.runs = runs;
    rep.delta = delta;
    for (size_t i = 0; i < runs.size(); ++i) {
        for (size_t j = i + 1; j < runs.size(); ++j) {
            if (runs[j].bleu < runs[i].bleu) continue;
            ParadoxFlag flag;
            flag.from_label = runs[i].label;
            flag.to_label = runs[j].label;
            flag.bleu_from = runs[i].bleu;
            flag.bleu_to = runs[j].bleu;
            auto probe = [&](const std::optional<double>& a, const std::optional<double>& b,
                             const char* name) {
                if (!a || !b) return;
                const double drop = *a - *b;
                if (drop > delta) {
                    flag.degraded_metrics.emplace_back(name);
                    flag.max_drop = std::max(flag.max_drop, drop);
                }
            };
            probe(runs[i].overwrite_acc, runs[j].overwrite_acc, "overwrite");
            probe(runs[i].drift_acc, runs[j].drift_acc, "drift");
            if (!flag.degraded_metrics.empty()) rep.flags.push_back(std::move(flag));
        }
    }
    return rep;
}

} // namespace flab::analysis
