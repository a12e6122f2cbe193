#include "flab/diagnostics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "flab/checkpoint.hpp"
#include "flab/errors.hpp"

namespace flab::diagnostics {

namespace {

template <class T>
EffectiveRankResult effective_rank_impl(const Mat<T>& Zb, bool center) {
    if (Zb.rows < 2) throw DegenerateBatch("effective_rank: batch size must be >= 2");
    Eigen::MatrixXd m(Zb.rows, Zb.cols);
    for (int i = 0; i < Zb.rows; ++i)
        for (int j = 0; j < Zb.cols; ++j) m(i, j) = static_cast<double>(Zb.at(i, j));
    if (center) m.rowwise() -= m.colwise().mean();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    const Eigen::VectorXd& sv = svd.singularValues(); // descending
    const double smax = sv.size() > 0 ? sv(0) : 0.0;
    if (!(smax >= 1e-300)) throw ZeroMatrix("effective_rank: zero (or subnormal) matrix");

    EffectiveRankResult out;
    const double floor = 1e-12 * smax;
    double sum = 0.0;
    for (int i = 0; i < sv.size(); ++i) {
        if (sv(i) < floor) break;
        out.singular_values.push_back(sv(i));
        sum += sv(i);
    }
    double entropy = 0.0;
    out.spectrum.reserve(out.singular_values.size());
    for (double s : out.singular_values) {
        const double p = s / sum;
        out.spectrum.push_back(p);
        entropy -= p * std::log(p);
    }
    out.erank = std::exp(entropy);
    return out;
}

} // namespace

EffectiveRankResult effective_rank(const MatF& Zb, bool center) {
    return effective_rank_impl(Zb, center);
}
EffectiveRankResult effective_rank(const MatD& Zb, bool center) {
    return effective_rank_impl(Zb, center);
}

MatF batch_embedding_matrix(const std::vector<MatF>& per_sample, FlattenMode mode) {
    if (per_sample.empty()) throw DegenerateBatch("batch_embedding_matrix: empty batch");
    const int m = per_sample[0].rows, d = per_sample[0].cols;
    for (const auto& z : per_sample)
        if (z.rows != m || z.cols != d)
            throw ShapeMismatch("batch_embedding_matrix: inconsistent sample shapes");
    const int b = static_cast<int>(per_sample.size());
    if (mode == FlattenMode::flatten_rows) {
        MatF out(b, m * d);
        for (int i = 0; i < b; ++i)
            std::copy(per_sample[i].a.begin(), per_sample[i].a.end(), out.row(i));
        return out;
    }
    MatF out(b * m, d);
    for (int i = 0; i < b; ++i)
        std::copy(per_sample[i].a.begin(), per_sample[i].a.end(), out.row(i * m));
    return out;
}

double entropy_of_logit_row(const float* logits, int width) {
    double mx = logits[0];
    for (int j = 1; j < width; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
    double lse = 0.0;
    for (int j = 0; j < width; ++j) lse += std::exp(static_cast<double>(logits[j]) - mx);
    lse = mx + std::log(lse);
    double h = 0.0;
    for (int j = 0; j < width; ++j) {
        const double lp = static_cast<double>(logits[j]) - lse;
        h -= std::exp(lp) * lp;
    }
    return h;
}

EntropyResult entropy_of_logits(const MatF& logits) {
    EntropyResult out;
    out.steps = logits.rows;
    out.per_step.reserve(logits.rows);
    double sum = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        const double h = entropy_of_logit_row(logits.row(i), logits.cols);
        out.per_step.push_back(h);
        sum += h;
    }
    out.mean = logits.rows > 0 ? sum / logits.rows : 0.0;
    return out;
}

ProbeTrajectory summarize_trajectory(std::vector<ProbePoint> points) {
    ProbeTrajectory out;
    out.points = std::move(points);
    if (out.points.empty()) return out;
    size_t best = 0;
    for (size_t i = 1; i < out.points.size(); ++i)
        if (out.points[i].erank >= out.points[best].erank) best = i; // last argmax on ties
    out.erank_peak_step = out.points[best].step;
    out.peak_interior = best > 0 && best + 1 < out.points.size();
    return out;
}

template <class T>
EntropyResult conditional_entropy(const MemoryTensor<T>& z, const TokenSeq& x,
                                  const CompressorDecoder<T>& model) {
    const Mat<T> logits = model.decode_logits(z, x);
    if constexpr (std::is_same_v<T, float>) {
        return entropy_of_logits(logits);
    } else {
        return entropy_of_logits(logits.template cast<float>());
    }
}

template EntropyResult conditional_entropy<float>(const MemoryTensor<float>&, const TokenSeq&,
                                                  const CompressorDecoder<float>&);
template EntropyResult conditional_entropy<double>(const MemoryTensor<double>&, const TokenSeq&,
                                                   const CompressorDecoder<double>&);

ProbeTrajectory probe_dynamics(const std::vector<std::string>& checkpoint_paths,
                               const std::vector<ProbeSample>& probe_set, FlattenMode mode) {
    std::vector<ProbePoint> points;
    points.reserve(checkpoint_paths.size());
    for (const auto& path : checkpoint_paths) {
        auto loaded = load_checkpoint(path);
        std::vector<MatF> zs(probe_set.size());
        std::vector<double> ent(probe_set.size());
#pragma omp parallel for schedule(static) if (probe_set.size() > 1)
        for (int i = 0; i < static_cast<int>(probe_set.size()); ++i) {
            const auto& prefix = probe_set[static_cast<size_t>(i)].prefix;
            auto z = loaded.model.compress(prefix);
            ent[static_cast<size_t>(i)] =
                entropy_of_logits(loaded.model.decode_logits(z, prefix)).mean;
            zs[static_cast<size_t>(i)] = std::move(z.values);
        }
        ProbePoint pt;
        pt.step = loaded.step;
        pt.erank = effective_rank(batch_embedding_matrix(zs, mode)).erank;
        double s = 0;
        for (double v : ent) s += v;
        pt.entropy = probe_set.empty() ? 0.0 : s / static_cast<double>(probe_set.size());
        points.push_back(pt);
    }
    std::sort(points.begin(), points.end(),
              [](const ProbePoint& a, const ProbePoint& b) { return a.step < b.step; });
    return summarize_trajectory(std::move(points));
}

} // namespace flab::diagnostics
