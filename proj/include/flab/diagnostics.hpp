#pragma once

#include <string>
#include <vector>

#include "flab/mat.hpp"
#include "flab/model.hpp"

namespace flab::diagnostics {

// How per-sample memory tensors (M x d each) are assembled into the batch
// matrix handed to the SVD: one flattened row of width M*d per sample, or
// M rows of width d per sample.
enum class FlattenMode { flatten_rows, stack_rows };

struct EffectiveRankResult {
    double erank = 1.0;
    std::vector<double> singular_values; // descending, after floor truncation
    std::vector<double> spectrum;        // p_i = sigma_i / sum, descending
};

// erank = exp(-sum p_i ln p_i) with p_i = sigma_i / sum_j sigma_j over the
// singular values of Zb. Singular values below 1e-12 * sigma_max are
// discarded before normalization. Optional mean-centering of rows is off by
// default (the spectrum is taken over the raw matrix).
EffectiveRankResult effective_rank(const MatF& Zb, bool center = false);
EffectiveRankResult effective_rank(const MatD& Zb, bool center = false);

// Builds the B x D batch matrix from per-sample memory tensors.
MatF batch_embedding_matrix(const std::vector<MatF>& per_sample,
                            FlattenMode mode = FlattenMode::flatten_rows);

struct EntropyResult {
    std::vector<double> per_step; // H_t in nats
    double mean = 0.0;            // H(Z)
    int steps = 0;                // T
};

// Shannon entropy of each softmax row of a logit matrix, computed via a
// numerically stable log-softmax; mean over rows.
EntropyResult entropy_of_logits(const MatF& logits);

// Entropy of one logit row by the same route; exposed for oracle tests.
double entropy_of_logit_row(const float* logits, int width);

struct ProbePoint {
    long step = 0;
    double erank = 0.0;
    double entropy = 0.0;
};

// Per-position prediction entropy of the decoder under teacher forcing on
// the gold prefix x (so T = |x| rows), averaged into H(Z).
template <class T>
EntropyResult conditional_entropy(const MemoryTensor<T>& z, const TokenSeq& x,
                                  const CompressorDecoder<T>& model);

struct ProbeTrajectory {
    std::vector<ProbePoint> points; // ordered by step
    long erank_peak_step = 0;       // argmax over the trajectory (last on ties)
    bool peak_interior = false;     // argmax strictly inside the step interval
};

// Assembles trajectory statistics from per-checkpoint probe points.
ProbeTrajectory summarize_trajectory(std::vector<ProbePoint> points);

// Loads each checkpoint, compresses the fixed probe prefixes, and computes
// both diagnostics per checkpoint; output ordered by step.
struct ProbeSample {
    TokenSeq prefix; // the reconstruction target x_{1:k}
};
ProbeTrajectory probe_dynamics(const std::vector<std::string>& checkpoint_paths,
                               const std::vector<ProbeSample>& probe_set,
                               FlattenMode mode = FlattenMode::flatten_rows);

} // namespace flab::diagnostics
