#pragma once

#include <vector>

#include "flab/model.hpp"

// Pre-norm decoder-only transformer with learned absolute positions, causal
// multi-head attention, and a tanh-GELU MLP. Forward keeps the activations
// the hand-written backward needs; there is no autograd layer.

namespace flab {

template <class T>
struct BlockCache {
    Mat<T> x_in;    // block input (S x d)
    Mat<T> ln1;     // layernorm-1 output
    std::vector<T> mean1, rstd1;
    Mat<T> q, k, v; // S x d each
    std::vector<Mat<T>> probs; // per-head causal attention rows (S x S, upper zero)
    Mat<T> ctx;     // concatenated per-head context (S x d)
    Mat<T> x_mid;   // after attention residual
    Mat<T> ln2;
    std::vector<T> mean2, rstd2;
    Mat<T> ff_pre;  // S x d_ff
    Mat<T> ff_act;  // gelu(ff_pre)
};

template <class T>
struct ForwardCache {
    Mat<T> emb; // input embeddings
    std::vector<BlockCache<T>> blocks;
    Mat<T> last;    // output of final block
    Mat<T> lnf_out; // final layernorm output (S x d)
    std::vector<T> meanf, rstdf;
    int seq_len() const { return emb.rows; }
};

template <class T>
struct Transformer {
    ModelConfig cfg;
    bool has_head = false;
    int wte = -1, wpe = -1, lnf_g = -1, lnf_b = -1, head = -1;
    struct BlockIx {
        int ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, w2;
    };
    std::vector<BlockIx> blocks;

    // Creates and initializes this transformer's tensors inside ps under
    // `prefix.`; embedding-like tensors get N(0, 0.02), norms identity.
    static Transformer create(const ModelConfig& cfg, ParameterSet<T>& ps,
                              const std::string& prefix, bool with_head, Rng& rng);

    // Resolves indices against an existing parameter set (checkpoint load).
    static Transformer bind(const ModelConfig& cfg, const ParameterSet<T>& ps,
                            const std::string& prefix, bool with_head);

    ForwardCache<T> forward(Mat<T> emb, const ParameterSet<T>& ps) const;

    // Logits for `nrows` consecutive positions starting at `row0`.
    Mat<T> logits_rows(const ForwardCache<T>& c, const ParameterSet<T>& ps, int row0,
                       int nrows) const;

    // Backward from d(logits rows); accumulates into g, returns d(embeddings).
    Mat<T> backward_logits(const ForwardCache<T>& c, const ParameterSet<T>& ps,
                           const Mat<T>& dlogits, int row0, GradSet<T>& g) const;

    // Backward from d(lnf output); used when the caller consumes hidden
    // states directly (the compressor's memory rows).
    Mat<T> backward_hidden(const ForwardCache<T>& c, const ParameterSet<T>& ps,
                           const Mat<T>& d_lnf_out, GradSet<T>& g) const;
};

extern template struct Transformer<float>;
extern template struct Transformer<double>;

} // namespace flab
