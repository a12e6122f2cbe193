#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "flab/mat.hpp"
#include "flab/rng.hpp"
#include "flab/vocab.hpp"

namespace flab {

enum class Role { compressor, decoder };

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int vocab_size = 0;
    int max_positions = 160;
    Role role = Role::decoder;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
};

struct CompressionConfig {
    int memory_slots = 4;     // M
    int train_prefix_len = 0; // the L the rate is quoted against
    bool use_projector = true;

    double rate() const {
        return memory_slots > 0 ? static_cast<double>(train_prefix_len) / memory_slots : 0.0;
    }
    void validate() const;
};

// Named parameter tensors with stable construction order.
template <class T>
struct ParameterSet {
    std::vector<std::string> names;
    std::vector<Mat<T>> tensors;
    std::unordered_map<std::string, int> lookup;

    int add(const std::string& name, Mat<T> m);
    int find(const std::string& name) const; // -1 when absent
    Mat<T>& operator[](int i) { return tensors[static_cast<size_t>(i)]; }
    const Mat<T>& operator[](int i) const { return tensors[static_cast<size_t>(i)]; }
    size_t count() const { return tensors.size(); }
    size_t scalar_count() const;
    bool all_finite() const;

    template <class U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        out.names = names;
        out.lookup = lookup;
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
};

// Gradient buffers aligned index-for-index with a ParameterSet.
template <class T>
using GradSet = std::vector<Mat<T>>;

template <class T>
GradSet<T> make_grads(const ParameterSet<T>& ps) {
    GradSet<T> g;
    g.reserve(ps.count());
    for (const auto& t : ps.tensors) g.emplace_back(t.rows, t.cols);
    return g;
}

// The M x d_decoder latent handed from compressor to decoder.
template <class T>
struct MemoryTensor {
    Mat<T> values;
    int source_length = 0;
};

template <class T>
struct Transformer; // forward decl (transformer.hpp)

// A compressor/decoder transformer pair sharing one parameter set, plus the
// memory-slot embeddings and the cross-dimension projector.
template <class T>
struct CompressorDecoder {
    ModelConfig comp_cfg;
    ModelConfig dec_cfg;
    CompressionConfig ccfg;
    Vocabulary vocab;
    ParameterSet<T> params;
    int mem_ix = -1;  // memory-slot embeddings, M x d_comp
    int proj_ix = -1; // projector, d_comp x d_dec (-1 when disabled)

    static CompressorDecoder init(const ModelConfig& comp, const ModelConfig& dec,
                                  const CompressionConfig& ccfg, Vocabulary vocab,
                                  uint64_t seed);

    // Rebinds tensor indices after params were replaced wholesale (loading).
    void bind();

    MemoryTensor<T> compress(const TokenSeq& x) const;

    // Row t holds logits for prefix token t given Z and the tokens before it.
    Mat<T> decode_logits(const MemoryTensor<T>& z, const TokenSeq& prefix) const;

    // Greedy argmax decoding from [Z, BOS, prompt...]; stops at EOS. The
    // returned sequence excludes BOS and the prompt.
    TokenSeq generate_greedy(const MemoryTensor<T>& z, int max_len,
                             const TokenSeq& prompt = {}) const;

    // Mean per-token log-probability of candidate under
    // [Z, BOS, SEP, question, SEP, candidate...].
    double score_candidate(const MemoryTensor<T>& z, const TokenSeq& question,
                           const TokenSeq& candidate) const;

    template <class U>
    CompressorDecoder<U> cast() const {
        CompressorDecoder<U> out;
        out.comp_cfg = comp_cfg;
        out.dec_cfg = dec_cfg;
        out.ccfg = ccfg;
        out.vocab = vocab;
        out.params = params.template cast<U>();
        out.mem_ix = mem_ix;
        out.proj_ix = proj_ix;
        return out;
    }

    void check_tokens(const TokenSeq& x) const;

    // Input-embedding assembly; exposed so the loss path can reuse the exact
    // layout for its backward scatter.
    Mat<T> compressor_embedding(const TokenSeq& x) const; // [tokens, memory slots]
    Mat<T> decoder_embedding(const Mat<T>& z, const TokenSeq& tokens) const; // [Z, BOS, tokens]
};

// Mean log-probability of `targets` under the corresponding logit rows
// (row i scores targets[i]); log-softmax computed in double.
template <class T>
double mean_logprob_rows(const Mat<T>& logits, const TokenSeq& targets);

extern template struct ParameterSet<float>;
extern template struct ParameterSet<double>;
extern template struct CompressorDecoder<float>;
extern template struct CompressorDecoder<double>;

using Model = CompressorDecoder<float>;

} // namespace flab
