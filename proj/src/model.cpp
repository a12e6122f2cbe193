#include "flab/model.hpp"

#include <algorithm>
#include <cmath>

#include "flab/errors.hpp"
#include "flab/ops.hpp"
#include "flab/transformer.hpp"

namespace flab {

void ModelConfig::validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1 ||
        max_positions < 1)
        throw ConfigError("model config: all dimensions must be >= 1");
    if (d_model % n_heads != 0) throw ConfigError("model config: d_model must divide by n_heads");
}

void CompressionConfig::validate() const {
    if (memory_slots < 1) throw ConfigError("compression config: memory_slots must be >= 1");
}

template <class T>
int ParameterSet<T>::add(const std::string& name, Mat<T> m) {
    if (lookup.count(name)) throw ConfigError("duplicate parameter name: " + name);
    const int ix = static_cast<int>(tensors.size());
    names.push_back(name);
    tensors.push_back(std::move(m));
    lookup.emplace(name, ix);
    return ix;
}

template <class T>
int ParameterSet<T>::find(const std::string& name) const {
    auto it = lookup.find(name);
    return it == lookup.end() ? -1 : it->second;
}

template <class T>
size_t ParameterSet<T>::scalar_count() const {
    size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

template <class T>
bool ParameterSet<T>::all_finite() const {
    for (const auto& t : tensors)
        if (!t.all_finite()) return false;
    return true;
}

namespace {

template <class T>
struct BoundPair {
    Transformer<T> comp;
    Transformer<T> dec;
};

template <class T>
BoundPair<T> bind_pair(const CompressorDecoder<T>& m) {
    return {Transformer<T>::bind(m.comp_cfg, m.params, "comp", /*with_head=*/false),
            Transformer<T>::bind(m.dec_cfg, m.params, "dec", /*with_head=*/true)};
}

} // namespace

template <class T>
CompressorDecoder<T> CompressorDecoder<T>::init(const ModelConfig& comp, const ModelConfig& dec,
                                                const CompressionConfig& ccfg, Vocabulary vocab,
                                                uint64_t seed) {
    if (comp.role != Role::compressor || dec.role != Role::decoder)
        throw ConfigError("model init: config roles are swapped");
    if (comp.vocab_size != vocab.size() || dec.vocab_size != vocab.size())
        throw ConfigError("model init: config vocab_size disagrees with the vocabulary");
    ccfg.validate();
    if (!ccfg.use_projector && comp.d_model != dec.d_model)
        throw ConfigError("model init: projector required when hidden dims differ");

    CompressorDecoder<T> m;
    m.comp_cfg = comp;
    m.dec_cfg = dec;
    m.ccfg = ccfg;
    m.vocab = std::move(vocab);

    Rng rng(seed);
    Transformer<T>::create(comp, m.params, "comp", /*with_head=*/false, rng);
    Mat<T> mem(ccfg.memory_slots, comp.d_model);
    rng.fill_normal(mem, 0.02);
    m.mem_ix = m.params.add("comp.mem", std::move(mem));
    if (ccfg.use_projector) {
        Mat<T> proj(comp.d_model, dec.d_model);
        if (comp.d_model == dec.d_model) {
            for (int i = 0; i < comp.d_model; ++i) proj.at(i, i) = T(1);
        } else {
            rng.fill_normal(proj, 0.02);
        }
        m.proj_ix = m.params.add("proj.w", std::move(proj));
    }
    Transformer<T>::create(dec, m.params, "dec", /*with_head=*/true, rng);
    return m;
}

template <class T>
void CompressorDecoder<T>::bind() {
    bind_pair(*this); // validates presence of every transformer tensor
    mem_ix = params.find("comp.mem");
    if (mem_ix < 0) throw SchemaError("parameter set is missing comp.mem");
    proj_ix = params.find("proj.w");
    if (ccfg.use_projector && proj_ix < 0)
        throw SchemaError("parameter set is missing proj.w");
}

template <class T>
void CompressorDecoder<T>::check_tokens(const TokenSeq& x) const {
    for (int32_t id : x)
        if (id < 0 || id >= vocab.size())
            throw InvalidToken("token id out of range: " + std::to_string(id));
}

// --- embedding assembly -----------------------------------------------------

// Compressor input: the source tokens followed by the learned memory slots.
template <class T>
Mat<T> CompressorDecoder<T>::compressor_embedding(const TokenSeq& x) const {
    const CompressorDecoder<T>& m = *this;
    const int L = static_cast<int>(x.size());
    const int M = m.ccfg.memory_slots;
    const int d = m.comp_cfg.d_model;
    const Mat<T>& wte = m.params[m.params.find("comp.wte")];
    const Mat<T>& wpe = m.params[m.params.find("comp.wpe")];
    const Mat<T>& mem = m.params[m.mem_ix];
    Mat<T> emb(L + M, d);
    for (int i = 0; i < L; ++i) {
        const T* te = wte.row(x[static_cast<size_t>(i)]);
        const T* pe = wpe.row(i);
        T* e = emb.row(i);
        for (int j = 0; j < d; ++j) e[j] = te[j] + pe[j];
    }
    for (int s = 0; s < M; ++s) {
        const T* me = mem.row(s);
        const T* pe = wpe.row(L + s);
        T* e = emb.row(L + s);
        for (int j = 0; j < d; ++j) e[j] = me[j] + pe[j];
    }
    return emb;
}

// Decoder input: Z rows as soft prefix embeddings, then BOS, then tokens.
template <class T>
Mat<T> CompressorDecoder<T>::decoder_embedding(const Mat<T>& z, const TokenSeq& tokens) const {
    const CompressorDecoder<T>& m = *this;
    const int M = z.rows;
    const int d = m.dec_cfg.d_model;
    const int S = M + 1 + static_cast<int>(tokens.size());
    const Mat<T>& wte = m.params[m.params.find("dec.wte")];
    const Mat<T>& wpe = m.params[m.params.find("dec.wpe")];
    Mat<T> emb(S, d);
    for (int s = 0; s < M; ++s) {
        const T* zr = z.row(s);
        const T* pe = wpe.row(s);
        T* e = emb.row(s);
        for (int j = 0; j < d; ++j) e[j] = zr[j] + pe[j];
    }
    auto put_token = [&](int pos, int32_t id) {
        const T* te = wte.row(id);
        const T* pe = wpe.row(pos);
        T* e = emb.row(pos);
        for (int j = 0; j < d; ++j) e[j] = te[j] + pe[j];
    };
    put_token(M, Vocabulary::kBos);
    for (size_t i = 0; i < tokens.size(); ++i)
        put_token(M + 1 + static_cast<int>(i), tokens[i]);
    return emb;
}

template <class T>
MemoryTensor<T> CompressorDecoder<T>::compress(const TokenSeq& x) const {
    const int L = static_cast<int>(x.size());
    const int M = ccfg.memory_slots;
    if (L < 1) throw ConfigError("compress: empty input sequence");
    if (M > L / 2)
        throw ConfigError("compress: memory_slots M = " + std::to_string(M) +
                          " violates M <= L/2 for L = " + std::to_string(L));
    if (L + M > comp_cfg.max_positions)
        throw SequenceTooLong("compress: L + M = " + std::to_string(L + M) +
                              " exceeds max_positions " + std::to_string(comp_cfg.max_positions));
    check_tokens(x);

    auto tf = Transformer<T>::bind(comp_cfg, params, "comp", false);
    auto cache = tf.forward(compressor_embedding(x), params);

    Mat<T> zpre(M, comp_cfg.d_model);
    for (int s = 0; s < M; ++s)
        std::copy(cache.lnf_out.row(L + s), cache.lnf_out.row(L + s) + comp_cfg.d_model,
                  zpre.row(s));

    MemoryTensor<T> out;
    out.source_length = L;
    if (proj_ix >= 0)
        ops::matmul_nn(zpre, params[proj_ix], out.values);
    else
        out.values = std::move(zpre);
    return out;
}

template <class T>
Mat<T> CompressorDecoder<T>::decode_logits(const MemoryTensor<T>& z, const TokenSeq& prefix) const {
    if (z.values.cols != dec_cfg.d_model)
        throw ShapeMismatch("decode_logits: Z width " + std::to_string(z.values.cols) +
                            " != decoder d_model " + std::to_string(dec_cfg.d_model));
    const int M = z.values.rows;
    const int tlen = static_cast<int>(prefix.size());
    if (M + 1 + tlen > dec_cfg.max_positions)
        throw SequenceTooLong("decode_logits: M + 1 + T exceeds decoder max_positions");
    check_tokens(prefix);

    auto tf = Transformer<T>::bind(dec_cfg, params, "dec", true);
    auto cache = tf.forward(decoder_embedding(z.values, prefix), params);
    // Rows M .. M+T-1 predict prefix tokens 1..T.
    return tf.logits_rows(cache, params, M, tlen);
}

template <class T>
TokenSeq CompressorDecoder<T>::generate_greedy(const MemoryTensor<T>& z, int max_len,
                                               const TokenSeq& prompt) const {
    if (max_len < 1) throw ConfigError("generate_greedy: max_len must be >= 1");
    check_tokens(prompt);
    auto tf = Transformer<T>::bind(dec_cfg, params, "dec", true);
    TokenSeq tokens = prompt;
    TokenSeq out;
    const int M = z.values.rows;
    while (static_cast<int>(out.size()) < max_len) {
        if (M + 1 + static_cast<int>(tokens.size()) + 1 > dec_cfg.max_positions) break;
        auto cache = tf.forward(decoder_embedding(z.values, tokens), params);
        const Mat<T> logits = tf.logits_rows(cache, params, cache.seq_len() - 1, 1);
        int32_t best = 0;
        for (int v = 1; v < logits.cols; ++v)
            if (logits.at(0, v) > logits.at(0, best)) best = v;
        if (best == Vocabulary::kEos) break;
        tokens.push_back(best);
        out.push_back(best);
    }
    return out;
}

template <class T>
double mean_logprob_rows(const Mat<T>& logits, const TokenSeq& targets) {
    if (static_cast<size_t>(logits.rows) != targets.size())
        throw ShapeMismatch("mean_logprob_rows: row count != target count");
    double total = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        const T* row = logits.row(i);
        double mx = static_cast<double>(row[0]);
        for (int v = 1; v < logits.cols; ++v) mx = std::max(mx, static_cast<double>(row[v]));
        double lse = 0.0;
        for (int v = 0; v < logits.cols; ++v) lse += std::exp(static_cast<double>(row[v]) - mx);
        lse = mx + std::log(lse);
        total += static_cast<double>(row[targets[static_cast<size_t>(i)]]) - lse;
    }
    return total / static_cast<double>(logits.rows);
}

template <class T>
double CompressorDecoder<T>::score_candidate(const MemoryTensor<T>& z, const TokenSeq& question,
                                             const TokenSeq& candidate) const {
    if (candidate.empty()) throw EmptyCandidate("score_candidate: empty candidate");
    check_tokens(question);
    check_tokens(candidate);

    TokenSeq tokens;
    tokens.reserve(question.size() + candidate.size() + 2);
    tokens.push_back(Vocabulary::kSep);
    tokens.insert(tokens.end(), question.begin(), question.end());
    tokens.push_back(Vocabulary::kSep);
    const int cand_start = static_cast<int>(tokens.size()); // offset within `tokens`
    tokens.insert(tokens.end(), candidate.begin(), candidate.end());

    const int M = z.values.rows;
    if (M + 1 + static_cast<int>(tokens.size()) > dec_cfg.max_positions)
        throw SequenceTooLong("score_candidate: sequence exceeds decoder max_positions");

    auto tf = Transformer<T>::bind(dec_cfg, params, "dec", true);
    auto cache = tf.forward(decoder_embedding(z.values, tokens), params);
    // Prediction rows for candidate token i sit at position M + cand_start + i.
    const Mat<T> logits =
        tf.logits_rows(cache, params, M + cand_start, static_cast<int>(candidate.size()));
    return mean_logprob_rows(logits, candidate);
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;
template struct CompressorDecoder<float>;
template struct CompressorDecoder<double>;
template double mean_logprob_rows<float>(const MatF&, const TokenSeq&);
template double mean_logprob_rows<double>(const MatD&, const TokenSeq&);

} // namespace flab
