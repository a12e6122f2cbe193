#include "flab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flab/checkpoint.hpp"
#include "flab/diagnostics.hpp"
#include "flab/errors.hpp"
#include "flab/ops.hpp"
#include "flab/transformer.hpp"

namespace flab {

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train config: steps must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (checkpoint_interval < 1 || probe_interval < 1)
        throw ConfigError("train config: intervals must be >= 1");
    if (lr.warmup_steps < 0 || lr.peak < 0) throw ConfigError("train config: bad lr schedule");
}

void validate_sample(const CompressionSample& s, const Model& m) {
    const int n = s.length();
    if (s.split_k < 1 || s.split_k > n)
        throw ConfigError("sample: split k must satisfy 1 <= k <= n");
    if (m.ccfg.memory_slots > s.split_k / 2)
        throw ConfigError("sample: prefix of length " + std::to_string(s.split_k) +
                          " too short for M = " + std::to_string(m.ccfg.memory_slots));
    m.check_tokens(s.x);
}

namespace {

template <class T>
LossBreakdown loss_impl(const CompressionSample& s, const CompressorDecoder<T>& m, GradSet<T>* g) {
    const int n = s.length();
    const int k = s.split_k;
    const int M = m.ccfg.memory_slots;
    const int dc = m.comp_cfg.d_model;
    if (k < 1 || k > n) throw ConfigError("total_loss: split k out of range");
    if (M > k / 2) throw ConfigError("total_loss: M <= k/2 violated");
    if (k + M > m.comp_cfg.max_positions)
        throw SequenceTooLong("total_loss: compressor input exceeds max_positions");
    if (M + 1 + n > m.dec_cfg.max_positions)
        throw SequenceTooLong("total_loss: decoder input exceeds max_positions");
    m.check_tokens(s.x);

    const TokenSeq prefix(s.x.begin(), s.x.begin() + k);

    auto comp_tf = Transformer<T>::bind(m.comp_cfg, m.params, "comp", false);
    auto dec_tf = Transformer<T>::bind(m.dec_cfg, m.params, "dec", true);

    auto comp_cache = comp_tf.forward(m.compressor_embedding(prefix), m.params);
    Mat<T> zpre(M, dc);
    for (int r = 0; r < M; ++r)
        std::copy(comp_cache.lnf_out.row(k + r), comp_cache.lnf_out.row(k + r) + dc, zpre.row(r));
    Mat<T> z;
    if (m.proj_ix >= 0)
        ops::matmul_nn(zpre, m.params[m.proj_ix], z);
    else
        z = zpre;

    auto dec_cache = dec_tf.forward(m.decoder_embedding(z, s.x), m.params);
    const Mat<T> logits = dec_tf.logits_rows(dec_cache, m.params, M, n);

    // Per-row stable log-softmax, double accumulation; rows t < k belong to
    // the reconstruction term.
    LossBreakdown lb;
    Mat<T> dlogits;
    if (g) dlogits.resize(n, logits.cols);
    for (int t = 0; t < n; ++t) {
        const T* row = logits.row(t);
        double mx = static_cast<double>(row[0]);
        for (int v = 1; v < logits.cols; ++v) mx = std::max(mx, static_cast<double>(row[v]));
        double lse = 0.0;
        for (int v = 0; v < logits.cols; ++v) lse += std::exp(static_cast<double>(row[v]) - mx);
        lse = mx + std::log(lse);
        const int32_t gold = s.x[static_cast<size_t>(t)];
        const double nll = lse - static_cast<double>(row[gold]);
        if (t < k)
            lb.loss_re += nll;
        else
            lb.loss_nt += nll;
        if (g) {
            T* dst = dlogits.row(t);
            for (int v = 0; v < logits.cols; ++v)
                dst[v] = static_cast<T>(std::exp(static_cast<double>(row[v]) - lse));
            dst[gold] -= T(1);
        }
    }
    lb.total = lb.loss_re + lb.loss_nt;

    if (!g) return lb;
    GradSet<T>& gr = *g;

    // Decoder backward.
    Mat<T> dec_demb = dec_tf.backward_logits(dec_cache, m.params, dlogits, M, gr);
    {
        Mat<T>& dwte = gr[static_cast<size_t>(m.params.find("dec.wte"))];
        Mat<T>& dwpe = gr[static_cast<size_t>(m.params.find("dec.wpe"))];
        const int d = m.dec_cfg.d_model;
        for (int r = 0; r < dec_demb.rows; ++r) {
            const T* src = dec_demb.row(r);
            T* pe = dwpe.row(r);
            for (int j = 0; j < d; ++j) pe[j] += src[j];
            if (r >= M) {
                const int32_t id = r == M ? Vocabulary::kBos : s.x[static_cast<size_t>(r - M - 1)];
                T* te = dwte.row(id);
                for (int j = 0; j < d; ++j) te[j] += src[j];
            }
        }
    }

    // Gradient w.r.t. Z are the first M decoder-embedding rows.
    Mat<T> dz(M, m.dec_cfg.d_model);
    for (int r = 0; r < M; ++r)
        std::copy(dec_demb.row(r), dec_demb.row(r) + m.dec_cfg.d_model, dz.row(r));

    Mat<T> dzpre;
    if (m.proj_ix >= 0) {
        ops::matmul_tn(zpre, dz, gr[static_cast<size_t>(m.proj_ix)], true);
        ops::matmul_nt(dz, m.params[m.proj_ix], dzpre);
    } else {
        dzpre = std::move(dz);
    }

    // Compressor backward from the memory rows of lnf output.
    Mat<T> d_lnf(comp_cache.seq_len(), dc);
    for (int r = 0; r < M; ++r)
        std::copy(dzpre.row(r), dzpre.row(r) + dc, d_lnf.row(k + r));
    Mat<T> comp_demb = comp_tf.backward_hidden(comp_cache, m.params, d_lnf, gr);
    {
        Mat<T>& dwte = gr[static_cast<size_t>(m.params.find("comp.wte"))];
        Mat<T>& dwpe = gr[static_cast<size_t>(m.params.find("comp.wpe"))];
        Mat<T>& dmem = gr[static_cast<size_t>(m.mem_ix)];
        for (int r = 0; r < comp_demb.rows; ++r) {
            const T* src = comp_demb.row(r);
            T* pe = dwpe.row(r);
            for (int j = 0; j < dc; ++j) pe[j] += src[j];
            T* dst = r < k ? dwte.row(prefix[static_cast<size_t>(r)]) : dmem.row(r - k);
            for (int j = 0; j < dc; ++j) dst[j] += src[j];
        }
    }
    return lb;
}

} // namespace

template <class T>
LossBreakdown total_loss(const CompressionSample& s, const CompressorDecoder<T>& m) {
    return loss_impl<T>(s, m, nullptr);
}

template <class T>
LossBreakdown total_loss_with_grads(const CompressionSample& s, const CompressorDecoder<T>& m,
                                    GradSet<T>& g) {
    return loss_impl<T>(s, m, &g);
}

template LossBreakdown total_loss<float>(const CompressionSample&, const CompressorDecoder<float>&);
template LossBreakdown total_loss<double>(const CompressionSample&,
                                          const CompressorDecoder<double>&);
template LossBreakdown total_loss_with_grads<float>(const CompressionSample&,
                                                    const CompressorDecoder<float>&,
                                                    GradSet<float>&);
template LossBreakdown total_loss_with_grads<double>(const CompressionSample&,
                                                     const CompressorDecoder<double>&,
                                                     GradSet<double>&);

AdamState AdamState::init(const ParameterSet<float>& ps) {
    AdamState st;
    st.m.reserve(ps.count());
    st.v.reserve(ps.count());
    for (const auto& t : ps.tensors) {
        st.m.emplace_back(t.rows, t.cols);
        st.v.emplace_back(t.rows, t.cols);
    }
    return st;
}

double lr_at(const TrainConfig& cfg, long step) {
    const auto& s = cfg.lr;
    if (s.warmup_steps > 0 && step <= s.warmup_steps)
        return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    const long decay_span = cfg.steps - s.warmup_steps;
    if (decay_span <= 0) return s.peak;
    const double prog =
        std::clamp(static_cast<double>(step - s.warmup_steps) / static_cast<double>(decay_span),
                   0.0, 1.0);
    return s.final_lr + 0.5 * (s.peak - s.final_lr) * (1.0 + std::cos(M_PI * prog));
}

namespace {

LossBreakdown train_step_impl(const std::vector<CompressionSample>& batch, Model& model,
                              AdamState& adam, const TrainConfig& cfg, long step,
                              bool parallel) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    const int b = static_cast<int>(batch.size());

    std::vector<GradSet<float>> per_sample(static_cast<size_t>(b));
    std::vector<LossBreakdown> losses(static_cast<size_t>(b));
    std::exception_ptr failure;

#pragma omp parallel for schedule(static) if (parallel && b > 1)
    for (int i = 0; i < b; ++i) {
        try {
            per_sample[static_cast<size_t>(i)] = make_grads(model.params);
            losses[static_cast<size_t>(i)] = total_loss_with_grads(
                batch[static_cast<size_t>(i)], model, per_sample[static_cast<size_t>(i)]);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    // Ordered reduction, then the 1/B batch-mean scale.
    GradSet<float>& g = per_sample[0];
    for (int i = 1; i < b; ++i)
        for (size_t t = 0; t < g.size(); ++t) {
            const auto& src = per_sample[static_cast<size_t>(i)][t];
            auto& dst = g[t];
            for (size_t e = 0; e < dst.a.size(); ++e) dst.a[e] += src.a[e];
        }
    const float inv_b = 1.0f / static_cast<float>(b);
    for (auto& t : g)
        for (auto& e : t.a) e *= inv_b;

    double norm_sq = 0.0;
    for (const auto& t : g)
        for (float e : t.a) norm_sq += static_cast<double>(e) * static_cast<double>(e);
    if (!std::isfinite(norm_sq))
        throw TrainStepError(step, "non-finite gradient; parameters left untouched", true);
    const double norm = std::sqrt(norm_sq);
    if (cfg.clip_norm > 0 && norm > cfg.clip_norm) {
        const float scale = static_cast<float>(cfg.clip_norm / norm);
        for (auto& t : g)
            for (auto& e : t.a) e *= scale;
    }

    adam.t += 1;
    const float lr = static_cast<float>(lr_at(cfg, step));
    const float b1 = static_cast<float>(cfg.adam_beta1);
    const float b2 = static_cast<float>(cfg.adam_beta2);
    const float eps = static_cast<float>(cfg.adam_eps);
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(adam.t));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(adam.t));
    for (size_t t = 0; t < g.size(); ++t) {
        if (cfg.freeze_decoder && model.params.names[t].rfind("dec.", 0) == 0) continue;
        auto& p = model.params.tensors[t];
        auto& mt = adam.m[t];
        auto& vt = adam.v[t];
        const auto& gt = g[t];
        for (size_t e = 0; e < p.a.size(); ++e) {
            const float gv = gt.a[e];
            mt.a[e] = b1 * mt.a[e] + (1.0f - b1) * gv;
            vt.a[e] = b2 * vt.a[e] + (1.0f - b2) * gv * gv;
            const float mhat = mt.a[e] / bc1;
            const float vhat = vt.a[e] / bc2;
            p.a[e] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }

    LossBreakdown mean;
    for (const auto& l : losses) {
        mean.loss_re += l.loss_re;
        mean.loss_nt += l.loss_nt;
    }
    mean.loss_re /= b;
    mean.loss_nt /= b;
    mean.total = mean.loss_re + mean.loss_nt;
    return mean;
}

} // namespace

LossBreakdown train_step(const std::vector<CompressionSample>& batch, Model& model,
                         AdamState& adam, const TrainConfig& cfg, long step) {
    return train_step_impl(batch, model, adam, cfg, step, true);
}

LossBreakdown train_step_serial(const std::vector<CompressionSample>& batch, Model& model,
                                AdamState& adam, const TrainConfig& cfg, long step) {
    return train_step_impl(batch, model, adam, cfg, step, false);
}

LossBreakdown mean_probe_loss(const Model& m, const std::vector<CompressionSample>& probe) {
    LossBreakdown out;
    std::vector<LossBreakdown> per(probe.size());
#pragma omp parallel for schedule(static) if (probe.size() > 1)
    for (int i = 0; i < static_cast<int>(probe.size()); ++i)
        per[static_cast<size_t>(i)] = total_loss(probe[static_cast<size_t>(i)], m);
    for (const auto& l : per) {
        out.loss_re += l.loss_re;
        out.loss_nt += l.loss_nt;
    }
    out.loss_re /= static_cast<double>(probe.size());
    out.loss_nt /= static_cast<double>(probe.size());
    out.total = out.loss_re + out.loss_nt;
    return out;
}

double probe_effective_rank(const Model& m, const std::vector<CompressionSample>& probe) {
    std::vector<MatF> zs(probe.size());
#pragma omp parallel for schedule(static) if (probe.size() > 1)
    for (int i = 0; i < static_cast<int>(probe.size()); ++i) {
        const auto& s = probe[static_cast<size_t>(i)];
        const TokenSeq prefix(s.x.begin(), s.x.begin() + s.split_k);
        zs[static_cast<size_t>(i)] = m.compress(prefix).values;
    }
    return diagnostics::effective_rank(diagnostics::batch_embedding_matrix(zs)).erank;
}

double probe_mean_entropy(const Model& m, const std::vector<CompressionSample>& probe) {
    std::vector<double> per(probe.size());
#pragma omp parallel for schedule(static) if (probe.size() > 1)
    for (int i = 0; i < static_cast<int>(probe.size()); ++i) {
        const auto& s = probe[static_cast<size_t>(i)];
        const TokenSeq prefix(s.x.begin(), s.x.begin() + s.split_k);
        const auto z = m.compress(prefix);
        per[static_cast<size_t>(i)] =
            diagnostics::entropy_of_logits(m.decode_logits(z, prefix)).mean;
    }
    double sum = 0;
    for (double v : per) sum += v;
    return sum / static_cast<double>(probe.size());
}

std::string metrics_csv_header() {
    return "step,loss_re,loss_nt,loss_total,erank,entropy,qa_overwrite,qa_drift";
}

namespace {
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}
} // namespace

std::string metrics_csv_row(const DynamicsRecord& r) {
    std::string row = std::to_string(r.step) + "," + fmt(r.loss_re) + "," + fmt(r.loss_nt) + "," +
                      fmt(r.loss_total) + "," + fmt(r.erank) + "," + fmt(r.entropy) + ",";
    if (r.qa_overwrite) row += fmt(*r.qa_overwrite);
    row += ",";
    if (r.qa_drift) row += fmt(*r.qa_drift);
    return row;
}

std::vector<DynamicsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open metrics csv: " + path);
    std::string line;
    if (!std::getline(is, line)) throw SchemaError("metrics csv: empty file", 1);
    if (line != metrics_csv_header())
        throw SchemaError("metrics csv: unexpected header \"" + line + "\"", 1);
    std::vector<DynamicsRecord> out;
    long lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        cells.resize(8);
        try {
            DynamicsRecord r;
            r.step = std::stol(cells[0]);
            r.loss_re = std::stod(cells[1]);
            r.loss_nt = std::stod(cells[2]);
            r.loss_total = std::stod(cells[3]);
            r.erank = std::stod(cells[4]);
            r.entropy = std::stod(cells[5]);
            if (!cells[6].empty()) r.qa_overwrite = std::stod(cells[6]);
            if (!cells[7].empty()) r.qa_drift = std::stod(cells[7]);
            out.push_back(r);
        } catch (const std::exception&) {
            throw SchemaError("metrics csv: malformed row", lineno);
        }
    }
    return out;
}

TrainingResult run_training(Model& model, const std::vector<CompressionSample>& corpus,
                            const TrainConfig& cfg, const std::string& out_dir,
                            const RunHooks& hooks) {
    cfg.validate();
    if (corpus.empty()) throw ConfigError("run_training: empty corpus");
    for (const auto& s : corpus) validate_sample(s, model);

    // Probe set: the corpus tail, frozen at run start. Tiny corpora probe on
    // the training set itself.
    std::vector<int> train_ix(corpus.size());
    std::iota(train_ix.begin(), train_ix.end(), 0);
    TrainingResult result;
    std::vector<CompressionSample> probe;
    if (static_cast<int>(corpus.size()) > cfg.probe_set_size) {
        for (size_t i = corpus.size() - static_cast<size_t>(cfg.probe_set_size);
             i < corpus.size(); ++i) {
            probe.push_back(corpus[i]);
            result.probe_indices.push_back(static_cast<int>(i));
        }
        train_ix.resize(corpus.size() - static_cast<size_t>(cfg.probe_set_size));
    } else {
        probe = corpus;
        result.probe_indices = train_ix;
    }

    std::optional<std::ofstream> metrics_os, loss_os;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        metrics_os.emplace(out_dir + "/metrics.csv", std::ios::app);
        if (!*metrics_os) throw IoError("cannot open metrics.csv under " + out_dir);
        if (std::filesystem::file_size(out_dir + "/metrics.csv") == 0)
            *metrics_os << metrics_csv_header() << "\n";
        loss_os.emplace(out_dir + "/train_loss.csv", std::ios::app);
        if (std::filesystem::file_size(out_dir + "/train_loss.csv") == 0)
            *loss_os << "step,loss_re,loss_nt,loss_total\n";
    }

    AdamState adam = AdamState::init(model.params);
    Rng order_rng(cfg.seed ^ 0x5bd1e995u);
    std::vector<int> epoch = train_ix;
    size_t cursor = epoch.size(); // force initial shuffle

    auto save_at = [&](long step) {
        if (out_dir.empty()) return;
        const std::string path = out_dir + "/" + checkpoint_filename(step);
        save_checkpoint(path, model, step);
        result.checkpoints.emplace_back(step, path);
    };

    for (long step = 1; step <= cfg.steps; ++step) {
        std::vector<CompressionSample> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (cursor >= epoch.size()) {
                order_rng.shuffle(epoch.begin(), epoch.end());
                cursor = 0;
            }
            batch.push_back(corpus[static_cast<size_t>(epoch[cursor++])]);
        }

        LossBreakdown lb;
        try {
            lb = train_step(batch, model, adam, cfg, step);
        } catch (const TrainStepError&) {
            throw;
        } catch (const Error& e) {
            throw TrainStepError(step, e.what(), false);
        }
        result.step_losses.push_back(lb);
        if (loss_os)
            *loss_os << step << "," << fmt(lb.loss_re) << "," << fmt(lb.loss_nt) << ","
                     << fmt(lb.total) << "\n";
        if (hooks.on_step) hooks.on_step(step, lb);

        if (step % cfg.probe_interval == 0) {
            DynamicsRecord rec;
            rec.step = step;
            const LossBreakdown pl = mean_probe_loss(model, probe);
            rec.loss_re = pl.loss_re;
            rec.loss_nt = pl.loss_nt;
            rec.loss_total = pl.total;
            rec.erank = probe_effective_rank(model, probe);
            rec.entropy = probe_mean_entropy(model, probe);
            if (hooks.qa_overwrite) rec.qa_overwrite = hooks.qa_overwrite(model);
            if (hooks.qa_drift) rec.qa_drift = hooks.qa_drift(model);
            result.records.push_back(rec);
            if (metrics_os) *metrics_os << metrics_csv_row(rec) << "\n" << std::flush;
        }
        if (step % cfg.checkpoint_interval == 0) save_at(step);
    }
    if (cfg.steps % cfg.checkpoint_interval != 0) save_at(cfg.steps);
    return result;
}

} // namespace flab
