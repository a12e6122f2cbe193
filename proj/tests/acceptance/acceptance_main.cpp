// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Training-based criteria run real toy trainings, so the
// full suite takes tens of minutes on one desktop core.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <omp.h>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flab/analysis.hpp"
#include "flab/checkpoint.hpp"
#include "flab/diagnostics.hpp"
#include "flab/factworld.hpp"
#include "flab/metrics.hpp"
#include "flab/responder.hpp"
#include "flab/tasks.hpp"
#include "flab/training.hpp"
#include "../test_helpers.hpp"

using namespace flab;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- harness ---

struct Check {
    std::vector<std::string> failures;
    void require(bool ok, const std::string& msg) {
        if (!ok) failures.push_back(msg);
    }
    template <class T>
    void close(T got, T want, T tol, const std::string& what) {
        if (!(std::fabs(double(got - want)) <= double(tol)))
            failures.push_back(what + ": got " + std::to_string(got) + ", want " +
                               std::to_string(want) + " +/- " + std::to_string(tol));
    }
};

struct Criterion {
    int id;
    std::string name;
    std::function<void(Check&)> fn;
};

fs::path work_dir() {
    static fs::path p = [] {
        fs::path d = fs::temp_directory_path() / "flab_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::string cli_binary() {
    const char* b = std::getenv("FIDELITY_LAB_BIN");
    return b ? b : "";
}

int run_cli(const std::string& args, std::string* out = nullptr) {
    const std::string cmd = cli_binary() + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return -1;
    std::array<char, 4096> buf;
    std::string acc;
    while (fgets(buf.data(), buf.size(), p)) acc += buf.data();
    if (out) *out = acc;
    const int status = pclose(p);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Shared toy corpus: 64-token reconstruction sequences from a fixed world.
struct ToyCorpus {
    Vocabulary vocab;
    std::vector<CompressionSample> samples; // length 64, k = 64
};

ToyCorpus toy_corpus_64(size_t n_samples, int n_paragraphs) {
    WorldGenConfig wc;
    wc.seed = 20260810;
    wc.n_entities = 20;
    wc.n_attributes = 3;
    wc.n_relations = 14;
    wc.n_paragraphs = n_paragraphs;
    wc.min_paragraph_tokens = 70;
    auto gen = build_fact_world(wc);
    ToyCorpus out;
    out.vocab = Vocabulary::from_words(world_vocabulary_words(gen.world));
    for (const auto& p : gen.corpus.paragraphs) {
        const auto words = metrics::split_words(p);
        if (words.size() < 64) continue;
        CompressionSample s;
        for (int i = 0; i < 64; ++i) s.x.push_back(out.vocab.id_of(words[size_t(i)]));
        s.split_k = 64;
        out.samples.push_back(std::move(s));
        if (out.samples.size() == n_samples) break;
    }
    return out;
}

Model rate_model(const ToyCorpus& c, int memory_slots, uint64_t seed) {
    ModelConfig comp;
    comp.role = Role::compressor;
    comp.n_layers = 2;
    comp.n_heads = 4;
    comp.d_model = 64;
    comp.d_ff = 256;
    comp.vocab_size = c.vocab.size();
    comp.max_positions = 96;
    ModelConfig dec = comp;
    dec.role = Role::decoder;
    dec.max_positions = 96;
    CompressionConfig cc;
    cc.memory_slots = memory_slots;
    cc.train_prefix_len = 64;
    return Model::init(comp, dec, cc, c.vocab, seed);
}

double mean_reconstruction_bleu(const Model& m, const std::vector<CompressionSample>& samples) {
    std::vector<double> scores;
    for (const auto& s : samples) {
        const auto z = m.compress(s.x);
        const auto gen = m.generate_greedy(z, s.length());
        scores.push_back(metrics::bleu(gen, s.x).score);
    }
    return metrics::corpus_bleu(scores);
}

int exact_matches(const Model& m, const std::vector<CompressionSample>& samples) {
    int exact = 0;
    for (const auto& s : samples) {
        const auto z = m.compress(s.x);
        if (m.generate_greedy(z, s.length()) == s.x) ++exact;
    }
    return exact;
}

// ------------------------------------------------------------- criteria ----

void c01_gradient_fidelity(Check& ck) {
    const double t0 = omp_get_wtime();
    testutil::ToySpec ts;
    ts.vocab_total = 64;
    ts.d_comp = 32;
    ts.d_dec = 32;
    ts.n_layers = 2;
    ts.n_heads = 4;
    ts.d_ff = 64;
    ts.memory_slots = 2;
    ts.max_positions = 24;
    ts.seed = 11;
    CompressorDecoder<double> model = testutil::make_toy_model(ts).cast<double>();
    CompressionSample s;
    s.x = testutil::toy_tokens(10, ts.vocab_total);
    s.split_k = 8;

    auto rep = testutil::finite_difference_check(model, s, 1e-5, /*stride=*/1);
    ck.require(rep.checked == model.params.scalar_count(),
               "did not sweep every parameter scalar");
    ck.require(rep.max_rel_err <= 1e-3,
               "max relative gradient error " + std::to_string(rep.max_rel_err) + " in " +
                   rep.worst_tensor);
    const double elapsed = omp_get_wtime() - t0;
    ck.require(elapsed < 120.0, "gradient check took " + std::to_string(elapsed) + " s (>= 2 min)");
    std::printf("        checked %zu parameters, max rel err %.3g, %.1f s\n", rep.checked,
                rep.max_rel_err, elapsed);
}

void c02_loss_decomposition(Check& ck) {
    testutil::ToySpec ts;
    ts.vocab_total = 64;
    Model m = testutil::make_toy_model(ts);
    std::mt19937 gen(5);
    for (int i = 0; i < 100; ++i) {
        std::uniform_int_distribution<int> len(6, 16);
        CompressionSample s;
        const int n = len(gen);
        s.x = testutil::toy_tokens(n, ts.vocab_total, static_cast<uint64_t>(i));
        std::uniform_int_distribution<int> kd(4, n);
        s.split_k = kd(gen);
        const auto lb = total_loss(s, m);
        ck.require(lb.total == lb.loss_re + lb.loss_nt,
                   "total != loss_re + loss_nt at sample " + std::to_string(i));
    }

    Model uniform = m;
    for (size_t t = 0; t < uniform.params.count(); ++t)
        if (uniform.params.names[t].rfind("dec.", 0) == 0)
            for (auto& e : uniform.params.tensors[t].a) e = 0.0f;
    CompressionSample s;
    s.x = testutil::toy_tokens(4, ts.vocab_total);
    s.split_k = 4;
    const auto lb = total_loss(s, uniform);
    ck.close(lb.loss_re, 4.0 * std::log(64.0), 1e-6, "uniform decoder L_re");
    ck.require(lb.loss_nt == 0.0, "empty continuation must contribute exactly zero");
}

void c03_overfit_capacity(Check& ck) {
    const double t0 = omp_get_wtime();
    auto corpus = toy_corpus_64(32, 40);
    ck.require(corpus.samples.size() == 32, "expected 32 toy sequences");
    Model m = rate_model(corpus, 16, 31); // rate 64/16 = 4x

    TrainConfig tc;
    tc.steps = 5000;
    tc.batch_size = 8;
    tc.lr.peak = 3e-3;
    tc.lr.warmup_steps = 100;
    tc.seed = 17;
    AdamState adam = AdamState::init(m.params);

    Rng order(tc.seed);
    std::vector<int> ix(corpus.samples.size());
    std::iota(ix.begin(), ix.end(), 0);
    size_t cursor = ix.size();

    long step = 0;
    double per_token = 1e9;
    int exact = 0;
    bool reached = false;
    while (step < tc.steps) {
        ++step;
        std::vector<CompressionSample> batch;
        for (int b = 0; b < tc.batch_size; ++b) {
            if (cursor >= ix.size()) {
                order.shuffle(ix.begin(), ix.end());
                cursor = 0;
            }
            batch.push_back(corpus.samples[size_t(ix[cursor++])]);
        }
        train_step(batch, m, adam, tc, step);
        if (step % 250 == 0 || step == tc.steps) {
            const auto pl = mean_probe_loss(m, corpus.samples);
            per_token = pl.total / 64.0;
            if (per_token < 0.1) {
                exact = exact_matches(m, corpus.samples);
                if (exact >= 31) { // 95% of 32
                    reached = true;
                    break;
                }
            }
        }
    }
    if (!reached) exact = exact_matches(m, corpus.samples);
    const double elapsed = omp_get_wtime() - t0;
    ck.require(per_token < 0.1,
               "per-token loss " + std::to_string(per_token) + " >= 0.1 nats");
    ck.require(exact >= 31, "greedy exact-match " + std::to_string(exact) + "/32 < 95%");
    ck.require(step <= 5000, "needed more than 5000 steps");
    ck.require(elapsed < 1800.0, "took " + std::to_string(elapsed) + " s (>= 30 min)");
    std::printf("        exact %d/32, per-token loss %.4f after %ld steps, %.0f s\n", exact,
                per_token, step, elapsed);
}

void c04_rate_monotonicity(Check& ck) {
    // Reconstruction is scored on held-out sequences: with a small fixed
    // corpus the decoder memorizes everything and Z degenerates into an
    // index, so the rate only binds out of sample.
    auto corpus = toy_corpus_64(512, 580);
    ck.require(corpus.samples.size() == 512, "expected 512 toy sequences");
    TrainConfig tc;
    tc.steps = 2200;
    tc.batch_size = 8;
    tc.lr.peak = 3e-3;
    tc.lr.warmup_steps = 100;
    tc.seed = 23;
    tc.checkpoint_interval = 1 << 30;
    tc.probe_interval = 1 << 30;
    tc.probe_set_size = 32; // the held-out tail

    std::map<int, double> bleu_by_rate;
    for (int m_slots : {16, 4, 1}) {
        Model m = rate_model(corpus, m_slots, 47);
        auto result = run_training(m, corpus.samples, tc, "");
        std::vector<CompressionSample> held_out;
        for (int ix : result.probe_indices) held_out.push_back(corpus.samples[size_t(ix)]);
        bleu_by_rate[64 / m_slots] = mean_reconstruction_bleu(m, held_out);
    }
    std::printf("        held-out BLEU by rate: 4x %.4f, 16x %.4f, 64x %.4f\n", bleu_by_rate[4],
                bleu_by_rate[16], bleu_by_rate[64]);
    ck.require(bleu_by_rate[4] >= bleu_by_rate[16] + 0.02,
               "BLEU(4x) does not beat BLEU(16x) by the 0.02 margin");
    ck.require(bleu_by_rate[16] >= bleu_by_rate[64] + 0.02,
               "BLEU(16x) does not beat BLEU(64x) by the 0.02 margin");
}

void c05_effective_rank_oracle(Check& ck) {
    // Constructed spectra via orthogonal factors.
    auto with_spectrum = [](const std::vector<double>& sigma, int rows, int cols,
                            unsigned seed) {
        std::mt19937 gen(seed);
        std::normal_distribution<double> nd(0, 1);
        // Gram-Schmidt on random Gaussian columns.
        auto ortho = [&](int n) {
            std::vector<std::vector<double>> q(static_cast<size_t>(n),
                                               std::vector<double>(static_cast<size_t>(n)));
            for (auto& col : q) {
                for (auto& v : col) v = nd(gen);
            }
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < i; ++j) {
                    double dot = 0;
                    for (int r = 0; r < n; ++r) dot += q[size_t(i)][size_t(r)] * q[size_t(j)][size_t(r)];
                    for (int r = 0; r < n; ++r) q[size_t(i)][size_t(r)] -= dot * q[size_t(j)][size_t(r)];
                }
                double norm = 0;
                for (int r = 0; r < n; ++r) norm += q[size_t(i)][size_t(r)] * q[size_t(i)][size_t(r)];
                norm = std::sqrt(norm);
                for (int r = 0; r < n; ++r) q[size_t(i)][size_t(r)] /= norm;
            }
            return q;
        };
        auto qa = ortho(rows), qb = ortho(cols);
        MatD m(rows, cols);
        for (size_t s = 0; s < sigma.size(); ++s)
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    m.at(i, j) += sigma[s] * qa[s][size_t(i)] * qb[s][size_t(j)];
        return m;
    };

    ck.close(diagnostics::effective_rank(with_spectrum({1, 1, 1, 1}, 6, 5, 1)).erank, 4.0, 1e-6,
             "uniform spectrum erank");
    ck.close(diagnostics::effective_rank(with_spectrum({3.7}, 5, 4, 2)).erank, 1.0, 1e-6,
             "rank-1 erank");
    ck.close(diagnostics::effective_rank(with_spectrum({2, 1, 1}, 5, 4, 3)).erank,
             2.8284271247461903, 1e-6, "spectrum (2,1,1) erank");

    // Scale invariance at double precision (the spectrum normalization is
    // exact; the SVD of the rescaled matrix agrees to machine precision).
    auto z = with_spectrum({2.9, 1.3, 0.4}, 7, 5, 4);
    const double base = diagnostics::effective_rank(z).erank;
    for (double c : {1e-3, 1.0, 1e3}) {
        MatD scaled = z;
        for (auto& v : scaled.a) v *= c;
        ck.close(diagnostics::effective_rank(scaled).erank, base, 1e-12,
                 "scale invariance at c = " + std::to_string(c));
    }

    std::mt19937 gen(9);
    std::normal_distribution<double> nd(0, 1);
    for (int iter = 0; iter < 1000; ++iter) {
        std::uniform_int_distribution<int> rd(2, 14), cd(1, 20);
        const int r = rd(gen), c = cd(gen);
        MatD m(r, c);
        for (auto& v : m.a) v = nd(gen);
        const double e = diagnostics::effective_rank(m).erank;
        if (!(e >= 1.0 - 1e-9 && e <= std::min(r, c) + 1e-9)) {
            ck.require(false, "erank bound violated: " + std::to_string(e) + " for " +
                                  std::to_string(r) + "x" + std::to_string(c));
            return;
        }
    }
}

void c06_entropy_oracle(Check& ck) {
    MatF onehot(4, 32);
    for (int i = 0; i < 4; ++i) onehot.at(i, i * 3) = 300.0f;
    for (double h : diagnostics::entropy_of_logits(onehot).per_step)
        ck.close(h, 0.0, 1e-12, "one-hot entropy");

    MatF uni(3, 64);
    ck.close(diagnostics::entropy_of_logits(uni).mean, std::log(64.0), 1e-9,
             "uniform entropy over 64");

    std::mt19937 gen(13);
    std::normal_distribution<float> nd(0, 6);
    for (int iter = 0; iter < 1000; ++iter) {
        std::uniform_int_distribution<int> vd(2, 80);
        const int v = vd(gen);
        MatF logits(1, v);
        for (auto& e : logits.a) e = nd(gen);
        const double h = diagnostics::entropy_of_logit_row(logits.row(0), v);
        if (!(h >= 0.0 && h <= std::log(double(v)) + 1e-12)) {
            ck.require(false, "entropy bound violated");
            return;
        }
        // brute force from the same logits
        long double mx = logits.a[0];
        for (float e : logits.a) mx = std::max<long double>(mx, e);
        long double zs = 0;
        for (float e : logits.a) zs += expl((long double)e - mx);
        long double bf = 0;
        for (float e : logits.a) {
            const long double p = expl((long double)e - mx) / zs;
            bf -= p * logl(p);
        }
        if (std::fabs(h - double(bf)) > 1e-9) {
            ck.require(false, "stable log-softmax disagrees with brute force");
            return;
        }
    }
}

void c07_correlation_oracle(Check& ck) {
    using namespace analysis;
    const std::vector<double> x = {1, 2, 3, 4};
    ck.close(pearson(x, {3, 5, 7, 9}).first, 1.0, 1e-12, "pearson of y=2x+1");
    ck.close(pearson(x, {-1, -2, -3, -4}).first, -1.0, 1e-12, "pearson of y=-x");
    ck.close(pearson(x, {2, 1, 4, 3}).first, 0.6, 1e-12, "pearson hand example");
    ck.close(spearman({0.0, 0.5, 1.5, 3.0}, {1.0, 1.6487, 4.4817, 20.0855}).first, 1.0, 1e-12,
             "spearman of exp");
    ck.close(spearman(x, {9, 7, 5, 3}).first, -1.0, 1e-12, "spearman of reversed");
    // Mid-ranks: (1, 2.5, 2.5, 4) vs (1, 3, 2, 4) -> 4.5/sqrt(22.5).
    ck.close(spearman({1, 2, 2, 4}, {1, 3, 2, 4}).first, 0.9486832980505139, 1e-12,
             "spearman mid-rank ties example");

    std::mt19937 gen(21);
    std::uniform_real_distribution<double> u(-4, 4);
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<double> a(10), b(10);
        for (auto& v : a) v = u(gen);
        for (auto& v : b) v = u(gen);
        const double base = spearman(a, b).first;
        auto fa = a;
        auto gb = b;
        for (auto& v : fa) v = v * v * v + 2.0 * v; // strictly increasing
        for (auto& v : gb) v = std::exp(0.5 * v);
        if (spearman(fa, gb).first != base) {
            ck.require(false, "spearman not exactly invariant under monotone transforms");
            return;
        }
    }

    // p-values against adaptive-Simpson quadrature of the t density.
    auto t_pdf = [](double v, int nu) {
        const double lc = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                          0.5 * std::log(nu * M_PI);
        return std::exp(lc - (nu + 1.0) / 2.0 * std::log1p(v * v / nu));
    };
    std::function<double(double, double, int, int, double, double, double)> simpson =
        [&](double a, double b, int nu, int depth, double fa, double fm, double fb) -> double {
        const double m = 0.5 * (a + b);
        const double flm = t_pdf(0.5 * (a + m), nu), frm = t_pdf(0.5 * (m + b), nu);
        const double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
        const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
        if (depth <= 0 || std::fabs(left + right - whole) < 1e-14)
            return left + right + (left + right - whole) / 15.0;
        return simpson(a, m, nu, depth - 1, fa, flm, fm) +
               simpson(m, b, nu, depth - 1, fm, frm, fb);
    };
    for (double t : {0.25, 0.9, 1.5, 2.2, 3.7, 5.0}) {
        for (int nu : {2, 4, 7, 15, 40}) {
            const double got = student_t_two_sided_p(t, nu);
            const double half =
                simpson(0.0, t, nu, 42, t_pdf(0.0, nu), t_pdf(t / 2.0, nu), t_pdf(t, nu));
            const double want = 1.0 - 2.0 * half;
            if (std::fabs(got - want) > 1e-9) {
                ck.require(false, "p-value off t-CDF reference at t=" + std::to_string(t) +
                                      ", nu=" + std::to_string(nu));
                return;
            }
        }
    }
}

void c08_evaluator_closed_loop(Check& ck) {
    WorldGenConfig wc;
    wc.seed = 99;
    wc.n_entities = 14;
    wc.n_attributes = 3;
    wc.n_relations = 10;
    wc.n_paragraphs = 30;
    auto gen = build_fact_world(wc);
    CounterfactualConfig cc;
    cc.fraction = 0.5;
    auto ow = make_counterfactual_items(gen.world, cc);
    DriftGenConfig dc;
    dc.per_dimension_count = 5;
    auto dr = make_drift_items(gen.world, gen.corpus.paragraphs, dc);
    ck.require(!ow.empty() && !dr.empty(), "item generation produced empty datasets");

    VerbatimResponder verbatim;
    ck.require(eval_overwrite(verbatim, ow).accuracy == 1.0,
               "verbatim oracle overwrite accuracy != 1.0");
    auto vrep = eval_drift(verbatim, dr, 80);
    int ans_total = 0, ans_correct = 0;
    for (size_t i = 0; i < dr.size(); ++i)
        if (dr[i].gold != kUnanswerableSentinel) {
            ++ans_total;
            ans_correct += vrep.items[i].correct ? 1 : 0;
        }
    ck.require(ans_total > 0 && ans_correct == ans_total,
               "verbatim oracle answerable drift accuracy != 1.0 (" +
                   std::to_string(ans_correct) + "/" + std::to_string(ans_total) + ")");

    PriorOnlyResponder prior(gen.world);
    ck.require(eval_overwrite(prior, ow).accuracy == 0.0,
               "prior-only oracle overwrite accuracy != 0.0");

    AbstainResponder abstain;
    auto arep = eval_drift(abstain, dr, 80);
    int unanswerable = 0;
    for (const auto& it : dr)
        if (it.gold == kUnanswerableSentinel) ++unanswerable;
    const double share = double(unanswerable) / double(dr.size());
    ck.require(arep.accuracy == share, "always-abstain accuracy != unanswerable share exactly");
}

void c09_bleu_oracle(Check& ck) {
    const std::vector<int32_t> cand = {0, 1, 2, 3, 4, 5};
    const std::vector<int32_t> ref = {0, 1, 2, 3, 6, 7};
    ck.close(metrics::bleu(cand, ref).score, 0.5081, 1e-4, "hand-counted BLEU");
    const std::vector<int32_t> x = {5, 6, 7, 8, 9};
    ck.require(metrics::bleu(x, x).score == 1.0, "identity BLEU != 1.0");
    ck.require(metrics::bleu({}, x).score == 0.0, "empty candidate BLEU != 0.0");
}

void c10_pipeline_figure_shapes(Check& ck) {
    const double t0 = omp_get_wtime();
    if (cli_binary().empty()) {
        ck.require(false, "FIDELITY_LAB_BIN not set");
        return;
    }
    const fs::path root = work_dir() / "pipeline";
    fs::create_directories(root);
    const std::string data = (root / "data").string();
    const std::string run = (root / "run").string();
    const std::string an = (root / "analysis").string();

    std::string out;
    int rc = run_cli("gen-data --out " + data +
                         " --seed 7 --entities 16 --attributes 3 --relations 12"
                         " --paragraphs 80 --min-paragraph-tokens 44",
                     &out);
    ck.require(rc == 0, "gen-data failed: " + out);
    if (rc != 0) return;

    rc = run_cli("train --corpus " + data + "/corpus.txt --vocab " + data + "/vocab.txt" +
                     " --out " + run +
                     " --rate 16 --seq-len 40 --prefix-len 32"
                     " --compressor-size tiny --decoder-size tiny"
                     " --steps 8000 --batch-size 8 --probe-interval 750"
                     " --checkpoint-interval 2000 --probe-set 16 --seed 7",
                 &out);
    ck.require(rc == 0, "train failed: " + out);
    if (rc != 0) return;

    rc = run_cli("analyze dynamics --run " + run + " --out " + an + " --smooth-window 100", &out);
    ck.require(rc == 0, "analyze dynamics failed: " + out);
    if (rc != 0) return;

    std::ifstream is(an + "/dynamics_report.json");
    ck.require(is.good(), "dynamics_report.json missing");
    nlohmann::json rep;
    is >> rep;

    // (a) smoothed loss non-increasing over the final half
    ck.require(rep.contains("loss_smoothing"), "report lacks the loss smoothing block");
    if (rep.contains("loss_smoothing")) {
        ck.require(rep["loss_smoothing"]["final_half_non_increasing"].get<bool>(),
                   "smoothed loss increases during the final half of training");
        ck.require(rep["loss_smoothing"]["window"].get<int>() == 100, "wrong smoothing window");
    }

    // (b) trajectories and peak detector produce valid, consistent output
    const auto records = read_metrics_csv(run + "/metrics.csv");
    ck.require(records.size() == 10, "expected 10 probe records at interval 750 over 8000 steps");
    for (const auto& r : records)
        ck.require(std::isfinite(r.erank) && std::isfinite(r.entropy) &&
                       std::isfinite(r.loss_total),
                   "non-finite probe value at step " + std::to_string(r.step));
    const long peak = rep["erank_peak_step"].get<long>();
    const bool interior = rep["erank_peak_interior"].get<bool>();
    size_t best = 0;
    for (size_t i = 1; i < records.size(); ++i)
        if (records[i].erank >= records[best].erank) best = i;
    ck.require(peak == records[best].step, "reported peak step disagrees with the trajectory");
    ck.require(interior == (best > 0 && best + 1 < records.size()),
               "peak-interior flag inconsistent with the trajectory");
    if (interior)
        ck.require(peak > records.front().step && peak < records.back().step,
                   "interior peak not strictly inside the run interval");

    for (const char* f : {"erank.svg", "entropy.svg", "loss.svg"})
        ck.require(fs::exists(fs::path(an) / f), std::string(f) + " missing");

    const double elapsed = omp_get_wtime() - t0;
    ck.require(elapsed < 7200.0, "pipeline took " + std::to_string(elapsed) + " s (>= 2 h)");
    std::printf("        8000 steps, peak step %ld (%s), %.0f s\n", peak,
                interior ? "interior" : "boundary", elapsed);
}

void c11_decoupling_detector(Check& ck) {
    // Library route.
    std::vector<analysis::RunSummary> runs = {
        {"qwen3-0.6b", 0.95, 0.71, std::nullopt},
        {"qwen3-32b", 0.97, 0.68, std::nullopt},
    };
    auto rep = analysis::decoupling_report(runs, 0.02);
    ck.require(rep.flags.size() == 1, "expected exactly one paradox flag, got " +
                                          std::to_string(rep.flags.size()));
    if (!rep.flags.empty()) {
        ck.require(rep.flags[0].from_label == "qwen3-0.6b" &&
                       rep.flags[0].to_label == "qwen3-32b",
                   "flag names the wrong pair");
        ck.require(rep.flags[0].degraded_metrics == std::vector<std::string>{"overwrite"},
                   "flag cites the wrong metric");
    }

    // CLI route.
    if (!cli_binary().empty()) {
        const fs::path dir = work_dir() / "decouple";
        fs::create_directories(dir);
        std::ofstream os(dir / "runs.csv");
        os << "label,bleu,overwrite,drift\nqwen3-0.6b,0.95,0.71,\nqwen3-32b,0.97,0.68,\n";
        os.close();
        std::string out;
        const int rc = run_cli("analyze decouple --runs " + (dir / "runs.csv").string() +
                                   " --delta 0.02 --out " + (dir / "out").string(),
                               &out);
        ck.require(rc == 0, "decouple command failed");
        ck.require(out.find("paradox flags: 1") != std::string::npos,
                   "decouple command did not report exactly one flag");
    }
}

} // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "gradient fidelity", c01_gradient_fidelity},
        {2, "loss decomposition", c02_loss_decomposition},
        {3, "overfit capacity", c03_overfit_capacity},
        {4, "compression-rate monotonicity", c04_rate_monotonicity},
        {5, "effective-rank oracle", c05_effective_rank_oracle},
        {6, "entropy oracle", c06_entropy_oracle},
        {7, "correlation oracle", c07_correlation_oracle},
        {8, "evaluator closed loop", c08_evaluator_closed_loop},
        {9, "BLEU oracle", c09_bleu_oracle},
        {10, "pipeline figure shapes", c10_pipeline_figure_shapes},
        {11, "decoupling detector", c11_decoupling_detector},
    };

    // Dev convenience: FLAB_ACCEPT_ONLY=3,4 runs a subset; ctest runs all.
    std::vector<int> only;
    if (const char* env = std::getenv("FLAB_ACCEPT_ONLY")) {
        std::stringstream ss(env);
        std::string tok;
        while (std::getline(ss, tok, ',')) only.push_back(std::atoi(tok.c_str()));
    }

    int failures = 0;
    for (auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const double t0 = omp_get_wtime();
        Check ck;
        try {
            c.fn(ck);
        } catch (const std::exception& e) {
            ck.failures.push_back(std::string("exception: ") + e.what());
        }
        const double dt = omp_get_wtime() - t0;
        if (ck.failures.empty()) {
            std::printf("[ PASS ] criterion %2d: %s (%.1f s)\n", c.id, c.name.c_str(), dt);
        } else {
            ++failures;
            std::printf("[ FAIL ] criterion %2d: %s (%.1f s)\n", c.id, c.name.c_str(), dt);
            for (const auto& f : ck.failures) std::printf("         - %s\n", f.c_str());
        }
        std::fflush(stdout);
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
