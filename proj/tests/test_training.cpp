#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "flab/checkpoint.hpp"
#include "flab/training.hpp"
#include "test_helpers.hpp"

using namespace flab;
using namespace flab::testutil;

namespace {

std::vector<CompressionSample> toy_corpus(int n, int len, int k, int vocab_total) {
    std::vector<CompressionSample> out;
    for (int i = 0; i < n; ++i) {
        CompressionSample s;
        s.x = toy_tokens(len, vocab_total, static_cast<uint64_t>(i) * 131 + 7);
        s.split_k = k;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST_CASE("loss decomposition identities") {
    ToySpec ts;
    Model m = make_toy_model(ts);

    SUBCASE("total = re + nt exactly on random samples") {
        for (int i = 0; i < 20; ++i) {
            CompressionSample s;
            s.x = toy_tokens(12, ts.vocab_total, static_cast<uint64_t>(i));
            s.split_k = 4 + i % 9;
            const auto lb = total_loss(s, m);
            CHECK(lb.total == lb.loss_re + lb.loss_nt);
            CHECK(lb.loss_re >= 0.0);
            CHECK(lb.loss_nt >= 0.0);
        }
    }

    SUBCASE("uniform decoder with k = n = 4 gives L_re = 4 ln 64 and empty L_nt") {
        Model uni = m;
        for (size_t t = 0; t < uni.params.count(); ++t)
            if (uni.params.names[t].rfind("dec.", 0) == 0)
                for (auto& e : uni.params.tensors[t].a) e = 0.0f;
        CompressionSample s;
        s.x = toy_tokens(4, ts.vocab_total);
        s.split_k = 4;
        const auto lb = total_loss(s, uni);
        CHECK(lb.loss_re == doctest::Approx(4.0 * std::log(64.0)).epsilon(1e-6 / 16.0));
        CHECK(lb.loss_nt == 0.0);
    }

    SUBCASE("near-zero-logit initialization sits within 5% of ln|V| per token") {
        CompressionSample s;
        s.x = toy_tokens(12, ts.vocab_total);
        s.split_k = 9;
        const auto lb = total_loss(s, m);
        const double per_token = lb.total / 12.0;
        CHECK(per_token == doctest::Approx(std::log(64.0)).epsilon(0.05));
    }

    SUBCASE("matches brute-force likelihood recomputation") {
        CompressionSample s;
        s.x = toy_tokens(10, ts.vocab_total);
        s.split_k = 7;
        const auto lb = total_loss(s, m);
        const TokenSeq prefix(s.x.begin(), s.x.begin() + s.split_k);
        auto z = m.compress(prefix);
        MatF logits = m.decode_logits(z, s.x);
        long double re = 0, nt = 0;
        for (int t = 0; t < logits.rows; ++t) {
            long double norm = 0;
            for (int v = 0; v < logits.cols; ++v) norm += expl((long double)logits.at(t, v));
            const long double p = expl((long double)logits.at(t, s.x[size_t(t)])) / norm;
            if (t < s.split_k)
                re += -logl(p);
            else
                nt += -logl(p);
        }
        CHECK(lb.loss_re == doctest::Approx(double(re)).epsilon(1e-5));
        CHECK(lb.loss_nt == doctest::Approx(double(nt)).epsilon(1e-5));
    }
}

TEST_CASE("train_step mechanics") {
    ToySpec ts;
    Model m = make_toy_model(ts);
    auto corpus = toy_corpus(4, 12, 8, ts.vocab_total);
    TrainConfig cfg;
    cfg.steps = 10;
    cfg.batch_size = 2;
    cfg.lr.warmup_steps = 0;
    cfg.lr.peak = 1e-3;

    SUBCASE("learning rate 0 leaves parameters bitwise unchanged") {
        Model frozen = m;
        TrainConfig zero = cfg;
        zero.lr.peak = 0.0;
        zero.lr.final_lr = 0.0;
        AdamState adam = AdamState::init(frozen.params);
        train_step({corpus[0], corpus[1]}, frozen, adam, zero, 1);
        for (size_t t = 0; t < m.params.count(); ++t)
            CHECK(frozen.params.tensors[t].a == m.params.tensors[t].a);
    }

    SUBCASE("duplicated sample equals single-sample batch bitwise") {
        Model a = m, b = m;
        AdamState sa = AdamState::init(a.params), sb = AdamState::init(b.params);
        const auto la = train_step({corpus[0]}, a, sa, cfg, 1);
        const auto lb = train_step({corpus[0], corpus[0]}, b, sb, cfg, 1);
        CHECK(la.total == lb.total);
        for (size_t t = 0; t < a.params.count(); ++t)
            CHECK(a.params.tensors[t].a == b.params.tensors[t].a);
    }

    SUBCASE("parallel and serial steps agree bitwise") {
        Model a = m, b = m;
        AdamState sa = AdamState::init(a.params), sb = AdamState::init(b.params);
        train_step(corpus, a, sa, cfg, 1);
        train_step_serial(corpus, b, sb, cfg, 1);
        for (size_t t = 0; t < a.params.count(); ++t)
            CHECK(a.params.tensors[t].a == b.params.tensors[t].a);
    }

    SUBCASE("non-finite gradient aborts without touching parameters") {
        Model poisoned = m;
        auto& w = poisoned.params.tensors[size_t(poisoned.params.find("dec.head"))];
        w.at(0, 0) = std::numeric_limits<float>::infinity();
        Model snapshot = poisoned;
        AdamState adam = AdamState::init(poisoned.params);
        CHECK_THROWS_AS(train_step(corpus, poisoned, adam, cfg, 3), TrainStepError);
        try {
            train_step(corpus, poisoned, adam, cfg, 3);
        } catch (const TrainStepError& e) {
            CHECK(e.non_finite());
            CHECK(e.step() == 3);
        }
        for (size_t t = 0; t < snapshot.params.count(); ++t)
            CHECK(poisoned.params.tensors[t].a == snapshot.params.tensors[t].a);
    }

    SUBCASE("freeze_decoder keeps every dec.* tensor fixed") {
        Model f = m;
        TrainConfig fc = cfg;
        fc.freeze_decoder = true;
        AdamState adam = AdamState::init(f.params);
        train_step(corpus, f, adam, fc, 1);
        bool comp_changed = false;
        for (size_t t = 0; t < m.params.count(); ++t) {
            if (m.params.names[t].rfind("dec.", 0) == 0)
                CHECK(f.params.tensors[t].a == m.params.tensors[t].a);
            else if (f.params.tensors[t].a != m.params.tensors[t].a)
                comp_changed = true;
        }
        CHECK(comp_changed);
    }
}

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;
    cfg.steps = 1000;
    cfg.lr.warmup_steps = 100;
    cfg.lr.peak = 1e-2;
    cfg.lr.final_lr = 1e-4;
    CHECK(lr_at(cfg, 1) == doctest::Approx(1e-4).epsilon(1e-9));
    CHECK(lr_at(cfg, 100) == doctest::Approx(1e-2));
    CHECK(lr_at(cfg, 1000) == doctest::Approx(1e-4));
    CHECK(lr_at(cfg, 550) == doctest::Approx(1e-4 + 0.5 * (1e-2 - 1e-4)));
}

TEST_CASE("run_training cadence, determinism and files") {
    ToySpec ts;
    ts.vocab_total = 32;
    ts.d_comp = 16;
    ts.d_dec = 16;
    ts.n_layers = 1;
    ts.n_heads = 2;
    ts.d_ff = 32;
    ts.max_positions = 32;
    auto corpus = toy_corpus(6, 10, 8, ts.vocab_total);
    TrainConfig cfg;
    cfg.steps = 100;
    cfg.batch_size = 2;
    cfg.checkpoint_interval = 50;
    cfg.probe_interval = 25;
    cfg.probe_set_size = 2;
    cfg.seed = 99;
    cfg.lr.warmup_steps = 10;
    cfg.lr.peak = 3e-3;

    const std::string dir = "/tmp/flab_run_test";
    std::filesystem::remove_all(dir);
    Model m = make_toy_model(ts);
    auto res = run_training(m, corpus, cfg, dir);

    SUBCASE("checkpoints at 50 and 100, probes every 25") {
        REQUIRE(res.checkpoints.size() == 2);
        CHECK(res.checkpoints[0].first == 50);
        CHECK(res.checkpoints[1].first == 100);
        CHECK(std::filesystem::exists(dir + "/ckpt_00000050"));
        CHECK(std::filesystem::exists(dir + "/ckpt_00000100"));
        REQUIRE(res.records.size() == 4);
        CHECK(res.records[0].step == 25);
        CHECK(res.records[3].step == 100);
        long prev = 0;
        for (auto& r : res.records) {
            CHECK(r.step > prev);
            prev = r.step;
            CHECK(std::isfinite(r.erank));
            CHECK(std::isfinite(r.entropy));
        }
    }

    SUBCASE("metrics csv round trip") {
        auto rows = read_metrics_csv(dir + "/metrics.csv");
        REQUIRE(rows.size() == res.records.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            CHECK(rows[i].step == res.records[i].step);
            CHECK(rows[i].loss_total ==
                  doctest::Approx(res.records[i].loss_total).epsilon(1e-9));
            CHECK_FALSE(rows[i].qa_overwrite.has_value());
        }
    }

    SUBCASE("identical rerun reproduces the dynamics records") {
        const std::string dir2 = "/tmp/flab_run_test2";
        std::filesystem::remove_all(dir2);
        Model m2 = make_toy_model(ts);
        auto res2 = run_training(m2, corpus, cfg, dir2);
        REQUIRE(res2.records.size() == res.records.size());
        for (size_t i = 0; i < res.records.size(); ++i) {
            CHECK(res2.records[i].loss_total ==
                  doctest::Approx(res.records[i].loss_total).epsilon(1e-6));
            CHECK(res2.records[i].erank == doctest::Approx(res.records[i].erank).epsilon(1e-6));
        }
        std::filesystem::remove_all(dir2);
    }

    SUBCASE("checkpoint reload reproduces probe losses bitwise") {
        auto loaded = load_checkpoint(dir + "/ckpt_00000100");
        for (int ix : res.probe_indices) {
            const auto a = total_loss(corpus[size_t(ix)], m);
            const auto b = total_loss(corpus[size_t(ix)], loaded.model);
            CHECK(a.total == b.total);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("overfitting a single sample reaches near-zero loss and exact greedy recall") {
    ToySpec ts;
    ts.vocab_total = 24;
    ts.d_comp = 24;
    ts.d_dec = 24;
    ts.n_layers = 1;
    ts.n_heads = 2;
    ts.d_ff = 48;
    ts.memory_slots = 2;
    ts.max_positions = 24;
    Model m = make_toy_model(ts);
    CompressionSample s;
    s.x = toy_tokens(10, ts.vocab_total, 3);
    s.split_k = 10;

    TrainConfig cfg;
    cfg.steps = 600;
    cfg.batch_size = 1;
    cfg.lr.warmup_steps = 20;
    cfg.lr.peak = 6e-3;
    cfg.clip_norm = 1.0;
    AdamState adam = AdamState::init(m.params);
    LossBreakdown last;
    for (long step = 1; step <= cfg.steps; ++step) last = train_step({s}, m, adam, cfg, step);
    CHECK(last.total / 10.0 < 0.1);

    auto z = m.compress(s.x);
    CHECK(m.generate_greedy(z, 10) == s.x);
}
