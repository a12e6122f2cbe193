#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "flab/factworld.hpp"
#include "flab/metrics.hpp"
#include "flab/responder.hpp"
#include "flab/tasks.hpp"

using namespace flab;

namespace {

GeneratedWorld small_world(uint64_t seed = 7) {
    WorldGenConfig cfg;
    cfg.seed = seed;
    cfg.n_entities = 12;
    cfg.n_attributes = 3;
    cfg.n_relations = 10;
    cfg.repetitions = 3;
    cfg.n_paragraphs = 40;
    cfg.min_paragraph_tokens = 40;
    return build_fact_world(cfg);
}

} // namespace

TEST_CASE("fact world generation is deterministic in the seed") {
    auto a = small_world(42);
    auto b = small_world(42);
    CHECK(a.world.to_json() == b.world.to_json());
    CHECK(a.corpus.pretrain_lines == b.corpus.pretrain_lines);
    CHECK(a.corpus.paragraphs == b.corpus.paragraphs);
    auto c = small_world(43);
    CHECK(a.world.to_json() != c.world.to_json());
}

TEST_CASE("fact world invariants") {
    auto g = small_world();
    const auto& w = g.world;
    CHECK(w.entities.size() == 12);
    for (const auto& attr : w.attribute_names)
        for (const auto& e : w.entities) CHECK_FALSE(w.value_of(e, attr).empty());
    for (const auto& r : w.relations) CHECK(r.agent != r.patient);

    SUBCASE("no relations requested means no relation sentences") {
        WorldGenConfig cfg;
        cfg.n_relations = 0;
        cfg.n_entities = 6;
        cfg.n_attributes = 2;
        cfg.n_paragraphs = 8;
        auto g0 = build_fact_world(cfg);
        CHECK(g0.world.relations.empty());
        for (const auto& p : g0.corpus.paragraphs) {
            auto parsed = parse_paragraph(g0.world, p);
            for (const auto& s : parsed.sentences) {
                CHECK(s.kind != ParsedSentence::Kind::relation);
                CHECK(s.kind != ParsedSentence::Kind::because);
            }
        }
    }
}

TEST_CASE("pretraining corpus states every fact exactly R times") {
    auto g = small_world();
    const auto& w = g.world;
    // Count by parsing each line back to (entity, value) / (agent, verb, patient).
    std::map<std::string, int> attr_counts, rel_counts;
    for (const auto& line : g.corpus.pretrain_lines) {
        const auto t = metrics::split_words(line);
        if (t.size() >= 3 && t[t.size() - 2] == "is") {
            // "... the E is V" / "every E is V"
            attr_counts[t[t.size() - 3] + "|" + t.back()] += 1;
        } else if (t.size() == 3 || (t.size() == 5 && t[0] == "we")) {
            const size_t off = t.size() == 3 ? 0 : 2;
            rel_counts[t[off] + "|" + t[off + 1] + "|" + t[off + 2]] += 1;
        } else {
            FAIL("unrecognized pretraining line: ", line);
        }
    }
    for (const auto& attr : w.attribute_names)
        for (const auto& e : w.entities)
            CHECK(attr_counts[e + "|" + w.value_of(e, attr)] >= 3);
    long total_attr = 0;
    for (auto& [k, v] : attr_counts) total_attr += v;
    CHECK(total_attr == 3 * 12 * 3); // R * entities * attributes, exactly
    for (const auto& r : w.relations)
        CHECK(rel_counts[r.agent + "|" + r.verb + "|" + r.patient] == 3);
}

TEST_CASE("paragraphs parse back and foreign text is rejected") {
    auto g = small_world();
    for (const auto& p : g.corpus.paragraphs) {
        auto parsed = parse_paragraph(g.world, p);
        CHECK(parsed.sentences.size() >= 2);
    }
    CHECK_THROWS_AS(parse_paragraph(g.world, "completely unrelated prose here"),
                    TemplateMismatch);
    CHECK_THROWS_AS(parse_paragraph(g.world, "the unknownentity is red"), TemplateMismatch);
}

TEST_CASE("counterfactual items") {
    auto g = small_world();
    CounterfactualConfig cc;
    cc.fraction = 0.5;
    cc.priors = 2;
    auto items = make_counterfactual_items(g.world, cc);
    CHECK(items.size() == static_cast<size_t>(std::ceil(0.5 * 12 * 3)));

    SUBCASE("all invariants hold on every item") {
        for (const auto& it : items) {
            CHECK(it.context.find(it.counterfactual_answer) != std::string::npos);
            for (const auto& p : it.prior_answers) CHECK(p != it.counterfactual_answer);
            CHECK(it.prior_answers.size() == 2);
            // The world-true value is the first prior.
            const auto q = metrics::split_words(it.question);
            REQUIRE(q.size() == 5);
            CHECK(it.prior_answers[0] == g.world.value_of(q[4], q[1]));
        }
    }

    SUBCASE("fraction 0 gives the empty list") {
        CounterfactualConfig zero;
        zero.fraction = 0.0;
        CHECK(make_counterfactual_items(g.world, zero).empty());
    }

    SUBCASE("deterministic for a fixed world") {
        auto again = make_counterfactual_items(g.world, cc);
        REQUIRE(again.size() == items.size());
        for (size_t i = 0; i < items.size(); ++i) CHECK(again[i].context == items[i].context);
    }
}

TEST_CASE("drift items") {
    auto g = small_world();
    DriftGenConfig dc;
    dc.per_dimension_count = 6;
    dc.unanswerable_fraction = 0.25;
    auto items = make_drift_items(g.world, g.corpus.paragraphs, dc);

    std::map<std::string, int> answerable, unanswerable;
    for (const auto& it : items) {
        if (it.gold == kUnanswerableSentinel)
            unanswerable[it.dimension] += 1;
        else {
            answerable[it.dimension] += 1;
            CHECK(metrics::substring_match(it.context, it.gold));
        }
    }
    for (const auto& dim : kDriftDimensions) {
        INFO("dimension ", dim);
        CHECK(answerable[dim] == 6);
        CHECK(unanswerable[dim] == 2); // round(6 * 0.25 / 0.75)
    }
}

TEST_CASE("jsonl round trip and malformed input") {
    auto g = small_world();
    CounterfactualConfig cc;
    cc.fraction = 0.2;
    auto ow = make_counterfactual_items(g.world, cc);
    DriftGenConfig dc;
    dc.per_dimension_count = 3;
    auto dr = make_drift_items(g.world, g.corpus.paragraphs, dc);

    const std::string p1 = "/tmp/flab_ow.jsonl", p2 = "/tmp/flab_dr.jsonl";
    write_overwrite_jsonl(p1, ow);
    write_drift_jsonl(p2, dr);
    auto ow2 = read_overwrite_jsonl(p1);
    auto dr2 = read_drift_jsonl(p2);
    REQUIRE(ow2.size() == ow.size());
    REQUIRE(dr2.size() == dr.size());
    CHECK(ow2[0].context == ow[0].context);
    CHECK(dr2[0].gold == dr[0].gold);

    SUBCASE("malformed line reports its line number") {
        std::ofstream os(p1, std::ios::app);
        os << "{not json}\n";
        os.close();
        try {
            read_overwrite_jsonl(p1);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.line() == static_cast<long>(ow.size()) + 1);
        }
    }

    SUBCASE("containment violation aborts the load") {
        std::ofstream os(p2, std::ios::trunc);
        os << R"({"context":"the bee is red","question":"q","dimension":"main_topic","gold":"blue"})"
           << "\n";
        os.close();
        CHECK_THROWS_AS(read_drift_jsonl(p2), SchemaError);
    }
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("evaluator closed loops with scripted oracles") {
    auto g = small_world();
    CounterfactualConfig cc;
    cc.fraction = 0.4;
    auto ow = make_counterfactual_items(g.world, cc);
    DriftGenConfig dc;
    dc.per_dimension_count = 4;
    auto dr = make_drift_items(g.world, g.corpus.paragraphs, dc);
    REQUIRE(!ow.empty());
    REQUIRE(!dr.empty());

    SUBCASE("verbatim oracle: overwrite accuracy 1.0, answerable drift 1.0") {
        VerbatimResponder v;
        CHECK(eval_overwrite(v, ow).accuracy == 1.0);
        auto rep = eval_drift(v, dr, 64);
        int answerable_correct = 0, answerable_total = 0;
        for (size_t i = 0; i < dr.size(); ++i) {
            if (dr[i].gold == kUnanswerableSentinel) {
                CHECK_FALSE(rep.items[i].correct); // no abstention from the echo oracle
            } else {
                ++answerable_total;
                answerable_correct += rep.items[i].correct ? 1 : 0;
            }
        }
        CHECK(answerable_total > 0);
        CHECK(answerable_correct == answerable_total);
    }

    SUBCASE("prior-only oracle: overwrite accuracy 0.0") {
        PriorOnlyResponder p(g.world);
        CHECK(eval_overwrite(p, ow).accuracy == 0.0);
    }

    SUBCASE("always-abstain oracle: drift accuracy equals the unanswerable share") {
        AbstainResponder a;
        auto rep = eval_drift(a, dr, 64);
        int unanswerable = 0;
        for (const auto& it : dr)
            if (it.gold == kUnanswerableSentinel) ++unanswerable;
        CHECK(rep.accuracy ==
              doctest::Approx(static_cast<double>(unanswerable) / dr.size()).epsilon(1e-12));
    }

    SUBCASE("tie scores count as incorrect") {
        struct TieResponder : Responder {
            void set_context(const std::string&) override {}
            double score(const std::string&, const std::string&) override { return 0.5; }
            std::string answer(const std::string&, int) override { return ""; }
            std::string reconstruct(int) override { return ""; }
        } tie;
        CHECK(eval_overwrite(tie, ow).accuracy == 0.0);
    }

    SUBCASE("accuracy is invariant to item order") {
        VerbatimResponder v;
        auto shuffled = dr;
        std::reverse(shuffled.begin(), shuffled.end());
        CHECK(eval_drift(v, dr, 64).accuracy ==
              doctest::Approx(eval_drift(v, shuffled, 64).accuracy).epsilon(1e-12));
    }

    SUBCASE("per-dimension accuracies average to the overall accuracy") {
        AbstainResponder a;
        auto rep = eval_drift(a, dr, 64);
        double weighted = 0;
        int total = 0;
        for (auto& [dim, acc] : rep.per_dimension) {
            weighted += acc * rep.per_dimension_counts[dim];
            total += rep.per_dimension_counts[dim];
        }
        CHECK(total == rep.n_items);
        CHECK(weighted / total == doctest::Approx(rep.accuracy).epsilon(1e-12));
    }
}

TEST_CASE("verbatim oracle reconstruction scores BLEU 1.0") {
    auto g = small_world();
    VerbatimResponder v;
    auto rep = eval_reconstruction(v, {g.corpus.paragraphs[0], g.corpus.paragraphs[1]});
    CHECK(rep.mean_bleu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.exact_match == 1.0);
}

TEST_CASE("world json round trip") {
    auto g = small_world();
    auto w2 = FactWorld::from_json(g.world.to_json());
    CHECK(w2.to_json() == g.world.to_json());
    CHECK_THROWS_AS(FactWorld::from_json("{broken"), SchemaError);
}
