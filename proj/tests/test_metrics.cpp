#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "flab/metrics.hpp"

using namespace flab;
using metrics::bleu;
using metrics::normalize_text;
using metrics::substring_match;

namespace {

// Independent reference BLEU used only by tests: string-keyed n-gram maps,
// no shared code with the implementation.
double reference_bleu(const std::vector<int32_t>& cand, const std::vector<int32_t>& ref) {
    if (cand.empty()) return 0.0;
    double logsum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        std::map<std::string, int> rc, cc;
        auto key = [](const std::vector<int32_t>& s, size_t i, int n) {
            std::string k;
            for (int j = 0; j < n; ++j) k += std::to_string(s[i + j]) + ",";
            return k;
        };
        for (size_t i = 0; i + n <= ref.size(); ++i) rc[key(ref, i, n)]++;
        for (size_t i = 0; i + n <= cand.size(); ++i) cc[key(cand, i, n)]++;
        long total = 0, hit = 0;
        for (auto& [k, c] : cc) {
            total += c;
            auto it = rc.find(k);
            if (it != rc.end()) hit += std::min(c, it->second);
        }
        double p = (total == 0 || hit == 0) ? 1e-9 : double(hit) / double(total);
        logsum += std::log(p);
    }
    double bp = cand.size() >= ref.size()
                    ? 1.0
                    : std::exp(1.0 - double(ref.size()) / double(cand.size()));
    return bp * std::exp(0.25 * logsum);
}

} // namespace

TEST_CASE("bleu hand-counted example") {
    // candidate "a b c d e f", reference "a b c d x y"
    std::vector<int32_t> cand = {0, 1, 2, 3, 4, 5};
    std::vector<int32_t> ref = {0, 1, 2, 3, 6, 7};
    auto r = bleu(cand, ref);
    CHECK(r.precisions[0] == doctest::Approx(4.0 / 6));
    CHECK(r.precisions[1] == doctest::Approx(3.0 / 5));
    CHECK(r.precisions[2] == doctest::Approx(2.0 / 4));
    CHECK(r.precisions[3] == doctest::Approx(1.0 / 3));
    CHECK(r.brevity_penalty == doctest::Approx(1.0));
    CHECK(r.score == doctest::Approx(0.5081).epsilon(1e-3));
    CHECK(r.score == doctest::Approx(reference_bleu(cand, ref)).epsilon(1e-12));
}

TEST_CASE("bleu identity and empty candidate") {
    std::vector<int32_t> x = {1, 2, 3, 4, 5};
    CHECK(bleu(x, x).score == doctest::Approx(1.0));
    CHECK(bleu({}, x).score == 0.0);
    CHECK_THROWS_AS(bleu(x, {}), EmptyReference);
}

TEST_CASE("bleu disjoint vocabularies stays under the smoothing floor") {
    std::vector<int32_t> a = {1, 2, 3, 4, 5, 6};
    std::vector<int32_t> b = {7, 8, 9, 10, 11, 12};
    CHECK(bleu(a, b).score < 1e-2);
}

TEST_CASE("bleu invariant under consistent relabeling and matches reference impl") {
    std::mt19937 gen(99);
    for (int iter = 0; iter < 50; ++iter) {
        std::uniform_int_distribution<int> len(1, 20), tok(0, 9);
        std::vector<int32_t> cand(len(gen)), ref(len(gen));
        for (auto& t : cand) t = tok(gen);
        for (auto& t : ref) t = tok(gen);
        const double got = bleu(cand, ref).score;
        CHECK(got == doctest::Approx(reference_bleu(cand, ref)).epsilon(1e-12));
        // relabel ids with an injective map
        auto relabel = [](std::vector<int32_t> v) {
            for (auto& t : v) t = t * 7 + 100;
            return v;
        };
        CHECK(bleu(relabel(cand), relabel(ref)).score == doctest::Approx(got).epsilon(1e-12));
    }
}

TEST_CASE("bleu score equals BP * geometric mean when all precisions positive") {
    std::vector<int32_t> cand = {0, 1, 2, 3, 4};
    std::vector<int32_t> ref = {0, 1, 2, 3, 9, 9};
    auto r = bleu(cand, ref);
    double expect = r.brevity_penalty * std::exp(0.25 * (std::log(r.precisions[0]) +
                                                         std::log(r.precisions[1]) +
                                                         std::log(r.precisions[2]) +
                                                         std::log(r.precisions[3])));
    CHECK(r.score == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("normalize_text examples") {
    CHECK(normalize_text("  The  Bee. ") == "the bee");
    CHECK(normalize_text("the bee") == "the bee"); // idempotence
    CHECK(normalize_text("Blue-Banded   BEE!") == "blue-banded bee");
    CHECK(normalize_text(normalize_text("Blue-Banded   BEE!")) == "blue-banded bee");
    CHECK(normalize_text("...") == "");
}

TEST_CASE("substring_match") {
    CHECK(substring_match("the blue-banded bee shakes pollen", "blue-banded bee"));
    CHECK_FALSE(substring_match("the honey bee shakes pollen", "blue-banded bee"));
    CHECK(substring_match("Some Gold", "some gold"));
    CHECK(substring_match("x", "X"));
    CHECK_THROWS_AS(substring_match("anything", "!!!"), EmptyGold);
}
