#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flab/errors.hpp"

namespace flab::metrics {

// Sentence-level BLEU-4 with uniform weights and the standard brevity
// penalty. Zero n-gram counts are smoothed to eps so the geometric mean
// stays defined; orders longer than the candidate are treated the same way.
struct BleuScore {
    double score = 0.0;
    double precisions[4] = {0, 0, 0, 0};
    double brevity_penalty = 1.0;
};

constexpr double kBleuSmoothingEps = 1e-9;

BleuScore bleu(const std::vector<int32_t>& candidate, const std::vector<int32_t>& reference);

// Convenience overload over whitespace words; BLEU only sees n-gram identity
// so any injective relabeling into ids gives the same score.
BleuScore bleu_words(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference);

// Mean of sentence scores.
double corpus_bleu(const std::vector<double>& sentence_scores);

// Lowercases, collapses whitespace, strips leading/trailing punctuation from
// each token (internal hyphens survive). Idempotent.
std::string normalize_text(const std::string& s);

// True iff normalize_text(gold) occurs contiguously in normalize_text(generated).
bool substring_match(const std::string& generated, const std::string& gold);

std::vector<std::string> split_words(const std::string& s);

} // namespace flab::metrics
