#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flab/factworld.hpp"

namespace flab {

constexpr const char* kUnanswerableSentinel = "__UNANSWERABLE__";

extern const std::vector<std::string> kDriftDimensions;

struct OverwriteItem {
    std::string context;
    std::string question;
    std::string counterfactual_answer;
    std::vector<std::string> prior_answers;
};

struct DriftItem {
    std::string context;
    std::string question;
    std::string dimension; // one of kDriftDimensions
    std::string gold;      // answer text or kUnanswerableSentinel
};

// Containment/shape invariants; throws SchemaError (with the 1-based item
// index as the line) on violation. Load paths call these before returning.
void validate_item(const OverwriteItem& it, long line = -1);
void validate_item(const DriftItem& it, long line = -1);

// JSONL round trip; one object per line, UTF-8.
void write_overwrite_jsonl(const std::string& path, const std::vector<OverwriteItem>& items);
void write_drift_jsonl(const std::string& path, const std::vector<DriftItem>& items);
std::vector<OverwriteItem> read_overwrite_jsonl(const std::string& path);
std::vector<DriftItem> read_drift_jsonl(const std::string& path);

struct CounterfactualConfig {
    double fraction = 0.25; // share of (entity, attribute) facts to swap
    int priors = 1;         // world-true value plus (priors - 1) distractors
    int filler_facts = 6;   // true facts about other entities mixed in
    int min_context_tokens = 40;
};

// Swaps the true attribute value inside an otherwise-true context; the true
// value becomes the prior answer.
std::vector<OverwriteItem> make_counterfactual_items(const FactWorld& world,
                                                     const CounterfactualConfig& cfg);

struct DriftGenConfig {
    int per_dimension_count = 12;       // answerable items per dimension
    double unanswerable_fraction = 0.25; // share of unanswerable items per dimension
};

// Template questions over parseable paragraphs; gold answers are verbatim
// context substrings, plus unanswerable-but-plausible probes.
std::vector<DriftItem> make_drift_items(const FactWorld& world,
                                        const std::vector<std::string>& paragraphs,
                                        const DriftGenConfig& cfg);

// --- evaluation --------------------------------------------------------------

// The evaluators drive any compressor-decoder through this string-level
// surface; the model-backed implementation and the scripted oracles live in
// responder.hpp.
class Responder {
  public:
    virtual ~Responder() = default;
    virtual void set_context(const std::string& context) = 0;
    virtual double score(const std::string& question, const std::string& candidate) = 0;
    virtual std::string answer(const std::string& question, int max_tokens) = 0;
    virtual std::string reconstruct(int max_tokens) = 0;
};

struct ItemRecord {
    int index = 0;
    std::string question;
    std::string chosen;    // overwrite: winning candidate
    std::string generated; // drift: generated answer
    std::vector<double> scores;
    bool correct = false;
    std::string error; // non-fatal per-item failure
};

struct EvalReport {
    std::string dataset;
    int n_items = 0;
    double accuracy = 0.0;
    std::map<std::string, double> per_dimension;     // drift only
    std::map<std::string, int> per_dimension_counts; // drift only
    std::vector<ItemRecord> items;

    std::string to_json() const;
};

// Accuracy of selecting the counterfactual answer; the counterfactual must
// beat every prior strictly (ties count as incorrect).
EvalReport eval_overwrite(Responder& model, const std::vector<OverwriteItem>& items,
                          const std::string& dataset_name = "overwrite");

// Answerable items scored by normalized substring match; unanswerable items
// are correct iff the answer's first token is the abstain marker.
EvalReport eval_drift(Responder& model, const std::vector<DriftItem>& items, int max_answer_len,
                      const std::string& dataset_name = "drift");

struct ReconReport {
    int n_items = 0;
    double mean_bleu = 0.0;
    double exact_match = 0.0;
    std::vector<double> bleu_scores;

    std::string to_json() const;
};

// Reconstruction fidelity of contexts round-tripped through the responder.
ReconReport eval_reconstruction(Responder& model, const std::vector<std::string>& contexts);

} // namespace flab
