#pragma once

#include <string>

#include "flab/factworld.hpp"
#include "flab/model.hpp"
#include "flab/tasks.hpp"

namespace flab {

// Drives a trained checkpoint: contexts are compressed once per item, then
// scored/answered through the decoder.
class ModelResponder : public Responder {
  public:
    explicit ModelResponder(const Model& model) : model_(model) {}

    void set_context(const std::string& context) override;
    double score(const std::string& question, const std::string& candidate) override;
    std::string answer(const std::string& question, int max_tokens) override;
    std::string reconstruct(int max_tokens) override;

  private:
    const Model& model_;
    MemoryTensor<float> z_;
};

// Scripted oracle that echoes its stored context; the upper closed-loop
// bound for both evaluators.
class VerbatimResponder : public Responder {
  public:
    void set_context(const std::string& context) override { context_ = context; }
    double score(const std::string&, const std::string& candidate) override;
    std::string answer(const std::string&, int max_tokens) override;
    std::string reconstruct(int max_tokens) override;

  private:
    std::string context_;
};

// Scripted oracle that ignores the context entirely and answers from the
// world's true facts: the pure parametric-knowledge failure mode.
class PriorOnlyResponder : public Responder {
  public:
    explicit PriorOnlyResponder(FactWorld world) : world_(std::move(world)) {}
    void set_context(const std::string&) override {}
    double score(const std::string& question, const std::string& candidate) override;
    std::string answer(const std::string& question, int max_tokens) override;
    std::string reconstruct(int) override { return ""; }

  private:
    FactWorld world_;
    std::string true_answer(const std::string& question) const;
};

// Scripted oracle that abstains on every question.
class AbstainResponder : public Responder {
  public:
    void set_context(const std::string&) override {}
    double score(const std::string&, const std::string&) override { return 0.0; }
    std::string answer(const std::string&, int) override;
    std::string reconstruct(int) override { return ""; }
};

} // namespace flab
