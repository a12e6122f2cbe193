#include "flab/responder.hpp"

#include <algorithm>

#include "flab/errors.hpp"
#include "flab/metrics.hpp"

namespace flab {

void ModelResponder::set_context(const std::string& context) {
    z_ = model_.compress(model_.vocab.encode(context));
}

double ModelResponder::score(const std::string& question, const std::string& candidate) {
    return model_.score_candidate(z_, model_.vocab.encode(question),
                                  model_.vocab.encode(candidate));
}

std::string ModelResponder::answer(const std::string& question, int max_tokens) {
    TokenSeq prompt;
    prompt.push_back(Vocabulary::kSep);
    const TokenSeq q = model_.vocab.encode(question);
    prompt.insert(prompt.end(), q.begin(), q.end());
    prompt.push_back(Vocabulary::kSep);
    return model_.vocab.decode(model_.generate_greedy(z_, max_tokens, prompt));
}

std::string ModelResponder::reconstruct(int max_tokens) {
    return model_.vocab.decode(model_.generate_greedy(z_, max_tokens));
}

double VerbatimResponder::score(const std::string& question, const std::string& candidate) {
    // Perfect context reader: for an attribute question, the candidate must
    // be the value the context states for that entity; otherwise fall back
    // to plain containment.
    const auto q = metrics::split_words(question);
    if (q.size() == 5 && q[0] == "what" && q[2] == "is" && q[3] == "the") {
        const auto w = metrics::split_words(context_);
        for (size_t i = 0; i + 3 < w.size(); ++i)
            if (w[i] == "the" && w[i + 1] == q[4] && w[i + 2] == "is" &&
                (i + 4 >= w.size() || w[i + 4] == "."))
                return candidate == w[i + 3] ? 1.0 : 0.0;
    }
    return metrics::substring_match(context_, candidate) ? 1.0 : 0.0;
}

std::string VerbatimResponder::answer(const std::string&, int max_tokens) {
    auto words = metrics::split_words(context_);
    if (static_cast<int>(words.size()) > max_tokens) words.resize(static_cast<size_t>(max_tokens));
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

std::string VerbatimResponder::reconstruct(int max_tokens) {
    return answer("", max_tokens);
}

std::string PriorOnlyResponder::true_answer(const std::string& question) const {
    // "what {attr} is the {entity}"
    const auto w = metrics::split_words(question);
    if (w.size() == 5 && w[0] == "what" && w[2] == "is" && w[3] == "the") {
        auto attr = world_.attributes.find(w[1]);
        if (attr != world_.attributes.end()) {
            auto e = attr->second.find(w[4]);
            if (e != attr->second.end()) return e->second;
        }
    }
    return "";
}

double PriorOnlyResponder::score(const std::string& question, const std::string& candidate) {
    return candidate == true_answer(question) ? 1.0 : 0.0;
}

std::string PriorOnlyResponder::answer(const std::string& question, int) {
    return true_answer(question);
}

std::string AbstainResponder::answer(const std::string&, int) {
    return Vocabulary::kAbstainSymbol;
}

} // namespace flab
