#include "flab/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

namespace flab::metrics {

namespace {

// n-gram key packed from up to 4 token ids.
struct NgramKey {
    int32_t t[4] = {-1, -1, -1, -1};
    bool operator<(const NgramKey& o) const {
        for (int i = 0; i < 4; ++i)
            if (t[i] != o.t[i]) return t[i] < o.t[i];
        return false;
    }
};

std::map<NgramKey, int> count_ngrams(const std::vector<int32_t>& seq, int n) {
    std::map<NgramKey, int> counts;
    if (static_cast<int>(seq.size()) < n) return counts;
    for (size_t i = 0; i + n <= seq.size(); ++i) {
        NgramKey k;
        for (int j = 0; j < n; ++j) k.t[j] = seq[i + j];
        ++counts[k];
    }
    return counts;
}

} // namespace

BleuScore bleu(const std::vector<int32_t>& candidate, const std::vector<int32_t>& reference) {
    if (reference.empty()) throw EmptyReference("bleu: reference must be non-empty");
    BleuScore out;
    if (candidate.empty()) {
        out.score = 0.0;
        out.brevity_penalty = 0.0;
        for (double& p : out.precisions) p = 0.0;
        return out;
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    out.brevity_penalty = c >= r ? 1.0 : std::exp(1.0 - r / c);

    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        auto cand = count_ngrams(candidate, n);
        auto ref = count_ngrams(reference, n);
        long total = 0, matched = 0;
        for (auto& [k, cnt] : cand) {
            total += cnt;
            auto it = ref.find(k);
            if (it != ref.end()) matched += std::min(cnt, it->second);
        }
        double p;
        if (total == 0 || matched == 0)
            p = kBleuSmoothingEps;
        else
            p = static_cast<double>(matched) / static_cast<double>(total);
        out.precisions[n - 1] = p;
        log_sum += std::log(p);
    }
    out.score = out.brevity_penalty * std::exp(0.25 * log_sum);
    return out;
}

BleuScore bleu_words(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference) {
    std::unordered_map<std::string, int32_t> ids;
    auto to_ids = [&](const std::vector<std::string>& ws) {
        std::vector<int32_t> out;
        out.reserve(ws.size());
        for (const auto& w : ws) {
            auto [it, _] = ids.emplace(w, static_cast<int32_t>(ids.size()));
            out.push_back(it->second);
        }
        return out;
    };
    return bleu(to_ids(candidate), to_ids(reference));
}

double corpus_bleu(const std::vector<double>& sentence_scores) {
    if (sentence_scores.empty()) return 0.0;
    double s = 0;
    for (double v : sentence_scores) s += v;
    return s / static_cast<double>(sentence_scores.size());
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string w;
    while (iss >> w) out.push_back(w);
    return out;
}

std::string normalize_text(const std::string& s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (unsigned char ch : s) lowered.push_back(static_cast<char>(std::tolower(ch)));

    std::string out;
    for (auto& tok : split_words(lowered)) {
        size_t b = 0, e = tok.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
        if (b == e) continue;
        if (!out.empty()) out.push_back(' ');
        out.append(tok, b, e - b);
    }
    return out;
}

bool substring_match(const std::string& generated, const std::string& gold) {
    const std::string g = normalize_text(gold);
    if (g.empty()) throw EmptyGold("substring_match: gold is empty after normalization");
    return normalize_text(generated).find(g) != std::string::npos;
}

} // namespace flab::metrics
