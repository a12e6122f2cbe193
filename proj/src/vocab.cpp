#include "flab/vocab.hpp"

#include <fstream>
#include <sstream>

#include "flab/errors.hpp"
#include "flab/metrics.hpp"

namespace flab {

Vocabulary::Vocabulary() {
    push("<pad>");
    push("<bos>");
    push("<eos>");
    push("<mem>");
    push(kAbstainSymbol);
    push("<sep>");
}

void Vocabulary::push(const std::string& s) {
    ids_.emplace(s, static_cast<int32_t>(symbols_.size()));
    symbols_.push_back(s);
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words)
        if (!w.empty() && !v.contains(w)) v.push(w);
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open vocabulary: " + path);
    Vocabulary v;
    std::string line;
    int32_t id = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (id < kNumReserved) {
            if (line != v.symbols_[id])
                throw SchemaError("vocabulary: reserved symbol mismatch at id " +
                                  std::to_string(id));
        } else if (!v.contains(line)) {
            v.push(line);
        }
        ++id;
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open vocabulary for writing: " + path);
    for (const auto& s : symbols_) os << s << "\n";
    if (!os) throw IoError("write failed: " + path);
}

int32_t Vocabulary::id_of(const std::string& w) const {
    auto it = ids_.find(w);
    if (it == ids_.end()) throw InvalidToken("unknown word: \"" + w + "\"");
    return it->second;
}

const std::string& Vocabulary::symbol(int32_t id) const {
    if (id < 0 || id >= size()) throw InvalidToken("token id out of range: " + std::to_string(id));
    return symbols_[static_cast<size_t>(id)];
}

TokenSeq Vocabulary::encode_words(const std::vector<std::string>& words) const {
    TokenSeq out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id_of(w));
    return out;
}

TokenSeq Vocabulary::encode(const std::string& text) const {
    return encode_words(metrics::split_words(text));
}

std::string Vocabulary::decode(const TokenSeq& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += symbol(ids[i]);
    }
    return out;
}

} // namespace flab
