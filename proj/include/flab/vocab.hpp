#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace flab {

using TokenSeq = std::vector<int32_t>;

// Closed word-level vocabulary. The first six ids are reserved; the abstain
// marker doubles as a surface word so abstention is detectable in decoded
// text.
class Vocabulary {
  public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kBos = 1;
    static constexpr int32_t kEos = 2;
    static constexpr int32_t kMem = 3;
    static constexpr int32_t kAbstain = 4;
    static constexpr int32_t kSep = 5;
    static constexpr int32_t kNumReserved = 6;
    static constexpr const char* kAbstainSymbol = "UNANSWERABLE";

    Vocabulary();

    // Reserved ids plus the given words (deduplicated, order preserved).
    static Vocabulary from_words(const std::vector<std::string>& words);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int32_t size() const { return static_cast<int32_t>(symbols_.size()); }
    bool contains(const std::string& w) const { return ids_.count(w) > 0; }

    int32_t id_of(const std::string& w) const;          // throws InvalidToken
    const std::string& symbol(int32_t id) const;        // throws InvalidToken

    TokenSeq encode_words(const std::vector<std::string>& words) const;
    TokenSeq encode(const std::string& text) const;     // whitespace split
    std::string decode(const TokenSeq& ids) const;      // space-joined symbols

    const std::vector<std::string>& symbols() const { return symbols_; }

  private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int32_t> ids_;

    void push(const std::string& s);
};

} // namespace flab
