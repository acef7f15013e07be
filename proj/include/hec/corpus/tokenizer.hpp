#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hec::corpus {

using TokenId = std::int64_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kBlank = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kSos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kFirstSymbol = 4;

// Character tokenizer: reserved ids blank=0, unk=1, sos=2, eos=3, then the
// corpus symbols in sorted byte order.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(std::string_view symbols);

  TokenSeq encode(std::string_view text) const;
  std::string decode(const TokenSeq& ids) const;

  std::size_t size() const { return kFirstSymbol + symbols_.size(); }
  const std::string& symbols() const { return symbols_; }
  TokenId id_of(char c) const;
  char symbol_of(TokenId id) const;
  bool is_symbol(TokenId id) const {
    return id >= kFirstSymbol && id < static_cast<TokenId>(size());
  }

  // One line per symbol: "<id>\t<hex byte>".
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
    return a.symbols_ == b.symbols_;
  }

 private:
  std::string symbols_;
  std::vector<TokenId> lookup_ = std::vector<TokenId>(256, kUnk);
};

}  // namespace hec::corpus
