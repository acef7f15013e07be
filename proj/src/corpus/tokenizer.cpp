#include "hec/corpus/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hec/error.hpp"

namespace hec::corpus {

Tokenizer::Tokenizer(std::string_view symbols) : symbols_(symbols) {
  std::sort(symbols_.begin(), symbols_.end());
  symbols_.erase(std::unique(symbols_.begin(), symbols_.end()), symbols_.end());
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    lookup_[static_cast<unsigned char>(symbols_[i])] = kFirstSymbol + static_cast<TokenId>(i);
  }
}

TokenSeq Tokenizer::encode(std::string_view text) const {
  TokenSeq ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id_of(c));
  return ids;
}

std::string Tokenizer::decode(const TokenSeq& ids) const {
  std::string out;
  for (TokenId id : ids) {
    require(id >= 0 && id < static_cast<TokenId>(size()), ErrorKind::kInvalidArgument,
            "token id " + std::to_string(id) + " outside tokenizer of size " +
                std::to_string(size()));
    if (id == kUnk) {
      out += "<unk>";
    } else if (id >= kFirstSymbol) {
      out += symbols_[static_cast<std::size_t>(id - kFirstSymbol)];
    }
  }
  return out;
}

TokenId Tokenizer::id_of(char c) const { return lookup_[static_cast<unsigned char>(c)]; }

char Tokenizer::symbol_of(TokenId id) const {
  require(is_symbol(id), ErrorKind::kInvalidArgument,
          "token id " + std::to_string(id) + " is not a symbol");
  return symbols_[static_cast<std::size_t>(id - kFirstSymbol)];
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::kIo, "cannot write tokenizer " + path.string());
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    os << (kFirstSymbol + static_cast<TokenId>(i)) << '\t' << std::hex
       << static_cast<int>(static_cast<unsigned char>(symbols_[i])) << std::dec << '\n';
  }
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kNotFound, "missing tokenizer " + path.string());
  std::string line, symbols;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenId id;
    int byte;
    ls >> id >> std::hex >> byte;
    require(!ls.fail() && byte > 0 && byte < 256, ErrorKind::kIo,
            "malformed tokenizer line '" + line + "' in " + path.string());
    symbols.push_back(static_cast<char>(byte));
  }
  return Tokenizer(symbols);
}

}  // namespace hec::corpus
