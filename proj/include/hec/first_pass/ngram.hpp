#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "hec/corpus/tokenizer.hpp"

namespace hec::first_pass {

using corpus::TokenId;
using corpus::TokenSeq;

// Add-k smoothed n-gram model over token ids. The vocabulary always contains
// the end symbol (corpus::kEos); histories are left-padded with kSos.
//   P(w | h) = (c(h, w) + k) / (c(h) + k |V|)
class NGramLM {
 public:
  NGramLM() = default;

  static NGramLM train(const std::vector<TokenSeq>& sentences, int order, double k,
                       const std::vector<TokenId>& symbols);

  // Uses the last (order - 1) tokens of `history`.
  double log_prob(std::span<const TokenId> history, TokenId word) const;
  double prob(std::span<const TokenId> history, TokenId word) const;

  int order() const { return order_; }
  double smoothing() const { return k_; }
  const std::vector<TokenId>& vocabulary() const { return vocab_; }
  bool in_vocabulary(TokenId w) const;

  void save(const std::filesystem::path& path) const;
  static NGramLM load(const std::filesystem::path& path);

  friend bool operator==(const NGramLM& a, const NGramLM& b);

 private:
  struct Context {
    double total = 0.0;
    std::unordered_map<TokenId, double> next;
  };
  std::uint64_t key(std::span<const TokenId> history) const;
  void add_sentence(const TokenSeq& s);

  int order_ = 0;
  double k_ = 1.0;
  std::vector<TokenId> vocab_;  // sorted, includes kEos
  std::unordered_map<std::uint64_t, Context> contexts_;
};

// Decoder-side LM position: recent history plus the phrase-matching state.
struct LmContext {
  TokenSeq tail;      // last (order - 1) tokens
  int node = 0;       // phrase trie node
  int credited = 0;   // partial-match tokens already rewarded

  friend bool operator==(const LmContext&, const LmContext&) = default;
};

// Scoring view over an NGramLM with optional phrase biasing. Each token that
// extends a match of a biased phrase earns `boost`; a partial match that is
// abandoned gives its credit back, so a completed phrase of length L gains
// L * boost in total and an unfinished one gains nothing. Scores are not
// renormalized.
class LmScorer {
 public:
  explicit LmScorer(const NGramLM& lm) : lm_(&lm) { nodes_.emplace_back(); }

  LmContext start(std::span<const TokenId> history = {}) const;
  // Log-score of `word` after ctx; writes the successor context.
  double step(const LmContext& ctx, TokenId word, LmContext& next) const;
  // Log-score of the end symbol, including withdrawal of pending credit.
  double finish(const LmContext& ctx) const;

  const NGramLM& lm() const { return *lm_; }
  double boost() const { return boost_; }
  std::size_t phrase_count() const { return phrases_; }

 private:
  friend LmScorer bias_lm(const NGramLM&, const std::vector<TokenSeq>&, double);

  struct Node {
    std::unordered_map<TokenId, int> child;
    int fail = 0;
    int depth = 0;
    int banked = 0;  // depth of the deepest completed phrase on the path
    bool terminal = false;
  };
  int advance(int node, TokenId w) const;

  const NGramLM* lm_;
  std::vector<Node> nodes_;
  double boost_ = 0.0;
  std::size_t phrases_ = 0;
};

// Biased view: rejects empty phrases and negative boosts.
LmScorer bias_lm(const NGramLM& lm, const std::vector<TokenSeq>& phrases, double boost);

}  // namespace hec::first_pass
