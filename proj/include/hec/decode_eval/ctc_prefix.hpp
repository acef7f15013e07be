#pragma once

#include <vector>

#include "hec/corpus/tokenizer.hpp"
#include "hec/numerics/tensor.hpp"

namespace hec::eval {

using corpus::TokenId;
using corpus::TokenSeq;

// Forward variables of one prefix g over all frames:
//   non_blank[t]: log P(x_1..x_t emit g, path ends in last(g))
//   blank[t]:     log P(x_1..x_t emit g, path ends in blank)
// and psi = log P(the output starts with g).
struct CtcPrefixState {
  TokenSeq prefix;
  std::vector<double> non_blank;
  std::vector<double> blank;
  double psi = 0.0;
};

// Prefix scoring against CTC log-posteriors [T', V] (column 0 is blank).
class CtcPrefixScorer {
 public:
  explicit CtcPrefixScorer(const num::Tensor& log_probs);

  CtcPrefixState initial() const;
  // State of prefix + next. `next` == corpus::kEos closes the sequence:
  // psi becomes log P(output == prefix). Blank is rejected.
  CtcPrefixState extend(const CtcPrefixState& state, TokenId next) const;

  std::size_t frames() const { return T_; }

 private:
  const num::Tensor& lp_;
  std::size_t T_, V_;
};

// log P(prefix + next as an output prefix) - log P(prefix as a prefix).
double ctc_prefix_score(const num::Tensor& log_probs, const TokenSeq& prefix, TokenId next);

}  // namespace hec::eval
