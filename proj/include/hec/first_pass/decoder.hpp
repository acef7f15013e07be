#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "hec/first_pass/ngram.hpp"
#include "hec/numerics/tensor.hpp"

namespace hec::first_pass {

struct NBestEntry {
  int rank = 0;  // 1-based; 0 marks an utterance without detected speech
  TokenSeq tokens;
  double acoustic = 0.0;  // log
  double lm = 0.0;        // log, unscaled
  double combined = 0.0;  // acoustic + lm_scale * lm

  friend bool operator==(const NBestEntry&, const NBestEntry&) = default;
};

inline constexpr std::size_t kUnlimitedBeam = std::numeric_limits<std::size_t>::max();

struct PrefixSearchOptions {
  double lm_scale = 0.5;
  std::size_t beam = 8;
  std::size_t nbest = 4;
  bool close = true;  // score the end symbol (last segment of an utterance)
};

// Frame-synchronous prefix beam search over per-frame log-probabilities
// (rows: frames, columns: token ids, column corpus::kBlank is blank). Labels
// collapse CTC-style: repeats merge unless separated by blank. The LM is
// applied once per emitted token. Pruning order: combined score, then
// shorter prefix, then lexicographic ids. Returns at most `nbest` distinct
// sequences sorted the same way; hypotheses with -inf acoustic score are
// dropped.
std::vector<NBestEntry> prefix_beam_search(const num::Tensor& log_probs, const LmScorer& lm,
                                           const PrefixSearchOptions& opts,
                                           const LmContext& start = {});

// Sort order shared by pruning and output.
bool better_entry(const NBestEntry& a, const NBestEntry& b);

}  // namespace hec::first_pass
