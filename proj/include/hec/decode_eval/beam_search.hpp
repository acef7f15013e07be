#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hec/decode_eval/ctc_prefix.hpp"
#include "hec/second_pass/aed.hpp"

namespace hec::eval {

inline constexpr double kCtcWeight = 0.3;
inline constexpr double kAttWeight = 0.7;

struct BeamResult {
  TokenSeq tokens;  // eos excluded
  double att = 0.0;    // attention log-score (eos included when finished)
  double ctc = 0.0;    // CTC prefix log-score
  double joint = 0.0;  // kCtcWeight * ctc + kAttWeight * att
  bool finished = true;
  bool truncated = false;  // no finite finished hypothesis within max_len
};

struct BeamOptions {
  std::size_t beam = 5;
  std::size_t max_len = 0;  // tokens before eos; 0 means 2 * T'
  bool length_normalize = false;
};

// Next-token attention log-probabilities for a hypothesis; implementations
// keep their own per-hypothesis state.
class AttentionScorer {
 public:
  virtual ~AttentionScorer() = default;
  struct State {
    virtual ~State() = default;
  };
  virtual std::unique_ptr<State> start() const = 0;
  // Consumes `token` (sos first) and returns log-probs of the next token.
  virtual std::vector<double> step(State& state, TokenId token) const = 0;
  virtual std::unique_ptr<State> clone(const State& state) const = 0;
  virtual std::size_t vocab() const = 0;
};

// Incremental AED decoder over precomputed encoder outputs.
class AedAttentionScorer : public AttentionScorer {
 public:
  AedAttentionScorer(const second_pass::AEDModel& model, const second_pass::EncodedInput& enc)
      : model_(model), enc_(enc) {}
  std::unique_ptr<State> start() const override;
  std::vector<double> step(State& state, TokenId token) const override;
  std::unique_ptr<State> clone(const State& state) const override;
  std::size_t vocab() const override { return model_.config.vocab; }

 private:
  const second_pass::AEDModel& model_;
  const second_pass::EncodedInput& enc_;
};

// One-pass joint CTC/attention beam search. Candidates per step are all
// symbol ids and eos; after max_len tokens only eos is allowed. Ranking:
// joint score, then shorter, then lexicographic ids. Stops once the best
// finished hypothesis scores at least the best running one (scores never
// increase along a hypothesis, so this is exact without length
// normalization).
BeamResult joint_beam_search(const AttentionScorer& att, const num::Tensor& ctc_log_probs,
                             const BeamOptions& opts);

BeamResult recognize(const second_pass::AEDModel& model, const num::Tensor& features,
                     const TokenSeq& onebest, const BeamOptions& opts);

}  // namespace hec::eval
