#pragma once

#include <cstdint>
#include <vector>

#include "hec/numerics/graph.hpp"

namespace hec::train {

struct JointLossWeights {
  double ctc = 0.3;
  double att = 0.7;

  void validate() const;
};

// Mean per-token negative log-likelihood of `reference` (eos included)
// under teacher-forced logits, one row per reference token.
num::Var attention_ce_loss(num::Var logits, const std::vector<std::int64_t>& reference);

// w.ctc * ctc + w.att * att; rejects non-finite inputs.
double joint_loss(double ctc, double att, const JointLossWeights& w = {});
num::Var joint_loss(num::Var ctc, num::Var att, const JointLossWeights& w = {});

}  // namespace hec::train
