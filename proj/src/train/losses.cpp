#include "hec/train/losses.hpp"

#include <cmath>

#include "hec/error.hpp"

namespace hec::train {

void JointLossWeights::validate() const {
  require(ctc >= 0 && ctc <= 1 && att >= 0 && att <= 1 && std::abs(ctc + att - 1.0) < 1e-12,
          ErrorKind::kInvalidArgument, "joint loss weights must lie in [0,1] and sum to 1");
}

num::Var attention_ce_loss(num::Var logits, const std::vector<std::int64_t>& reference) {
  require(logits.shape().size() == 2 && logits.shape()[0] == reference.size(),
          ErrorKind::kShape,
          "attention loss: " + std::to_string(reference.size()) + " reference tokens for logits " +
              num::shape_str(logits.shape()));
  return num::cross_entropy(logits, reference);
}

double joint_loss(double ctc, double att, const JointLossWeights& w) {
  w.validate();
  require(std::isfinite(ctc) && std::isfinite(att), ErrorKind::kNumeric,
          "joint loss inputs must be finite");
  return w.ctc * ctc + w.att * att;
}

num::Var joint_loss(num::Var ctc, num::Var att, const JointLossWeights& w) {
  joint_loss(ctc.value().item(), att.value().item(), w);
  return num::add(num::scale(ctc, w.ctc), num::scale(att, w.att));
}

}  // namespace hec::train
