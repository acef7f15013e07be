#pragma once

#include <cstdint>
#include <vector>

#include "hec/numerics/graph.hpp"

namespace hec::train {

// Frames needed to emit `target`: its length plus one blank between every
// pair of equal neighbours.
std::size_t ctc_min_frames(const std::vector<std::int64_t>& target);

// The "ctc_loss" operator: logits[T,V] -> scalar -log p(target | logits),
// log-softmax applied internally, blank is column 0 (attr targets). An
// infeasible target raises ErrorKind::kInfeasible.
const num::OpDef& ctc_op();

num::Var ctc_loss(num::Var logits, const std::vector<std::int64_t>& target);
double ctc_loss_value(const num::Tensor& logits, const std::vector<std::int64_t>& target);

}  // namespace hec::train
