#pragma once

#include <cstdint>

#include "hec/config.hpp"
#include "hec/numerics/graph.hpp"
#include "hec/numerics/params.hpp"

namespace hec::train {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;    // utterances per update
  double peak_lr = 2e-3;
  std::size_t warmup_steps = 200;
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv);
};

// Linear warmup to peak_lr, then peak_lr * sqrt(warmup / step).
double learning_rate(const TrainConfig& cfg, std::size_t step);

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(num::GradientMap& grads, double max_norm);

class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  // One update with clipped gradients; returns the learning rate used.
  double step(num::ParameterSet& params, num::GradientMap& grads);
  std::size_t steps() const { return step_; }

 private:
  TrainConfig cfg_;
  std::size_t step_ = 0;
  num::GradientMap m_, v_;
};

}  // namespace hec::train
