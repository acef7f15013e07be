#include "hec/train/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "hec/error.hpp"

namespace hec::train {

void TrainConfig::validate() const {
  require(epochs > 0 && batch_size > 0 && peak_lr > 0 && warmup_steps > 0 && clip_norm > 0 &&
              beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0,
          ErrorKind::kInvalidArgument, "invalid train config: all settings must be positive");
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("epochs", static_cast<std::uint64_t>(epochs));
  kv.set("batch_size", static_cast<std::uint64_t>(batch_size));
  kv.set("peak_lr", peak_lr);
  kv.set("warmup_steps", static_cast<std::uint64_t>(warmup_steps));
  kv.set("clip_norm", clip_norm);
  kv.set("beta1", beta1);
  kv.set("beta2", beta2);
  kv.set("adam_eps", adam_eps);
  kv.set("seed", static_cast<std::uint64_t>(seed));
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.peak_lr = kv.get_double("peak_lr", c.peak_lr);
  c.warmup_steps = kv.get_size("warmup_steps", c.warmup_steps);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.seed = kv.get_uint("seed", c.seed);
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(cfg.warmup_steps);
  return s <= w ? cfg.peak_lr * s / w : cfg.peak_lr * std::sqrt(w / s);
}

double clip_global_norm(num::GradientMap& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.data()) ss += x * x;
  }
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g.data()) x *= f;
    }
  }
  return norm;
}

double Adam::step(num::ParameterSet& params, num::GradientMap& grads) {
  clip_global_norm(grads, cfg_.clip_norm);
  ++step_;
  const double lr = learning_rate(cfg_, step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, g] : grads) {
    num::Tensor& p = params.at(name);
    require(p.shape() == g.shape(), ErrorKind::kShape, "gradient shape mismatch for " + name);
    auto [mi, fresh_m] = m_.try_emplace(name, num::Tensor(p.shape()));
    auto [vi, fresh_v] = v_.try_emplace(name, num::Tensor(p.shape()));
    num::Tensor& m = mi->second;
    num::Tensor& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }
  return lr;
}

}  // namespace hec::train
