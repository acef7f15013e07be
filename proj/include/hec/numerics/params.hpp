#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <unordered_map>

#include "hec/numerics/graph.hpp"
#include "hec/numerics/tensor.hpp"

namespace hec::num {

// Named model parameters. Iteration order is the lexicographic name order,
// which fixes the layout of checkpoints and optimizer state.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  // Uniform in +-1/sqrt(fan_in).
  Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                      std::mt19937_64& rng);
  Tensor& add_filled(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.params_ == b.params_;
  }

 private:
  std::map<std::string, Tensor> params_;
};

// Binds parameters into a graph once per name.
class Binder {
 public:
  Binder(Graph& graph, const ParameterSet& params) : graph_(graph), params_(params) {}

  Var operator()(const std::string& name);
  Graph& graph() { return graph_; }

 private:
  Graph& graph_;
  const ParameterSet& params_;
  std::unordered_map<std::string, Var> bound_;
};

// Checkpoint container (little-endian):
//   "HECCKPT1"
//   u32 config byte length, config text (flat key=value lines)
//   u32 parameter count
//   per parameter: u32 name length, name, u32 rank, rank x u64 dims,
//                  prod(dims) x f64 values
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::string& config_text = "");
ParameterSet load_checkpoint(const std::filesystem::path& path,
                             std::string* config_text = nullptr);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the largest error with both values
  std::size_t checked = 0;
  bool passed = false;
};

// Scalar function of one tensor, built on a fresh graph per evaluation.
using TensorFn = std::function<Var(Graph&, Var)>;
// Scalar function of a parameter set.
using ParamFn = std::function<Var(Binder&)>;

// Fourth-order central differences (steps +-eps, +-2 eps) against
// reverse-mode gradients; relative error is
// |a-b| / max(|a|, |b|, 1e-8). eps must lie in (0, 1e-2].
GradCheckReport grad_check(const TensorFn& f, const Tensor& x, double eps,
                           double tolerance = 1e-4);
GradCheckReport grad_check(const ParamFn& f, ParameterSet& params, double eps,
                           double tolerance = 1e-4);

}  // namespace hec::num
