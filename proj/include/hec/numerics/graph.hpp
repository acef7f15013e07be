#pragma once

#include <cstdint>
#include <functional>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hec/numerics/tensor.hpp"

namespace hec::num {

using AttrValue =
    std::variant<bool, std::int64_t, double, std::vector<std::int64_t>, std::string>;

// Operator attributes. Getters without a default reject missing keys.
class Attrs {
 public:
  Attrs() = default;
  Attrs(std::initializer_list<std::pair<const std::string, AttrValue>> init)
      : values_(init) {}

  Attrs& set(const std::string& key, AttrValue value) {
    values_[key] = std::move(value);
    return *this;
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  const std::vector<std::int64_t>& get_ints(const std::string& key) const;

 private:
  const AttrValue& find(const std::string& key) const;
  std::map<std::string, AttrValue> values_;
};

struct ForwardResult {
  Tensor output;
  std::vector<Tensor> saved;  // intermediates reused by backward
};

struct OpContext {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const std::vector<Tensor>& saved;
  const Attrs& attrs;
};

// An operator: forward computes the output, backward accumulates
// d(loss)/d(input) into grads[i] for every non-null slot.
struct OpDef {
  std::string name;
  std::function<ForwardResult(std::span<const Tensor* const>, const Attrs&)> forward;
  std::function<void(const OpContext&, const Tensor& grad_out,
                     std::span<Tensor* const> grads)>
      backward;
};

// Built-in operator table (see ops.cpp for the shape rule of each entry).
const OpDef& find_op(std::string_view name);
std::vector<std::string> op_names();

// Evaluates one operator without recording, with shape and finiteness checks.
Tensor forward_op(std::string_view name, const std::vector<const Tensor*>& inputs,
                  const Attrs& attrs = {});

using NodeId = std::size_t;
using GradientMap = std::map<std::string, Tensor>;

// The computation record: every operator application in topological order.
// Leaves are constants (no gradient) or named parameters (gradient tracked).
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId constant(Tensor value);
  // The referenced tensor must outlive the graph.
  NodeId parameter(const std::string& name, const Tensor& value);

  NodeId apply(std::string_view op, std::vector<NodeId> inputs, Attrs attrs = {});
  NodeId apply(const OpDef& op, std::vector<NodeId> inputs, Attrs attrs = {});

  const Tensor& value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  // Reverse-mode accumulation from a scalar loss. Every parameter leaf of
  // this graph appears in the result; unreachable ones hold zeros.
  GradientMap backward(NodeId loss) const;

  // Re-executes every recorded operator from the leaf values.
  std::vector<Tensor> replay() const;

 private:
  struct Node {
    const OpDef* op = nullptr;  // null for leaves
    std::vector<NodeId> inputs;
    Attrs attrs;
    Tensor value;
    const Tensor* external = nullptr;
    std::vector<Tensor> saved;
    std::string param_name;
    bool requires_grad = false;
  };
  const Tensor& node_value(const Node& n) const {
    return n.external ? *n.external : n.value;
  }
  std::deque<Node> nodes_;  // stable references across appends
};

// Lightweight handle for building expressions on a graph.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Tensor& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
};

Var constant(Graph& g, Tensor value);
Var apply(std::string_view op, std::initializer_list<Var> inputs, Attrs attrs = {});
Var apply_list(std::string_view op, const std::vector<Var>& inputs, Attrs attrs = {});

Var matmul(Var a, Var b);
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sigmoid(Var x);
Var swish(Var x);
Var relu(Var x);
Var glu(Var x);
Var softmax(Var x, int axis = -1);
Var log_softmax(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var depthwise_conv1d(Var x, Var w, Var b);
Var conv1d(Var x, Var w, Var b, std::int64_t kernel, std::int64_t stride);
Var embedding(Var table, const std::vector<std::int64_t>& ids);
Var concat(const std::vector<Var>& parts, int axis);
Var masked_fill(Var x, const std::vector<std::int64_t>& mask, double value);
Var attention(Var q, Var k, Var v, std::int64_t heads, bool causal,
              std::int64_t key_len = -1);
Var sum(Var x);
Var mean(Var x);
Var cross_entropy(Var logits, const std::vector<std::int64_t>& targets);

// Per-head attention probabilities, stacked as [heads * Tq, Tk].
// Masked entries are exactly zero.
Tensor attention_weights(const Tensor& q, const Tensor& k, std::int64_t heads,
                         bool causal, std::int64_t key_len = -1);

}  // namespace hec::num
