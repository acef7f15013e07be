#include "hec/numerics/graph.hpp"

#include "hec/error.hpp"

namespace hec::num {

const AttrValue& Attrs::find(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::kInvalidArgument,
          "missing operator attribute '" + key + "'");
  return it->second;
}

std::int64_t Attrs::get_int(const std::string& key) const {
  const auto& v = find(key);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* b = std::get_if<bool>(&v)) return *b ? 1 : 0;
  fail(ErrorKind::kInvalidArgument, "attribute '" + key + "' is not an integer");
}

std::int64_t Attrs::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double Attrs::get_double(const std::string& key) const {
  const auto& v = find(key);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  fail(ErrorKind::kInvalidArgument, "attribute '" + key + "' is not a real");
}

double Attrs::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool Attrs::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = find(key);
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i != 0;
  fail(ErrorKind::kInvalidArgument, "attribute '" + key + "' is not a flag");
}

const std::vector<std::int64_t>& Attrs::get_ints(const std::string& key) const {
  const auto& v = find(key);
  const auto* list = std::get_if<std::vector<std::int64_t>>(&v);
  require(list != nullptr, ErrorKind::kInvalidArgument,
          "attribute '" + key + "' is not an integer list");
  return *list;
}

namespace {

Tensor run_checked(const OpDef& op, std::span<const Tensor* const> inputs,
                   const Attrs& attrs, std::vector<Tensor>* saved) {
  ForwardResult r = op.forward(inputs, attrs);
  if (!r.output.all_finite()) {
    fail(ErrorKind::kNumeric, "operator '" + op.name + "' produced a non-finite value");
  }
  if (saved) *saved = std::move(r.saved);
  return std::move(r.output);
}

}  // namespace

Tensor forward_op(std::string_view name, const std::vector<const Tensor*>& inputs,
                  const Attrs& attrs) {
  return run_checked(find_op(name), inputs, attrs, nullptr);
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Graph::parameter(const std::string& name, const Tensor& value) {
  Node n;
  n.external = &value;
  n.param_name = name;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Graph::apply(std::string_view op, std::vector<NodeId> inputs, Attrs attrs) {
  return apply(find_op(op), std::move(inputs), std::move(attrs));
}

NodeId Graph::apply(const OpDef& op, std::vector<NodeId> inputs, Attrs attrs) {
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  bool grad = false;
  for (NodeId id : inputs) {
    require(id < nodes_.size(), ErrorKind::kInvalidArgument,
            "operator '" + op.name + "' references an unknown node");
    in.push_back(&node_value(nodes_[id]));
    grad = grad || nodes_[id].requires_grad;
  }
  Node n;
  n.op = &op;
  n.value = run_checked(op, in, attrs, &n.saved);
  n.inputs = std::move(inputs);
  n.attrs = std::move(attrs);
  n.requires_grad = grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

const Tensor& Graph::value(NodeId id) const { return node_value(nodes_.at(id)); }

GradientMap Graph::backward(NodeId loss) const {
  require(loss < nodes_.size(), ErrorKind::kInvalidArgument, "unknown loss node");
  const Tensor& lv = value(loss);
  require(lv.size() == 1, ErrorKind::kShape,
          "backward requires a scalar loss, got shape " + shape_str(lv.shape()));

  std::vector<Tensor> grads(nodes_.size());
  if (nodes_[loss].requires_grad) grads[loss] = Tensor(lv.shape(), 1.0);

  std::vector<const Tensor*> in;
  std::vector<Tensor*> slots;
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.op || !n.requires_grad || grads[id].empty()) continue;
    in.clear();
    slots.clear();
    for (NodeId src : n.inputs) {
      in.push_back(&node_value(nodes_[src]));
      if (nodes_[src].requires_grad) {
        if (grads[src].empty()) grads[src] = Tensor(node_value(nodes_[src]).shape());
        slots.push_back(&grads[src]);
      } else {
        slots.push_back(nullptr);
      }
    }
    OpContext ctx{in, n.value, n.saved, n.attrs};
    n.op->backward(ctx, grads[id], slots);
    // Intermediate gradients are no longer needed once propagated.
    if (n.param_name.empty()) grads[id] = Tensor();
  }

  GradientMap out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.param_name.empty()) continue;
    Tensor g = grads[id].empty() ? Tensor(node_value(n).shape()) : std::move(grads[id]);
    auto it = out.find(n.param_name);
    if (it == out.end()) {
      out.emplace(n.param_name, std::move(g));
    } else {
      it->second += g;
    }
  }
  return out;
}

std::vector<Tensor> Graph::replay() const {
  std::vector<Tensor> values(nodes_.size());
  std::vector<const Tensor*> in;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.op) {
      values[id] = node_value(n);
      continue;
    }
    in.clear();
    for (NodeId src : n.inputs) in.push_back(&values[src]);
    values[id] = run_checked(*n.op, in, n.attrs, nullptr);
  }
  return values;
}

Var constant(Graph& g, Tensor value) { return Var{&g, g.constant(std::move(value))}; }

Var apply_list(std::string_view op, const std::vector<Var>& inputs, Attrs attrs) {
  require(!inputs.empty(), ErrorKind::kInvalidArgument, "operator without inputs");
  Graph* g = inputs.front().graph;
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const Var& v : inputs) {
    require(v.graph == g, ErrorKind::kInvalidArgument,
            "operator inputs belong to different graphs");
    ids.push_back(v.id);
  }
  return Var{g, g->apply(op, std::move(ids), std::move(attrs))};
}

Var apply(std::string_view op, std::initializer_list<Var> inputs, Attrs attrs) {
  return apply_list(op, std::vector<Var>(inputs), std::move(attrs));
}

Var matmul(Var a, Var b) { return apply("matmul", {a, b}); }
Var linear(Var x, Var w, Var b) { return apply("linear", {x, w, b}); }
Var add(Var a, Var b) { return apply("add", {a, b}); }
Var sub(Var a, Var b) { return apply("sub", {a, b}); }
Var mul(Var a, Var b) { return apply("mul", {a, b}); }
Var scale(Var x, double factor) { return apply("scale", {x}, {{"factor", factor}}); }
Var sigmoid(Var x) { return apply("sigmoid", {x}); }
Var swish(Var x) { return apply("swish", {x}); }
Var relu(Var x) { return apply("relu", {x}); }
Var glu(Var x) { return apply("glu", {x}); }
Var softmax(Var x, int axis) {
  return apply("softmax", {x}, {{"axis", static_cast<std::int64_t>(axis)}});
}
Var log_softmax(Var x) { return apply("log_softmax", {x}); }
Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  return apply("layer_norm", {x, gamma, beta}, {{"eps", eps}});
}
Var depthwise_conv1d(Var x, Var w, Var b) { return apply("depthwise_conv1d", {x, w, b}); }
Var conv1d(Var x, Var w, Var b, std::int64_t kernel, std::int64_t stride) {
  return apply("conv1d", {x, w, b}, {{"kernel", kernel}, {"stride", stride}});
}
Var embedding(Var table, const std::vector<std::int64_t>& ids) {
  return apply("embedding", {table}, {{"ids", ids}});
}
Var concat(const std::vector<Var>& parts, int axis) {
  return apply_list("concat", parts, {{"axis", static_cast<std::int64_t>(axis)}});
}
Var masked_fill(Var x, const std::vector<std::int64_t>& mask, double value) {
  return apply("masked_fill", {x}, {{"mask", mask}, {"value", value}});
}
Var attention(Var q, Var k, Var v, std::int64_t heads, bool causal,
              std::int64_t key_len) {
  return apply("attention", {q, k, v},
               {{"heads", heads}, {"causal", causal}, {"key_len", key_len}});
}
Var sum(Var x) { return apply("sum", {x}); }
Var mean(Var x) { return apply("mean", {x}); }
Var cross_entropy(Var logits, const std::vector<std::int64_t>& targets) {
  return apply("cross_entropy", {logits}, {{"targets", targets}});
}

}  // namespace hec::num
