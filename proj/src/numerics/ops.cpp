// Built-in operator table. Shape rules:
//   matmul            A[m,k] B[k,n] -> [m,n]
//   linear            X[m,k] W[k,n] b[n] -> [m,n]
//   add/sub/mul       elementwise, identical shapes
//   scale             any -> same (attr factor)
//   sigmoid/swish/relu any -> same
//   glu               X[m,2n] -> [m,n], first half gated by sigmoid of second
//   softmax           rank 1 or 2 (attr axis: 0, 1 or -1 for last) -> same
//   log_softmax       over the last axis -> same
//   layer_norm        X[m,n] gamma[n] beta[n] -> [m,n] (attr eps)
//   depthwise_conv1d  X[T,C] W[K,C] b[C] -> [T,C], K odd, zero "same" padding
//   conv1d            X[T,Cin] W[K*Cin,Cout] b[Cout] -> [ceil(T/stride),Cout]
//                     (attrs kernel, stride; (K-1)/2 zero frames on the left,
//                     zero padding on the right up to the last window)
//   embedding         table[V,E] -> [n,E] (attr ids)
//   concat            rank-2 inputs along attr axis (0 rows, 1 columns)
//   masked_fill       any -> same (attrs mask, value)
//   attention         Q[Tq,E] K[Tk,E] V[Tk,E] -> [Tq,E] (attrs heads, causal, key_len)
//   sum/mean          any -> scalar
//   cross_entropy     logits[n,V] -> scalar mean NLL (attr targets)
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "hec/error.hpp"
#include "hec/numerics/graph.hpp"

namespace hec::num {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using CStridedM = Eigen::Map<const RowMat, 0, Strided>;
using StridedM = Eigen::Map<RowMat, 0, Strided>;

CMapM mat(const Tensor& t) { return CMapM(t.ptr(), t.rows(), t.cols()); }
MapM mat(Tensor& t) { return MapM(t.ptr(), t.rows(), t.cols()); }

using Inputs = std::span<const Tensor* const>;
using Grads = std::span<Tensor* const>;

[[noreturn]] void shape_error(const std::string& op, Inputs in,
                              const std::string& detail = "") {
  std::string msg = "operator '" + op + "' rejected input shapes";
  for (const Tensor* t : in) msg += " " + shape_str(t->shape());
  if (!detail.empty()) msg += ": " + detail;
  fail(ErrorKind::kShape, msg);
}

void expect_arity(const std::string& op, Inputs in, std::size_t n) {
  if (in.size() != n) {
    fail(ErrorKind::kInvalidArgument, "operator '" + op + "' expects " +
                                          std::to_string(n) + " inputs, got " +
                                          std::to_string(in.size()));
  }
}

void expect_rank(const std::string& op, Inputs in, std::size_t i, std::size_t rank) {
  if (in[i]->rank() != rank) {
    shape_error(op, in, "input " + std::to_string(i) + " must have rank " +
                            std::to_string(rank));
  }
}

double sigmoid_of(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------- matmul ----

OpDef make_matmul() {
  OpDef op;
  op.name = "matmul";
  op.forward = [](Inputs in, const Attrs&) {
    expect_arity("matmul", in, 2);
    expect_rank("matmul", in, 0, 2);
    expect_rank("matmul", in, 1, 2);
    if (in[0]->dim(1) != in[1]->dim(0)) shape_error("matmul", in, "inner dimensions differ");
    Tensor out(Shape{in[0]->dim(0), in[1]->dim(1)});
    mat(out).noalias() = mat(*in[0]) * mat(*in[1]);
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (grads[0]) mat(*grads[0]).noalias() += mat(g) * mat(*c.inputs[1]).transpose();
    if (grads[1]) mat(*grads[1]).noalias() += mat(*c.inputs[0]).transpose() * mat(g);
  };
  return op;
}

OpDef make_linear() {
  OpDef op;
  op.name = "linear";
  op.forward = [](Inputs in, const Attrs&) {
    expect_arity("linear", in, 3);
    expect_rank("linear", in, 0, 2);
    expect_rank("linear", in, 1, 2);
    expect_rank("linear", in, 2, 1);
    if (in[0]->dim(1) != in[1]->dim(0) || in[2]->dim(0) != in[1]->dim(1)) {
      shape_error("linear", in);
    }
    Tensor out(Shape{in[0]->dim(0), in[1]->dim(1)});
    auto o = mat(out);
    o.noalias() = mat(*in[0]) * mat(*in[1]);
    o.rowwise() += mat(*in[2]).row(0);
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (grads[0]) mat(*grads[0]).noalias() += mat(g) * mat(*c.inputs[1]).transpose();
    if (grads[1]) mat(*grads[1]).noalias() += mat(*c.inputs[0]).transpose() * mat(g);
    if (grads[2]) mat(*grads[2]).row(0) += mat(g).colwise().sum();
  };
  return op;
}

// ----------------------------------------------------------- elementwise ----

template <typename Fwd, typename Bwd>
OpDef make_binary(const std::string& name, Fwd fwd, Bwd bwd) {
  OpDef op;
  op.name = name;
  op.forward = [name, fwd](Inputs in, const Attrs&) {
    expect_arity(name, in, 2);
    if (in[0]->shape() != in[1]->shape()) shape_error(name, in, "shapes must match");
    Tensor out(in[0]->shape());
    const double* a = in[0]->ptr();
    const double* b = in[1]->ptr();
    double* o = out.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] = fwd(a[i], b[i]);
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [bwd](const OpContext& c, const Tensor& g, Grads grads) {
    const double* a = c.inputs[0]->ptr();
    const double* b = c.inputs[1]->ptr();
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto [da, db] = bwd(a[i], b[i], g[i]);
      if (grads[0]) (*grads[0])[i] += da;
      if (grads[1]) (*grads[1])[i] += db;
    }
  };
  return op;
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
OpDef make_unary(const std::string& name, Fwd fwd, Deriv deriv) {
  OpDef op;
  op.name = name;
  op.forward = [name, fwd](Inputs in, const Attrs& attrs) {
    expect_arity(name, in, 1);
    Tensor out(in[0]->shape());
    const double* x = in[0]->ptr();
    double* o = out.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] = fwd(x[i], attrs);
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [deriv](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const double* x = c.inputs[0]->ptr();
    const double* y = c.output.ptr();
    double* d = grads[0]->ptr();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * deriv(x[i], y[i], c.attrs);
  };
  return op;
}

OpDef make_glu() {
  OpDef op;
  op.name = "glu";
  op.forward = [](Inputs in, const Attrs&) {
    expect_arity("glu", in, 1);
    expect_rank("glu", in, 0, 2);
    const std::size_t m = in[0]->dim(0), w = in[0]->dim(1);
    if (w % 2 != 0) shape_error("glu", in, "last dimension must be even");
    const std::size_t n = w / 2;
    Tensor out(Shape{m, n});
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        out.at(r, j) = in[0]->at(r, j) * sigmoid_of(in[0]->at(r, j + n));
      }
    }
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const Tensor& x = *c.inputs[0];
    const std::size_t m = g.dim(0), n = g.dim(1);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        const double a = x.at(r, j);
        const double s = sigmoid_of(x.at(r, j + n));
        grads[0]->at(r, j) += g.at(r, j) * s;
        grads[0]->at(r, j + n) += g.at(r, j) * a * s * (1.0 - s);
      }
    }
  };
  return op;
}

// --------------------------------------------------------------- softmax ----

struct AxisLayout {
  std::size_t outer, n, inner;
};

AxisLayout axis_layout(const std::string& op, Inputs in, std::int64_t axis) {
  const Tensor& x = *in[0];
  if (x.rank() == 1 && (axis == 0 || axis == -1)) return {1, x.dim(0), 1};
  if (x.rank() == 2) {
    if (axis == 1 || axis == -1) return {x.dim(0), x.dim(1), 1};
    if (axis == 0) return {1, x.dim(0), x.dim(1)};
  }
  shape_error(op, in, "unsupported axis " + std::to_string(axis));
}

OpDef make_softmax() {
  OpDef op;
  op.name = "softmax";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("softmax", in, 1);
    const auto L = axis_layout("softmax", in, attrs.get_int("axis", -1));
    Tensor out(in[0]->shape());
    const double* x = in[0]->ptr();
    double* y = out.ptr();
    for (std::size_t o = 0; o < L.outer; ++o) {
      for (std::size_t i = 0; i < L.inner; ++i) {
        const std::size_t base = o * L.n * L.inner + i;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < L.n; ++k) mx = std::max(mx, x[base + k * L.inner]);
        double z = 0.0;
        for (std::size_t k = 0; k < L.n; ++k) {
          y[base + k * L.inner] = std::exp(x[base + k * L.inner] - mx);
          z += y[base + k * L.inner];
        }
        for (std::size_t k = 0; k < L.n; ++k) y[base + k * L.inner] /= z;
      }
    }
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const Tensor* one[] = {c.inputs[0]};
    const auto L = axis_layout("softmax", one, c.attrs.get_int("axis", -1));
    const double* y = c.output.ptr();
    double* d = grads[0]->ptr();
    for (std::size_t o = 0; o < L.outer; ++o) {
      for (std::size_t i = 0; i < L.inner; ++i) {
        const std::size_t base = o * L.n * L.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < L.n; ++k) {
          dot += g[base + k * L.inner] * y[base + k * L.inner];
        }
        for (std::size_t k = 0; k < L.n; ++k) {
          const std::size_t p = base + k * L.inner;
          d[p] += y[p] * (g[p] - dot);
        }
      }
    }
  };
  return op;
}

void log_softmax_rows(const double* x, double* y, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double* yr = y + r * n;
    double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) z += std::exp(xr[k] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < n; ++k) yr[k] = xr[k] - lse;
  }
}

OpDef make_log_softmax() {
  OpDef op;
  op.name = "log_softmax";
  op.forward = [](Inputs in, const Attrs&) {
    expect_arity("log_softmax", in, 1);
    if (in[0]->rank() < 1 || in[0]->rank() > 2) shape_error("log_softmax", in);
    Tensor out(in[0]->shape());
    log_softmax_rows(in[0]->ptr(), out.ptr(), in[0]->rows(), in[0]->cols());
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const std::size_t rows = g.rows(), n = g.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[r * n + k];
      for (std::size_t k = 0; k < n; ++k) {
        (*grads[0])[r * n + k] += g[r * n + k] - std::exp(c.output[r * n + k]) * s;
      }
    }
  };
  return op;
}

// ------------------------------------------------------------ layer_norm ----

OpDef make_layer_norm() {
  OpDef op;
  op.name = "layer_norm";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("layer_norm", in, 3);
    expect_rank("layer_norm", in, 0, 2);
    const std::size_t m = in[0]->dim(0), n = in[0]->dim(1);
    if (in[1]->shape() != Shape{n} || in[2]->shape() != Shape{n}) {
      shape_error("layer_norm", in, "scale/shift must match the last dimension");
    }
    const double eps = attrs.get_double("eps", 1e-5);
    Tensor out(Shape{m, n});
    Tensor xhat(Shape{m, n});
    Tensor rstd(Shape{m});
    for (std::size_t r = 0; r < m; ++r) {
      const double* x = in[0]->ptr() + r * n;
      double mu = 0.0;
      for (std::size_t k = 0; k < n; ++k) mu += x[k];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t k = 0; k < n; ++k) var += (x[k] - mu) * (x[k] - mu);
      var /= static_cast<double>(n);
      const double rs = 1.0 / std::sqrt(var + eps);
      rstd[r] = rs;
      for (std::size_t k = 0; k < n; ++k) {
        const double h = (x[k] - mu) * rs;
        xhat.at(r, k) = h;
        out.at(r, k) = h * (*in[1])[k] + (*in[2])[k];
      }
    }
    std::vector<Tensor> saved;
    saved.push_back(std::move(xhat));
    saved.push_back(std::move(rstd));
    return ForwardResult{std::move(out), std::move(saved)};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    const Tensor& xhat = c.saved[0];
    const Tensor& rstd = c.saved[1];
    const Tensor& gamma = *c.inputs[1];
    const std::size_t m = g.dim(0), n = g.dim(1);
    for (std::size_t r = 0; r < m; ++r) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double d = g.at(r, k) * gamma[k];
        mean_d += d;
        mean_dx += d * xhat.at(r, k);
        if (grads[1]) (*grads[1])[k] += g.at(r, k) * xhat.at(r, k);
        if (grads[2]) (*grads[2])[k] += g.at(r, k);
      }
      if (!grads[0]) continue;
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double d = g.at(r, k) * gamma[k];
        grads[0]->at(r, k) += rstd[r] * (d - mean_d - xhat.at(r, k) * mean_dx);
      }
    }
  };
  return op;
}

// ----------------------------------------------------------- convolution ----

OpDef make_depthwise_conv1d() {
  OpDef op;
  op.name = "depthwise_conv1d";
  op.forward = [](Inputs in, const Attrs&) {
    expect_arity("depthwise_conv1d", in, 3);
    expect_rank("depthwise_conv1d", in, 0, 2);
    expect_rank("depthwise_conv1d", in, 1, 2);
    const std::size_t T = in[0]->dim(0), C = in[0]->dim(1), K = in[1]->dim(0);
    if (in[1]->dim(1) != C || in[2]->shape() != Shape{C} || K % 2 == 0) {
      shape_error("depthwise_conv1d", in);
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
    Tensor out(Shape{T, C});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) out.at(t, c) = (*in[2])[c];
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t c = 0; c < C; ++c) {
          out.at(t, c) += in[1]->at(k, c) * in[0]->at(static_cast<std::size_t>(src), c);
        }
      }
    }
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& ctx, const Tensor& g, Grads grads) {
    const Tensor& x = *ctx.inputs[0];
    const Tensor& w = *ctx.inputs[1];
    const std::size_t T = x.dim(0), C = x.dim(1), K = w.dim(0);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
    for (std::size_t t = 0; t < T; ++t) {
      if (grads[2]) {
        for (std::size_t c = 0; c < C; ++c) (*grads[2])[c] += g.at(t, c);
      }
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const auto s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < C; ++c) {
          if (grads[0]) grads[0]->at(s, c) += w.at(k, c) * g.at(t, c);
          if (grads[1]) grads[1]->at(k, c) += x.at(s, c) * g.at(t, c);
        }
      }
    }
  };
  return op;
}

OpDef make_conv1d() {
  OpDef op;
  op.name = "conv1d";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("conv1d", in, 3);
    expect_rank("conv1d", in, 0, 2);
    expect_rank("conv1d", in, 1, 2);
    const auto K = static_cast<std::size_t>(attrs.get_int("kernel"));
    const auto S = static_cast<std::size_t>(attrs.get_int("stride"));
    const std::size_t T = in[0]->dim(0), Cin = in[0]->dim(1);
    if (K == 0 || S == 0 || in[1]->dim(0) != K * Cin || in[2]->shape() != Shape{in[1]->dim(1)}) {
      shape_error("conv1d", in);
    }
    const std::size_t Tout = (T + S - 1) / S;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
    Tensor cols(Shape{Tout, K * Cin});
    for (std::size_t t = 0; t < Tout; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * S + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        std::copy_n(in[0]->ptr() + static_cast<std::size_t>(src) * Cin, Cin,
                    cols.ptr() + t * K * Cin + k * Cin);
      }
    }
    Tensor out(Shape{Tout, in[1]->dim(1)});
    auto o = mat(out);
    o.noalias() = mat(cols) * mat(*in[1]);
    o.rowwise() += mat(*in[2]).row(0);
    std::vector<Tensor> saved;
    saved.push_back(std::move(cols));
    return ForwardResult{std::move(out), std::move(saved)};
  };
  op.backward = [](const OpContext& ctx, const Tensor& g, Grads grads) {
    const Tensor& cols = ctx.saved[0];
    if (grads[1]) mat(*grads[1]).noalias() += mat(cols).transpose() * mat(g);
    if (grads[2]) mat(*grads[2]).row(0) += mat(g).colwise().sum();
    if (!grads[0]) return;
    const auto K = static_cast<std::size_t>(ctx.attrs.get_int("kernel"));
    const auto S = static_cast<std::size_t>(ctx.attrs.get_int("stride"));
    const std::size_t T = ctx.inputs[0]->dim(0), Cin = ctx.inputs[0]->dim(1);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
    Tensor dcols(cols.shape());
    mat(dcols).noalias() = mat(g) * mat(*ctx.inputs[1]).transpose();
    for (std::size_t t = 0; t < cols.dim(0); ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * S + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        double* dst = grads[0]->ptr() + static_cast<std::size_t>(src) * Cin;
        const double* from = dcols.ptr() + t * K * Cin + k * Cin;
        for (std::size_t c = 0; c < Cin; ++c) dst[c] += from[c];
      }
    }
  };
  return op;
}

// -------------------------------------------------------- data movement ----

OpDef make_embedding() {
  OpDef op;
  op.name = "embedding";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("embedding", in, 1);
    expect_rank("embedding", in, 0, 2);
    const auto& ids = attrs.get_ints("ids");
    const std::size_t V = in[0]->dim(0), E = in[0]->dim(1);
    if (ids.empty()) shape_error("embedding", in, "empty id list");
    Tensor out(Shape{ids.size(), E});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
        fail(ErrorKind::kInvalidArgument,
             "operator 'embedding': id " + std::to_string(ids[i]) +
                 " outside table of " + std::to_string(V) + " rows");
      }
      std::copy_n(in[0]->ptr() + static_cast<std::size_t>(ids[i]) * E, E, out.ptr() + i * E);
    }
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const auto& ids = c.attrs.get_ints("ids");
    const std::size_t E = g.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = grads[0]->ptr() + static_cast<std::size_t>(ids[i]) * E;
      for (std::size_t k = 0; k < E; ++k) dst[k] += g[i * E + k];
    }
  };
  return op;
}

OpDef make_concat() {
  OpDef op;
  op.name = "concat";
  op.forward = [](Inputs in, const Attrs& attrs) {
    const std::int64_t axis = attrs.get_int("axis");
    if (in.empty()) fail(ErrorKind::kInvalidArgument, "operator 'concat' without inputs");
    for (std::size_t i = 0; i < in.size(); ++i) expect_rank("concat", in, i, 2);
    std::size_t rows = 0, cols = 0;
    if (axis == 0) {
      cols = in[0]->dim(1);
      for (const Tensor* t : in) {
        if (t->dim(1) != cols) shape_error("concat", in, "column counts differ");
        rows += t->dim(0);
      }
    } else if (axis == 1 || axis == -1) {
      rows = in[0]->dim(0);
      for (const Tensor* t : in) {
        if (t->dim(0) != rows) shape_error("concat", in, "row counts differ");
        cols += t->dim(1);
      }
    } else {
      shape_error("concat", in, "unsupported axis");
    }
    Tensor out(Shape{rows, cols});
    std::size_t offset = 0;
    for (const Tensor* t : in) {
      if (axis == 0) {
        std::copy_n(t->ptr(), t->size(), out.ptr() + offset * cols);
        offset += t->dim(0);
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(t->ptr() + r * t->dim(1), t->dim(1), out.ptr() + r * cols + offset);
        }
        offset += t->dim(1);
      }
    }
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    const std::int64_t axis = c.attrs.get_int("axis");
    const std::size_t cols = g.dim(1);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      const Tensor& t = *c.inputs[i];
      if (grads[i]) {
        for (std::size_t r = 0; r < t.dim(0); ++r) {
          for (std::size_t k = 0; k < t.dim(1); ++k) {
            grads[i]->at(r, k) += axis == 0 ? g.at(offset + r, k) : g.at(r, offset + k);
          }
        }
      }
      offset += axis == 0 ? t.dim(0) : t.dim(1);
    }
    (void)cols;
  };
  return op;
}

OpDef make_masked_fill() {
  OpDef op;
  op.name = "masked_fill";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("masked_fill", in, 1);
    const auto& mask = attrs.get_ints("mask");
    if (mask.size() != in[0]->size()) shape_error("masked_fill", in, "mask length differs");
    const double value = attrs.get_double("value");
    Tensor out = *in[0];
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) out[i] = value;
    }
    return ForwardResult{std::move(out), {}};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const auto& mask = c.attrs.get_ints("mask");
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) (*grads[0])[i] += g[i];
    }
  };
  return op;
}

// ------------------------------------------------------------- attention ----

struct AttentionShape {
  std::size_t tq, tk, e, heads, dk, key_len;
  std::size_t offset;  // query i sits at key position i + offset
  bool causal;
};

AttentionShape attention_shape(Inputs in, const Attrs& attrs) {
  for (std::size_t i = 0; i < in.size(); ++i) expect_rank("attention", in, i, 2);
  const std::int64_t heads = attrs.get_int("heads");
  AttentionShape s{};
  s.tq = in[0]->dim(0);
  s.e = in[0]->dim(1);
  s.tk = in[1]->dim(0);
  if (in[1]->dim(1) != s.e || (in.size() > 2 && in[2]->shape() != in[1]->shape())) {
    shape_error("attention", in, "query/key/value widths differ");
  }
  if (heads <= 0 || s.e % static_cast<std::size_t>(heads) != 0) {
    shape_error("attention", in, "width not divisible by heads");
  }
  s.heads = static_cast<std::size_t>(heads);
  s.dk = s.e / s.heads;
  const std::int64_t kl = attrs.get_int("key_len", -1);
  s.key_len = kl < 0 ? s.tk : static_cast<std::size_t>(kl);
  if (s.key_len == 0 || s.key_len > s.tk) shape_error("attention", in, "bad key_len");
  s.causal = attrs.get_bool("causal", false);
  if (s.causal && s.tq > s.tk) shape_error("attention", in, "causal needs Tq <= Tk");
  s.offset = s.tk - s.tq;
  return s;
}

bool visible(const AttentionShape& s, std::size_t i, std::size_t j) {
  if (j >= s.key_len) return false;
  return !s.causal || j <= i + s.offset;
}

Tensor weights_impl(const Tensor& q, const Tensor& k, const AttentionShape& s) {
  Tensor p(Shape{s.heads * s.tq, s.tk});
  const double inv = 1.0 / std::sqrt(static_cast<double>(s.dk));
  for (std::size_t h = 0; h < s.heads; ++h) {
    CStridedM qh(q.ptr() + h * s.dk, s.tq, s.dk, Strided(s.e));
    CStridedM kh(k.ptr() + h * s.dk, s.tk, s.dk, Strided(s.e));
    MapM ph(p.ptr() + h * s.tq * s.tk, s.tq, s.tk);
    ph.noalias() = qh * kh.transpose();
    for (std::size_t i = 0; i < s.tq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.tk; ++j) {
        if (visible(s, i, j)) mx = std::max(mx, ph(i, j) * inv);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < s.tk; ++j) {
        const double w = visible(s, i, j) ? std::exp(ph(i, j) * inv - mx) : 0.0;
        ph(i, j) = w;
        z += w;
      }
      for (std::size_t j = 0; j < s.tk; ++j) ph(i, j) /= z;
    }
  }
  return p;
}

OpDef make_attention() {
  OpDef op;
  op.name = "attention";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("attention", in, 3);
    const AttentionShape s = attention_shape(in, attrs);
    Tensor p = weights_impl(*in[0], *in[1], s);
    Tensor out(Shape{s.tq, s.e});
    for (std::size_t h = 0; h < s.heads; ++h) {
      CMapM ph(p.ptr() + h * s.tq * s.tk, s.tq, s.tk);
      CStridedM vh(in[2]->ptr() + h * s.dk, s.tk, s.dk, Strided(s.e));
      StridedM oh(out.ptr() + h * s.dk, s.tq, s.dk, Strided(s.e));
      oh.noalias() = ph * vh;
    }
    std::vector<Tensor> saved;
    saved.push_back(std::move(p));
    return ForwardResult{std::move(out), std::move(saved)};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    const AttentionShape s = attention_shape(c.inputs, c.attrs);
    const Tensor& p = c.saved[0];
    const double inv = 1.0 / std::sqrt(static_cast<double>(s.dk));
    RowMat dp(s.tq, s.tk);
    for (std::size_t h = 0; h < s.heads; ++h) {
      CMapM ph(p.ptr() + h * s.tq * s.tk, s.tq, s.tk);
      CStridedM gh(g.ptr() + h * s.dk, s.tq, s.dk, Strided(s.e));
      CStridedM vh(c.inputs[2]->ptr() + h * s.dk, s.tk, s.dk, Strided(s.e));
      if (grads[2]) {
        StridedM dvh(grads[2]->ptr() + h * s.dk, s.tk, s.dk, Strided(s.e));
        dvh.noalias() += ph.transpose() * gh;
      }
      if (!grads[0] && !grads[1]) continue;
      dp.noalias() = gh * vh.transpose();
      for (std::size_t i = 0; i < s.tq; ++i) {
        const double dot = dp.row(i).dot(ph.row(i));
        for (std::size_t j = 0; j < s.tk; ++j) dp(i, j) = ph(i, j) * (dp(i, j) - dot) * inv;
      }
      if (grads[0]) {
        CStridedM kh(c.inputs[1]->ptr() + h * s.dk, s.tk, s.dk, Strided(s.e));
        StridedM dqh(grads[0]->ptr() + h * s.dk, s.tq, s.dk, Strided(s.e));
        dqh.noalias() += dp * kh;
      }
      if (grads[1]) {
        CStridedM qh(c.inputs[0]->ptr() + h * s.dk, s.tq, s.dk, Strided(s.e));
        StridedM dkh(grads[1]->ptr() + h * s.dk, s.tk, s.dk, Strided(s.e));
        dkh.noalias() += dp.transpose() * qh;
      }
    }
  };
  return op;
}

// ------------------------------------------------------------ reductions ----

OpDef make_reduce(const std::string& name, bool average) {
  OpDef op;
  op.name = name;
  op.forward = [name, average](Inputs in, const Attrs&) {
    expect_arity(name, in, 1);
    double s = 0.0;
    for (double v : in[0]->data()) s += v;
    if (average) s /= static_cast<double>(in[0]->size());
    return ForwardResult{Tensor::scalar(s), {}};
  };
  op.backward = [average](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const double d = average ? g[0] / static_cast<double>(c.inputs[0]->size()) : g[0];
    for (double& v : grads[0]->data()) v += d;
  };
  return op;
}

OpDef make_cross_entropy() {
  OpDef op;
  op.name = "cross_entropy";
  op.forward = [](Inputs in, const Attrs& attrs) {
    expect_arity("cross_entropy", in, 1);
    expect_rank("cross_entropy", in, 0, 2);
    const auto& targets = attrs.get_ints("targets");
    const std::size_t n = in[0]->dim(0), V = in[0]->dim(1);
    if (targets.size() != n) {
      shape_error("cross_entropy", in,
                  "got " + std::to_string(targets.size()) + " targets for " +
                      std::to_string(n) + " rows");
    }
    Tensor logp(in[0]->shape());
    log_softmax_rows(in[0]->ptr(), logp.ptr(), n, V);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V) {
        fail(ErrorKind::kInvalidArgument, "operator 'cross_entropy': target out of range");
      }
      loss -= logp.at(i, static_cast<std::size_t>(targets[i]));
    }
    std::vector<Tensor> saved;
    saved.push_back(std::move(logp));
    return ForwardResult{Tensor::scalar(loss / static_cast<double>(n)), std::move(saved)};
  };
  op.backward = [](const OpContext& c, const Tensor& g, Grads grads) {
    if (!grads[0]) return;
    const auto& targets = c.attrs.get_ints("targets");
    const Tensor& logp = c.saved[0];
    const std::size_t n = logp.dim(0), V = logp.dim(1);
    const double scale = g[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < V; ++k) {
        double d = std::exp(logp.at(i, k));
        if (static_cast<std::int64_t>(k) == targets[i]) d -= 1.0;
        grads[0]->at(i, k) += scale * d;
      }
    }
  };
  return op;
}

std::unordered_map<std::string, OpDef> build_table() {
  std::unordered_map<std::string, OpDef> t;
  auto put = [&t](OpDef op) {
    std::string name = op.name;
    t.emplace(std::move(name), std::move(op));
  };
  put(make_matmul());
  put(make_linear());
  put(make_binary(
      "add", [](double a, double b) { return a + b; },
      [](double, double, double g) { return std::pair{g, g}; }));
  put(make_binary(
      "sub", [](double a, double b) { return a - b; },
      [](double, double, double g) { return std::pair{g, -g}; }));
  put(make_binary(
      "mul", [](double a, double b) { return a * b; },
      [](double a, double b, double g) { return std::pair{g * b, g * a}; }));
  put(make_unary(
      "scale", [](double x, const Attrs& a) { return x * a.get_double("factor"); },
      [](double, double, const Attrs& a) { return a.get_double("factor"); }));
  put(make_unary(
      "sigmoid", [](double x, const Attrs&) { return sigmoid_of(x); },
      [](double, double y, const Attrs&) { return y * (1.0 - y); }));
  put(make_unary(
      "swish", [](double x, const Attrs&) { return x * sigmoid_of(x); },
      [](double x, double y, const Attrs&) {
        const double s = sigmoid_of(x);
        return s + y * (1.0 - s);
      }));
  put(make_unary(
      "relu", [](double x, const Attrs&) { return x > 0 ? x : 0.0; },
      [](double x, double, const Attrs&) { return x > 0 ? 1.0 : 0.0; }));
  put(make_glu());
  put(make_softmax());
  put(make_log_softmax());
  put(make_layer_norm());
  put(make_depthwise_conv1d());
  put(make_conv1d());
  put(make_embedding());
  put(make_concat());
  put(make_masked_fill());
  put(make_attention());
  put(make_reduce("sum", false));
  put(make_reduce("mean", true));
  put(make_cross_entropy());
  return t;
}

const std::unordered_map<std::string, OpDef>& table() {
  static const auto t = build_table();
  return t;
}

}  // namespace

const OpDef& find_op(std::string_view name) {
  auto it = table().find(std::string(name));
  require(it != table().end(), ErrorKind::kInvalidArgument,
          "unknown operator '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> op_names() {
  std::vector<std::string> names;
  for (const auto& [name, op] : table()) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

Tensor attention_weights(const Tensor& q, const Tensor& k, std::int64_t heads,
                         bool causal, std::int64_t key_len) {
  const Tensor* in[] = {&q, &k};
  Attrs attrs{{"heads", heads}, {"causal", causal}, {"key_len", key_len}};
  return weights_impl(q, k, attention_shape(in, attrs));
}

}  // namespace hec::num
