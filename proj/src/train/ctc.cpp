#include "hec/train/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hec/error.hpp"

namespace hec::train {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void log_softmax(const num::Tensor& x, num::Tensor& out) {
  const std::size_t T = x.dim(0), V = x.dim(1);
  out = num::Tensor(x.shape());
  for (std::size_t t = 0; t < T; ++t) {
    const double* r = x.ptr() + t * V;
    const double m = *std::max_element(r, r + V);
    double s = 0.0;
    for (std::size_t k = 0; k < V; ++k) s += std::exp(r[k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < V; ++k) out[t * V + k] = r[k] - lse;
  }
}

// Blank-interleaved label sequence: blank, l1, blank, l2, ..., blank.
std::vector<std::int64_t> extend(const std::vector<std::int64_t>& target) {
  std::vector<std::int64_t> ext(2 * target.size() + 1, 0);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  return ext;
}

bool can_skip(const std::vector<std::int64_t>& ext, std::size_t s) {
  return s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2];
}

void validate(const num::Tensor& logits, const std::vector<std::int64_t>& target) {
  require(logits.rank() == 2, ErrorKind::kShape, "ctc_loss expects logits [T,V]");
  const auto V = static_cast<std::int64_t>(logits.dim(1));
  for (auto l : target) {
    require(l > 0 && l < V, ErrorKind::kInvalidArgument,
            "ctc_loss target id " + std::to_string(l) + " is blank or outside [1," +
                std::to_string(V) + ")");
  }
  const std::size_t need = ctc_min_frames(target);
  require(need <= logits.dim(0), ErrorKind::kInfeasible,
          "ctc target needs " + std::to_string(need) + " frames but only " +
              std::to_string(logits.dim(0)) + " are available");
}

// alpha[t,s]: log-prob of prefixes of length t+1 ending in state s,
// including the emission at t. beta[t,s]: log-prob of emitting frames
// t+1..T-1 from state s (emission at t excluded).
void forward_backward(const num::Tensor& logp, const std::vector<std::int64_t>& ext,
                      num::Tensor& alpha, num::Tensor& beta) {
  const std::size_t T = logp.dim(0), V = logp.dim(1), S = ext.size();
  alpha = num::Tensor(num::Shape{T, S}, kNegInf);
  beta = num::Tensor(num::Shape{T, S}, kNegInf);
  auto lp = [&](std::size_t t, std::size_t s) {
    return logp[t * V + static_cast<std::size_t>(ext[s])];
  };
  alpha[0] = lp(0, 0);
  if (S > 1) alpha[1] = lp(0, 1);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(ext, s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + lp(t, s);
    }
  }
  beta[(T - 1) * S + S - 1] = 0.0;
  if (S > 1) beta[(T - 1) * S + S - 2] = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s] + lp(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1] + lp(t + 1, s + 1));
      if (s + 2 < S && can_skip(ext, s + 2)) {
        b = log_add(b, beta[(t + 1) * S + s + 2] + lp(t + 1, s + 2));
      }
      beta[t * S + s] = b;
    }
  }
}

double total_log_prob(const num::Tensor& alpha, std::size_t S) {
  const std::size_t T = alpha.dim(0);
  double p = alpha[(T - 1) * S + S - 1];
  if (S > 1) p = log_add(p, alpha[(T - 1) * S + S - 2]);
  return p;
}

num::OpDef make_ctc() {
  num::OpDef op;
  op.name = "ctc_loss";
  op.forward = [](std::span<const num::Tensor* const> in, const num::Attrs& attrs) {
    require(in.size() == 1, ErrorKind::kInvalidArgument, "ctc_loss expects one input");
    const auto& target = attrs.get_ints("targets");
    validate(*in[0], target);
    num::Tensor logp, alpha, beta;
    log_softmax(*in[0], logp);
    const auto ext = extend(target);
    forward_backward(logp, ext, alpha, beta);
    const double lp = total_log_prob(alpha, ext.size());
    require(std::isfinite(lp), ErrorKind::kNumeric, "ctc_loss: target has zero probability");
    std::vector<num::Tensor> saved;
    saved.push_back(std::move(logp));
    saved.push_back(std::move(alpha));
    saved.push_back(std::move(beta));
    return num::ForwardResult{num::Tensor::scalar(-lp), std::move(saved)};
  };
  op.backward = [](const num::OpContext& c, const num::Tensor& g,
                   std::span<num::Tensor* const> grads) {
    if (!grads[0]) return;
    const auto ext = extend(c.attrs.get_ints("targets"));
    const num::Tensor& logp = c.saved[0];
    const num::Tensor& alpha = c.saved[1];
    const num::Tensor& beta = c.saved[2];
    const std::size_t T = logp.dim(0), V = logp.dim(1), S = ext.size();
    const double lp = -c.output[0];
    num::Tensor& gx = *grads[0];
    std::vector<double> occ(V);
    for (std::size_t t = 0; t < T; ++t) {
      std::fill(occ.begin(), occ.end(), kNegInf);
      for (std::size_t s = 0; s < S; ++s) {
        const auto k = static_cast<std::size_t>(ext[s]);
        occ[k] = log_add(occ[k], alpha[t * S + s] + beta[t * S + s]);
      }
      for (std::size_t k = 0; k < V; ++k) {
        const double post = occ[k] == kNegInf ? 0.0 : std::exp(occ[k] - lp);
        gx[t * V + k] += g[0] * (std::exp(logp[t * V + k]) - post);
      }
    }
  };
  return op;
}

}  // namespace

std::size_t ctc_min_frames(const std::vector<std::int64_t>& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

const num::OpDef& ctc_op() {
  static const num::OpDef op = make_ctc();
  return op;
}

num::Var ctc_loss(num::Var logits, const std::vector<std::int64_t>& target) {
  return num::Var{logits.graph,
                  logits.graph->apply(ctc_op(), {logits.id}, num::Attrs{{"targets", target}})};
}

double ctc_loss_value(const num::Tensor& logits, const std::vector<std::int64_t>& target) {
  std::vector<const num::Tensor*> in{&logits};
  return ctc_op().forward(in, num::Attrs{{"targets", target}}).output[0];
}

}  // namespace hec::train
