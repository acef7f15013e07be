#include "hec/decode_eval/ctc_prefix.hpp"

#include <cmath>
#include <limits>

#include "hec/error.hpp"

namespace hec::eval {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

CtcPrefixScorer::CtcPrefixScorer(const num::Tensor& log_probs)
    : lp_(log_probs), T_(log_probs.rank() == 2 ? log_probs.dim(0) : 0),
      V_(log_probs.rank() == 2 ? log_probs.dim(1) : 0) {
  require(T_ >= 1 && V_ >= 2, ErrorKind::kShape, "CTC log-probs must be T' x V with T' >= 1");
}

CtcPrefixState CtcPrefixScorer::initial() const {
  CtcPrefixState s;
  s.non_blank.assign(T_, kNegInf);
  s.blank.assign(T_, kNegInf);
  double acc = 0.0;
  for (std::size_t t = 0; t < T_; ++t) {
    acc += lp_[t * V_ + corpus::kBlank];
    s.blank[t] = acc;
  }
  s.psi = 0.0;
  return s;
}

CtcPrefixState CtcPrefixScorer::extend(const CtcPrefixState& g, TokenId c) const {
  require(c != corpus::kBlank, ErrorKind::kInvalidArgument, "blank is not an emittable label");
  require(c >= 0 && static_cast<std::size_t>(c) < V_, ErrorKind::kInvalidArgument,
          "label " + std::to_string(c) + " is outside the CTC vocabulary");
  CtcPrefixState h;
  h.prefix = g.prefix;
  h.prefix.push_back(c);
  if (c == corpus::kEos) {
    h.non_blank = g.non_blank;
    h.blank = g.blank;
    h.psi = log_add(g.non_blank[T_ - 1], g.blank[T_ - 1]);
    return h;
  }
  const auto x = [&](std::size_t t, std::size_t k) { return lp_[t * V_ + k]; };
  const auto ck = static_cast<std::size_t>(c);
  const bool repeat = !g.prefix.empty() && g.prefix.back() == c;
  h.non_blank.assign(T_, kNegInf);
  h.blank.assign(T_, kNegInf);
  h.non_blank[0] = g.prefix.empty() ? x(0, ck) : kNegInf;
  double psi = h.non_blank[0];
  for (std::size_t t = 1; t < T_; ++t) {
    const double phi = repeat ? g.blank[t - 1] : log_add(g.blank[t - 1], g.non_blank[t - 1]);
    h.non_blank[t] = log_add(h.non_blank[t - 1], phi) + x(t, ck);
    h.blank[t] = log_add(h.blank[t - 1], h.non_blank[t - 1]) + x(t, corpus::kBlank);
    psi = log_add(psi, phi + x(t, ck));
  }
  h.psi = psi;
  return h;
}

double ctc_prefix_score(const num::Tensor& log_probs, const TokenSeq& prefix, TokenId next) {
  CtcPrefixScorer scorer(log_probs);
  auto s = scorer.initial();
  for (TokenId t : prefix) {
    require(t != corpus::kEos, ErrorKind::kInvalidArgument, "prefix already closed by eos");
    s = scorer.extend(s, t);
  }
  const double before = s.psi;
  return scorer.extend(s, next).psi - before;
}

}  // namespace hec::eval
