#include "hec/first_pass/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hec/error.hpp"

namespace hec::first_pass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Prefix {
  double blank = kNegInf;      // ends in blank
  double non_blank = kNegInf;  // ends in its last label
  double lm = 0.0;
  LmContext ctx;

  double acoustic() const { return log_add(blank, non_blank); }
};

bool better_key(double sa, const TokenSeq& a, double sb, const TokenSeq& b) {
  if (sa != sb) return sa > sb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace

bool better_entry(const NBestEntry& a, const NBestEntry& b) {
  return better_key(a.combined, a.tokens, b.combined, b.tokens);
}

std::vector<NBestEntry> prefix_beam_search(const num::Tensor& log_probs, const LmScorer& lm,
                                           const PrefixSearchOptions& opts,
                                           const LmContext& start) {
  require(log_probs.rank() == 2, ErrorKind::kShape, "log-probs must be frames x tokens");
  require(opts.beam >= 1 && opts.nbest >= 1, ErrorKind::kInvalidArgument,
          "beam and n must be >= 1");
  require(opts.beam >= opts.nbest, ErrorKind::kInvalidArgument,
          "beam must be >= n to return n distinct hypotheses");
  const std::size_t T = log_probs.dim(0);
  const auto V = static_cast<TokenId>(log_probs.dim(1));
  require(V > corpus::kFirstSymbol, ErrorKind::kShape, "log-probs carry no symbol columns");

  std::map<TokenSeq, Prefix> beam;
  beam[{}] = Prefix{0.0, kNegInf, 0.0, start};

  for (std::size_t t = 0; t < T; ++t) {
    const double* x = log_probs.ptr() + t * static_cast<std::size_t>(V);
    std::map<TokenSeq, Prefix> next;
    for (const auto& [seq, p] : beam) {
      const double total = p.acoustic();
      {
        auto& same = next.try_emplace(seq, Prefix{kNegInf, kNegInf, p.lm, p.ctx}).first->second;
        same.blank = log_add(same.blank, total + x[corpus::kBlank]);
        if (!seq.empty()) same.non_blank = log_add(same.non_blank, p.non_blank + x[seq.back()]);
      }
      for (TokenId c = corpus::kFirstSymbol; c < V; ++c) {
        if (x[c] == kNegInf) continue;
        TokenSeq ext = seq;
        ext.push_back(c);
        auto it = next.find(ext);
        if (it == next.end()) {
          LmContext ctx;
          const double s = lm.step(p.ctx, c, ctx);
          it = next.emplace(std::move(ext), Prefix{kNegInf, kNegInf, p.lm + s, std::move(ctx)}).first;
        }
        const double from = (!seq.empty() && seq.back() == c) ? p.blank : total;
        it->second.non_blank = log_add(it->second.non_blank, from + x[c]);
      }
    }
    if (next.size() > opts.beam) {
      std::vector<std::pair<double, const TokenSeq*>> order;
      order.reserve(next.size());
      for (const auto& [seq, p] : next) order.emplace_back(p.acoustic() + opts.lm_scale * p.lm, &seq);
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(opts.beam) - 1,
                       order.end(), [](const auto& a, const auto& b) {
                         return better_key(a.first, *a.second, b.first, *b.second);
                       });
      std::map<TokenSeq, Prefix> kept;
      for (std::size_t i = 0; i < opts.beam; ++i) {
        auto node = next.extract(*order[i].second);
        kept.insert(std::move(node));
      }
      next = std::move(kept);
    }
    beam = std::move(next);
  }

  std::vector<NBestEntry> out;
  for (const auto& [seq, p] : beam) {
    NBestEntry e;
    e.tokens = seq;
    e.acoustic = p.acoustic();
    if (e.acoustic == kNegInf) continue;
    e.lm = p.lm + (opts.close ? lm.finish(p.ctx) : 0.0);
    e.combined = e.acoustic + opts.lm_scale * e.lm;
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), better_entry);
  if (out.size() > opts.nbest) out.resize(opts.nbest);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i + 1);
  return out;
}

}  // namespace hec::first_pass
