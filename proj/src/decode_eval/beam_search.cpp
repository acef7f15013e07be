#include "hec/decode_eval/beam_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hec/error.hpp"

namespace hec::eval {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct AedState : AttentionScorer::State {
  second_pass::DecoderState dec;
};

struct Hyp {
  TokenSeq tokens;
  double att = 0.0;
  double joint = 0.0;
  CtcPrefixState ctc;
  std::unique_ptr<AttentionScorer::State> state;
  std::vector<double> next;  // attention log-probs of the next token
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double att;
  double joint;
  CtcPrefixState ctc;
};

// a ranks before b: higher score, then shorter, then lexicographic ids.
bool ranks_before(double sa, const TokenSeq& a, double sb, const TokenSeq& b) {
  if (sa != sb) return sa > sb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

double final_score(const BeamResult& r, bool normalize) {
  if (!normalize) return r.joint;
  return r.joint / static_cast<double>(r.tokens.size() + 1);
}

}  // namespace

std::unique_ptr<AttentionScorer::State> AedAttentionScorer::start() const {
  auto s = std::make_unique<AedState>();
  s->dec = second_pass::initial_state(model_);
  return s;
}

std::vector<double> AedAttentionScorer::step(State& state, TokenId token) const {
  auto& s = static_cast<AedState&>(state);
  const num::Tensor lp = second_pass::decoder_step(model_, enc_, s.dec, token);
  const auto d = lp.data();
  return std::vector<double>(d.begin(), d.end());
}

std::unique_ptr<AttentionScorer::State> AedAttentionScorer::clone(const State& state) const {
  return std::make_unique<AedState>(static_cast<const AedState&>(state));
}

BeamResult joint_beam_search(const AttentionScorer& att, const num::Tensor& ctc_log_probs,
                             const BeamOptions& opts) {
  require(opts.beam >= 1, ErrorKind::kInvalidArgument, "beam must be at least 1");
  CtcPrefixScorer ctc(ctc_log_probs);
  const std::size_t V = att.vocab();
  require(ctc_log_probs.dim(1) == V, ErrorKind::kShape,
          "CTC and attention vocabularies differ");
  const std::size_t max_len = opts.max_len > 0 ? opts.max_len : 2 * ctc.frames();

  std::vector<Hyp> running;
  {
    Hyp h;
    h.ctc = ctc.initial();
    h.state = att.start();
    h.next = att.step(*h.state, corpus::kSos);
    running.push_back(std::move(h));
  }
  std::vector<BeamResult> ended;
  BeamResult unfinished;
  unfinished.finished = false;
  unfinished.truncated = true;
  unfinished.joint = kNegInf;
  const auto best_ended = [&]() -> const BeamResult* {
    const BeamResult* best = nullptr;
    for (const auto& r : ended) {
      if (!best || ranks_before(final_score(r, opts.length_normalize), r.tokens,
                                final_score(*best, opts.length_normalize), best->tokens)) {
        best = &r;
      }
    }
    return best;
  };

  for (std::size_t len = 0; len <= max_len && !running.empty(); ++len) {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < running.size(); ++i) {
      const Hyp& h = running[i];
      const auto add = [&](TokenId c) {
        Candidate cand{i, c, h.att + h.next[static_cast<std::size_t>(c)], 0.0, ctc.extend(h.ctc, c)};
        cand.joint = kCtcWeight * cand.ctc.psi + kAttWeight * cand.att;
        cands.push_back(std::move(cand));
      };
      add(corpus::kEos);
      if (len < max_len) {
        for (std::size_t c = corpus::kFirstSymbol; c < V; ++c) add(static_cast<TokenId>(c));
      }
    }
    // Candidate token sequences share the length len + 1 (eos counted).
    std::vector<TokenSeq> seqs(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      seqs[i] = running[cands[i].parent].tokens;
      seqs[i].push_back(cands[i].token);
    }
    std::vector<std::size_t> order(cands.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t keep = std::min(opts.beam, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return ranks_before(cands[a].joint, seqs[a], cands[b].joint, seqs[b]);
                      });
    std::vector<Hyp> next;
    for (std::size_t k = 0; k < keep; ++k) {
      Candidate& c = cands[order[k]];
      if (c.joint == kNegInf) continue;
      const Hyp& parent = running[c.parent];
      if (c.token == corpus::kEos) {
        ended.push_back({parent.tokens, c.att, c.ctc.psi, c.joint, true, false});
        continue;
      }
      Hyp h;
      h.tokens = std::move(seqs[order[k]]);
      h.att = c.att;
      h.joint = c.joint;
      h.ctc = std::move(c.ctc);
      h.state = att.clone(*parent.state);
      h.next = att.step(*h.state, c.token);
      if (unfinished.joint == kNegInf ||
          ranks_before(h.joint, h.tokens, unfinished.joint, unfinished.tokens)) {
        unfinished.tokens = h.tokens;
        unfinished.att = h.att;
        unfinished.ctc = h.ctc.psi;
        unfinished.joint = h.joint;
      }
      next.push_back(std::move(h));
    }
    running = std::move(next);
    if (!opts.length_normalize && !running.empty()) {
      const BeamResult* best = best_ended();
      double top = kNegInf;
      for (const auto& h : running) top = std::max(top, h.joint);
      if (best && best->joint >= top) break;
    }
  }

  if (const BeamResult* best = best_ended()) return *best;
  return unfinished;
}

BeamResult recognize(const second_pass::AEDModel& model, const num::Tensor& features,
                     const TokenSeq& onebest, const BeamOptions& opts) {
  const auto enc = second_pass::encode(model, features, onebest);
  AedAttentionScorer scorer(model, enc);
  return joint_beam_search(scorer, enc.ctc_log_probs, opts);
}

}  // namespace hec::eval
