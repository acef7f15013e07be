#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "hec/decode_eval/beam_search.hpp"
#include "hec/decode_eval/experiment.hpp"
#include "hec/decode_eval/metrics.hpp"
#include "hec/decode_eval/recognizer.hpp"
#include "hec/error.hpp"
#include "hec/train/ctc.hpp"
#include "oracles.hpp"

using namespace hec;
using namespace hec::eval;
using num::Shape;
using num::Tensor;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor log_softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t t = 0; t < logits.dim(0); ++t) {
    double z = kNegInf;
    for (std::size_t k = 0; k < logits.dim(1); ++k) z = oracle::log_add(z, logits.at(t, k));
    for (std::size_t k = 0; k < logits.dim(1); ++k) out.at(t, k) -= z;
  }
  return out;
}

// Fixed next-token table keyed by prefix length; eos optionally forbidden.
class TableScorer : public AttentionScorer {
 public:
  TableScorer(std::size_t vocab, bool allow_eos) : vocab_(vocab), allow_eos_(allow_eos) {}
  struct S : State {
    std::size_t fed = 0;
  };
  std::unique_ptr<State> start() const override { return std::make_unique<S>(); }
  std::vector<double> step(State& state, TokenId) const override {
    auto& s = static_cast<S&>(state);
    ++s.fed;
    std::vector<double> lp(vocab_, std::log(1.0 / static_cast<double>(vocab_ - 1)));
    lp[corpus::kBlank] = kNegInf;
    if (!allow_eos_) {
      lp[corpus::kEos] = kNegInf;
    }
    return lp;
  }
  std::unique_ptr<State> clone(const State& state) const override {
    return std::make_unique<S>(static_cast<const S&>(state));
  }
  std::size_t vocab() const override { return vocab_; }

 private:
  std::size_t vocab_;
  bool allow_eos_;
};

// Greedy joint decoding written out directly.
TokenSeq greedy_joint(const second_pass::AEDModel& m, const Tensor& features, const TokenSeq& onebest,
                      std::size_t max_len) {
  const auto enc = second_pass::encode(m, features, onebest);
  CtcPrefixScorer ctc(enc.ctc_log_probs);
  auto state = second_pass::initial_state(m);
  auto cstate = ctc.initial();
  Tensor lp = second_pass::decoder_step(m, enc, state, corpus::kSos);
  double att = 0.0;
  TokenSeq out;
  for (;;) {
    TokenId best = corpus::kEos;
    double best_score = kNegInf, best_att = 0;
    CtcPrefixState best_state;
    std::vector<TokenId> cands{corpus::kEos};
    if (out.size() < max_len) {
      for (std::size_t c = corpus::kFirstSymbol; c < m.config.vocab; ++c) cands.push_back(static_cast<TokenId>(c));
    }
    for (TokenId c : cands) {
      auto cs = ctc.extend(cstate, c);
      const double a = att + lp[static_cast<std::size_t>(c)];
      const double j = 0.3 * cs.psi + 0.7 * a;
      if (j > best_score) {
        best_score = j;
        best = c;
        best_att = a;
        best_state = cs;
      }
    }
    if (best == corpus::kEos) return out;
    out.push_back(best);
    att = best_att;
    cstate = best_state;
    lp = second_pass::decoder_step(m, enc, state, best);
  }
}

ExperimentConfig tiny_experiment(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.seeds = {4};
  c.corpus.train_count = 24;
  c.corpus.test_count = 4;
  c.corpus.extra_count = 6;
  c.corpus.lm_count = 50;
  c.first_train.epochs = 1;
  c.second_train.epochs = 1;
  c.second_train.batch_size = 4;
  c.beam = 2;
  return c;
}

}  // namespace

TEST_CASE("ctc prefix score examples") {
  CHECK(ctc_prefix_score(Tensor(Shape{1, 5}, std::log(0.2)), {}, 4) == doctest::Approx(std::log(0.2)));
  const Tensor two = log_softmax_rows(Tensor(Shape{2, 2}, 0.0));
  // Vocabulary {blank, a}: reuse column 1 as the label.
  CHECK(ctc_prefix_score(log_softmax_rows(Tensor(Shape{1, 2}, 0.0)), {}, 1) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(ctc_prefix_score(two, {}, 1) == doctest::Approx(std::log(0.75)).epsilon(1e-14));
  CHECK_THROWS_AS(ctc_prefix_score(two, {}, corpus::kBlank), Error);
  CHECK_THROWS_AS(ctc_prefix_score(two, {}, 7), Error);
}

TEST_CASE("closed prefix score equals the negative ctc loss") {
  std::mt19937_64 rng(12);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 1 + trial % 6, V = 6;
    const Tensor logits = Tensor::uniform(Shape{T, V}, 2.5, rng);
    TokenSeq target(trial % 4);
    for (auto& t : target) t = 4 + static_cast<TokenId>(rng() % 2);
    if (train::ctc_min_frames(target) > T) continue;
    const Tensor lp = log_softmax_rows(logits);
    CtcPrefixScorer scorer(lp);
    auto s = scorer.initial();
    double total = 0.0;
    for (TokenId t : target) {
      const auto next = scorer.extend(s, t);
      total += next.psi - s.psi;
      s = next;
    }
    total += scorer.extend(s, corpus::kEos).psi - s.psi;
    CHECK(std::abs(total + train::ctc_loss_value(logits, target)) <= 1e-8);
    CHECK(std::abs(total + oracle::brute_ctc_loss(logits, target)) <= 1e-8);
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("prefix scores never increase along a prefix") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor lp = log_softmax_rows(Tensor::uniform(Shape{5, 6}, 3.0, rng));
    CtcPrefixScorer scorer(lp);
    auto s = scorer.initial();
    for (int i = 0; i < 4; ++i) {
      const auto next = scorer.extend(s, 4 + static_cast<TokenId>(rng() % 2));
      CHECK(next.psi <= s.psi + 1e-12);
      CHECK(scorer.extend(next, corpus::kEos).psi <= next.psi + 1e-12);
      s = next;
    }
  }
}

TEST_CASE("exhaustive joint beam equals brute-force argmax") {
  const auto r = oracle::joint_search_oracle_suite(60, 3);
  CAPTURE(r.detail);
  CHECK(r.instances == 60);
  CHECK(r.passed());
}

TEST_CASE("beam one is greedy joint decoding") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = static_cast<second_pass::Structure>(trial % 3);
    const auto m = oracle::tiny_aed(3, s, 100 + trial);
    const Tensor f = Tensor::uniform(Shape{8 + static_cast<std::size_t>(trial) % 12, 4}, 2.0, rng);
    const TokenSeq onebest = s == second_pass::Structure::kNone ? TokenSeq{} : TokenSeq{4, 5};
    BeamOptions opts;
    opts.beam = 1;
    opts.max_len = 4;
    const auto got = recognize(m, f, onebest, opts);
    CHECK(got.tokens == greedy_joint(m, f, onebest, 4));
    CHECK(got.joint == 0.3 * got.ctc + 0.7 * got.att);
    CHECK(got.finished);
  }
}

TEST_CASE("search bookkeeping") {
  const auto m = oracle::tiny_aed(2, second_pass::Structure::kPca, 7);
  std::mt19937_64 rng(15);
  const Tensor f = Tensor::uniform(Shape{20, 4}, 2.0, rng);
  const auto enc = second_pass::encode(m, f, {4});
  SUBCASE("default max length is twice the encoder length") {
    TableScorer no_eos(m.config.vocab, false);
    BeamOptions opts;
    opts.beam = 2;
    const auto r = joint_beam_search(no_eos, enc.ctc_log_probs, opts);
    CHECK(r.truncated);
    CHECK(!r.finished);
    CHECK(r.tokens.size() <= 2 * enc.ctc_log_probs.dim(0));
  }
  SUBCASE("finished results are not truncated") {
    BeamOptions opts;
    opts.beam = 3;
    const auto r = recognize(m, f, {4}, opts);
    CHECK(r.finished);
    CHECK(!r.truncated);
    CHECK(r.joint == 0.3 * r.ctc + 0.7 * r.att);
    opts.length_normalize = true;
    CHECK(recognize(m, f, {4}, opts).finished);
  }
  SUBCASE("beam zero is rejected") {
    BeamOptions opts;
    opts.beam = 0;
    CHECK_THROWS_AS(recognize(m, f, {4}, opts), Error);
  }
}

TEST_CASE("edit distance") {
  using V = std::vector<std::int64_t>;
  CHECK(edit_distance(V{1, 2, 3}, V{1, 2, 3}) == EditCounts{0, 0, 0, 3});
  CHECK(edit_distance(V{1, 2, 3}, V{1, 9, 3}) == EditCounts{1, 0, 0, 3});
  CHECK(edit_distance(V{1, 2}, V{}) == EditCounts{0, 2, 0, 2});
  CHECK(edit_distance(V{}, V{1}) == EditCounts{0, 0, 1, 0});
  // Two substitutions and one insertion plus one deletion cost the same.
  CHECK(edit_distance(V{1, 2}, V{2, 1}) == EditCounts{2, 0, 0, 2});
  CHECK(edit_distance(std::string("ab c"), std::string("ab")) == EditCounts{0, 2, 0, 4});
}

TEST_CASE("word error rate and relative reduction") {
  CHECK(wer({{"u", "abc"}}, {{"u", "abc"}}) == 0.0);
  CHECK(wer({{"u", "abc"}}, {{"u", "axc"}}) == doctest::Approx(100.0 / 3));
  CHECK(wer({{"u", "abcde"}, {"v", "fghij"}}, {{"u", ""}, {"v", ""}}) == 100.0);
  CHECK_THROWS_AS(wer({{"u", "a"}}, {{"v", "a"}}), Error);
  CHECK_THROWS_AS(wer({{"u", "a"}}, {}), Error);
  CHECK(werr(8.37, 6.86) == 18.0);
  CHECK(werr(10.31, 9.24) == 10.4);
  CHECK(werr(5.0, 5.0) == 0.0);
  CHECK_THROWS_AS(werr(0.0, 1.0), Error);
  for (double b : {3.0, 8.37, 12.5}) {
    for (double r : {-5.0, 0.0, 10.4, 18.0}) CHECK(werr(b, b * (1 - r / 100)) == doctest::Approx(r));
  }
}

TEST_CASE("wer is invariant under relabelling") {
  std::mt19937_64 rng(16);
  const std::string from = "abcd ", to = "qxzy-";
  for (int trial = 0; trial < 40; ++trial) {
    std::map<std::string, std::string> refs, hyps, refs2, hyps2;
    for (int u = 0; u < 3; ++u) {
      std::string r, h;
      for (int i = 0; i < 6; ++i) r += from[rng() % 5];
      for (int i = 0; i < 5; ++i) h += from[rng() % 5];
      const auto map = [&](std::string s) {
        for (auto& c : s) c = to[from.find(c)];
        return s;
      };
      const auto id = "u" + std::to_string(u);
      refs[id] = r;
      hyps[id] = h;
      refs2[id] = map(r);
      hyps2[id] = map(h);
    }
    CHECK(wer(refs, hyps) == wer(refs2, hyps2));
  }
}

TEST_CASE("hypothesis files and entity recall") {
  const Hypotheses hyps{{"a", -1.25, "ab cd", false}, {"b", 0.1, "", false}};
  const auto path = std::filesystem::temp_directory_path() / "hec_hyps.tsv";
  write_hypotheses(path, hyps);
  const auto back = read_hypotheses(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].score == -1.25);
  CHECK(back[1].text.empty());
  CHECK(texts(back) == texts(hyps));
  CHECK(entity_recall({{"a", "xy kl"}, {"b", "kl mn"}}, {{"a", "xy kl"}, {"b", "kl"}}, {"kl", "mn"}) ==
        doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(entity_recall({{"a", "xy"}}, {{"a", "xy"}}, {"kl"}), Error);
}

TEST_CASE("experiment config round trip") {
  auto c = tiny_experiment(ExperimentKind::kRobustness);
  c.seeds = {3, 9};
  c.aed.set("embed", "16");
  const auto kv = c.to_key_values();
  const auto back = ExperimentConfig::from_key_values(kv);
  CHECK(back.to_key_values().to_string() == kv.to_string());
  CHECK(back.seeds == std::vector<std::uint64_t>{3, 9});
  CHECK(back.corpus.train_count == 24);
  KeyValues bad;
  bad.set("kind", "lattice");
  CHECK_THROWS_AS(ExperimentConfig::from_key_values(bad), Error);
}

TEST_SUITE("experiment runner") {
  TEST_CASE("combination report arithmetic and determinism") {
    const auto c = tiny_experiment(ExperimentKind::kCombination);
    const auto a = run_experiment(c);
    CHECK(a.rows.size() == 4);
    CHECK(a.rows.back().name == "avg");
    for (const auto& r : a.rows) {
      CHECK(werr(r.values[0], r.values[2]) == std::round(r.values[4] * 10) / 10);
      CHECK(werr(r.values[1], r.values[2]) == std::round(r.values[5] * 10) / 10);
    }
    const auto b = run_experiment(c);
    CHECK(a.tsv() == b.tsv());
    CHECK(a.table() == b.table());
    CHECK(a.table().find("werr-vs-hybrid") != std::string::npos);
    const auto parsed = ExperimentReport::parse_tsv(a.tsv());
    CHECK(parsed.tsv() == a.tsv());
    CHECK(parsed.seeds == a.seeds);
    CHECK_THROWS_AS(ExperimentReport::parse_tsv("seed\tset\tx\nmean\tavg\t1.5x\n"), Error);
  }
  TEST_CASE("robustness and biasing reports") {
    const auto r = run_experiment(tiny_experiment(ExperimentKind::kRobustness));
    CHECK(r.columns == std::vector<std::string>{"old-hybrid", "new-hybrid", "hec-old", "hec-new"});
    CHECK(r.rows.size() == 4);
    const auto b = run_experiment(tiny_experiment(ExperimentKind::kBiasing));
    CHECK(b.rows.front().name == "entity-recall");
    for (double v : b.rows.front().values) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }
  }
  TEST_CASE("missing corpus directory is reported with its path") {
    auto c = tiny_experiment(ExperimentKind::kCombination);
    c.corpus_dir = "/nonexistent/hec-corpus";
    try {
      run_experiment(c);
      FAIL("missing corpus accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNotFound);
      CHECK(std::string(e.what()).find("/nonexistent/hec-corpus") != std::string::npos);
    }
  }
  TEST_CASE("experiments read a generated corpus directory") {
    auto spec = tiny_experiment(ExperimentKind::kCombination).corpus;
    const auto dir = std::filesystem::temp_directory_path() / "hec_experiment_corpus";
    std::filesystem::remove_all(dir);
    corpus::write_corpus(dir, spec, corpus::generate_corpus(spec));
    auto c = tiny_experiment(ExperimentKind::kBiasing);
    c.corpus_dir = dir;
    const auto r = run_experiment(c);
    CHECK(r.rows.size() == 4);
    std::filesystem::remove(dir / "entity.tsv");
    try {
      run_experiment(c);
      FAIL("missing split accepted");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNotFound);
      CHECK(std::string(e.what()).find("entity.tsv") != std::string::npos);
    }
  }
}
