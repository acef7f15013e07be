#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "hec/error.hpp"
#include "hec/first_pass/nbest_cache.hpp"
#include "hec/train/trainer.hpp"
#include "oracles.hpp"

using namespace hec;
using namespace hec::first_pass;
using corpus::kBlank;
using corpus::kEos;
using oracle::exhaustive_first_pass;
using oracle::log_add;
using oracle::random_lm;
using oracle::random_log_probs;
using oracle::sentence_score;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr TokenId A = 4, B = 5, C = 6;

TokenSeq random_seq(std::mt19937_64& rng, const std::vector<TokenId>& symbols, std::size_t max_len) {
  TokenSeq s(std::uniform_int_distribution<std::size_t>(0, max_len)(rng));
  for (auto& t : s) t = symbols[std::uniform_int_distribution<std::size_t>(0, symbols.size() - 1)(rng)];
  return s;
}

num::Tensor energy_signal(const std::vector<std::pair<bool, std::size_t>>& runs) {
  std::size_t T = 0;
  for (auto& r : runs) T += r.second;
  num::Tensor x(num::Shape{T, 4}, 0.0);
  std::size_t t = 0;
  for (auto& [speech, n] : runs) {
    for (std::size_t i = 0; i < n; ++i, ++t) {
      for (std::size_t d = 0; d < 4; ++d) x.at(t, d) = speech ? 1.0 : 0.01;
    }
  }
  return x;
}

}  // namespace

TEST_CASE("add-k bigram hand counts") {
  const auto lm = NGramLM::train({{A, B, A}}, 2, 1.0, {A, B});
  const TokenSeq h{A};
  CHECK(lm.prob(h, B) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(lm.prob(h, kEos) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(lm.prob(h, A) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(lm.prob({}, A) == doctest::Approx(2.0 / 4.0).epsilon(1e-15));  // after <s>: c=1
}

TEST_CASE("unigram counts the end symbol") {
  const auto lm = NGramLM::train({{A, A}}, 1, 1e-12, {A});
  CHECK(lm.prob({}, A) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(lm.prob({}, kEos) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("LM distributions normalize for random contexts") {
  std::mt19937_64 rng(3);
  const std::vector<TokenId> sym{A, B, C};
  for (int order = 1; order <= 4; ++order) {
    const auto lm = random_lm(rng, order, sym);
    for (int i = 0; i < 50; ++i) {
      const auto h = random_seq(rng, sym, 5);
      double total = 0.0;
      for (TokenId w : lm.vocabulary()) total += lm.prob(h, w);
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("LM rejects bad input and round-trips through a file") {
  CHECK_THROWS_AS(NGramLM::train({}, 2, 1.0, {A}), Error);
  CHECK_THROWS_AS(NGramLM::train({{A}}, 0, 1.0, {A}), Error);
  CHECK_THROWS_AS(NGramLM::train({{A}}, 2, 0.0, {A}), Error);
  CHECK_THROWS_AS(NGramLM::train({{A, B}}, 2, 1.0, {A}), Error);
  std::mt19937_64 rng(4);
  const auto lm = random_lm(rng, 3, {A, B, C});
  const auto path = std::filesystem::temp_directory_path() / "hec_lm_roundtrip.txt";
  lm.save(path);
  CHECK(NGramLM::load(path) == lm);
  CHECK_THROWS_AS(lm.prob({}, 99), Error);
}

TEST_CASE("bias view with zero boost is the plain LM") {
  std::mt19937_64 rng(5);
  const std::vector<TokenId> sym{A, B, C};
  const auto lm = random_lm(rng, 3, sym);
  const LmScorer plain(lm);
  const auto biased = bias_lm(lm, {{A, B}, {C}}, 0.0);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_seq(rng, sym, 6);
    CHECK(sentence_score(biased, s) == sentence_score(plain, s));
  }
}

TEST_CASE("single-token phrase gains exactly the boost in any context") {
  std::mt19937_64 rng(6);
  const std::vector<TokenId> sym{A, B, C};
  const auto lm = random_lm(rng, 2, sym);
  const double b = 2.5;
  const auto biased = bias_lm(lm, {{B}}, b);
  const LmScorer plain(lm);
  for (int i = 0; i < 100; ++i) {
    const auto h = random_seq(rng, sym, 6);
    LmContext cb = biased.start(h), cp = plain.start(h), nb, np;
    CHECK(biased.step(cb, B, nb) - plain.step(cp, B, np) == doctest::Approx(b).epsilon(1e-12));
    CHECK(biased.step(cb, A, nb) == plain.step(cp, A, np));
    CHECK(biased.finish(cb) == plain.finish(cp));
  }
}

TEST_CASE("phrase credit: completed phrases keep L*b, abandoned ones nothing") {
  std::mt19937_64 rng(7);
  const std::vector<TokenId> sym{A, B, C};
  const auto lm = random_lm(rng, 2, sym);
  const double b = 1.5;
  const auto biased = bias_lm(lm, {{A, B, C}}, b);
  const LmScorer plain(lm);
  auto gain = [&](const TokenSeq& s) { return sentence_score(biased, s) - sentence_score(plain, s); };
  CHECK(gain({A, B, C}) == doctest::Approx(3 * b));
  CHECK(gain({C, A, B, C, A}) == doctest::Approx(3 * b));
  CHECK(gain({A, B}) == doctest::Approx(0.0));
  CHECK(gain({A, B, A, B, C}) == doctest::Approx(3 * b));
  CHECK(gain({A, B, C, A, B, C}) == doctest::Approx(6 * b));
  CHECK_THROWS_AS(bias_lm(lm, {{}}, 1.0), Error);
  CHECK_THROWS_AS(bias_lm(lm, {{A}}, -1.0), Error);
}

TEST_CASE("segmenter examples") {
  SegmenterConfig cfg;
  cfg.hangover = 5;
  CHECK(segment(energy_signal({{false, 80}}), cfg).empty());
  auto all = segment(energy_signal({{true, 80}}), cfg);
  REQUIRE(all.size() == 1);
  CHECK(all[0].start == 0);
  CHECK(all[0].end == 80);
  auto one = segment(energy_signal({{false, 50}, {true, 100}, {false, 50}}), cfg);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start == 45);
  CHECK(one[0].end == 155);
  cfg.min_silence = 20;
  // A 25-frame gap shrinks to 15 after the hangover and is bridged; a
  // 40-frame gap leaves 30 and splits.
  CHECK(segment(energy_signal({{true, 10}, {false, 25}, {true, 10}}), cfg).size() == 1);
  CHECK(segment(energy_signal({{true, 10}, {false, 40}, {true, 10}}), cfg).size() == 2);
}

TEST_CASE("segmenting an extracted segment returns its whole span") {
  std::mt19937_64 rng(8);
  SegmenterConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<bool, std::size_t>> runs;
    bool speech = std::uniform_int_distribution<int>(0, 1)(rng);
    for (int r = 0; r < 7; ++r, speech = !speech) {
      runs.push_back({speech, std::uniform_int_distribution<std::size_t>(1, 40)(rng)});
    }
    const auto x = energy_signal(runs);
    for (const auto& s : segment(x, cfg)) {
      const auto again = segment(x.row_slice(s.start, s.end), cfg);
      REQUIRE(again.size() == 1);
      CHECK(again[0].start == 0);
      CHECK(again[0].end == s.end - s.start);
    }
  }
}

TEST_CASE("deterministic scorer yields its token with score zero") {
  const auto lm = NGramLM::train({{A}}, 2, 1.0, {A, B});
  num::Tensor lp(num::Shape{3, 6}, kNegInf);
  for (std::size_t t = 0; t < 3; ++t) lp.at(t, A) = 0.0;
  const auto out = prefix_beam_search(lp, LmScorer(lm), {0.0, 4, 2, true});
  REQUIRE(out.size() == 1);
  CHECK(out[0].tokens == TokenSeq{A});
  CHECK(out[0].combined == 0.0);
  CHECK(out[0].rank == 1);
}

TEST_CASE("n-best ordering and beam contract") {
  std::mt19937_64 rng(9);
  const std::vector<TokenId> sym{A, B};
  const auto lm = random_lm(rng, 2, sym);
  const auto lp = random_log_probs(rng, 5, 6, sym);
  const auto out = prefix_beam_search(lp, LmScorer(lm), {0.5, 6, 2, true});
  REQUIRE(out.size() == 2);
  CHECK(out[0].combined >= out[1].combined);
  CHECK(out[0].tokens != out[1].tokens);
  CHECK(out[0].combined == doctest::Approx(out[0].acoustic + 0.5 * out[0].lm));
  CHECK_THROWS_AS(prefix_beam_search(lp, LmScorer(lm), {0.5, 1, 2, true}), Error);
}

TEST_CASE("unlimited beam equals exhaustive enumeration") {
  std::mt19937_64 rng(10);
  const std::vector<TokenId> sym{A, B};
  for (int trial = 0; trial < 60; ++trial) {
    const auto lm = random_lm(rng, 1 + trial % 3, sym);
    const std::size_t T = 1 + trial % 4;
    const auto lp = random_log_probs(rng, T, 6, sym);
    const double scale = 0.25 * (trial % 4);
    const LmScorer plain(lm);
    const auto biased = bias_lm(lm, {{A, B}}, 1.0);
    for (const LmScorer* s : {&plain, &biased}) {
      const auto got = prefix_beam_search(lp, *s, {scale, kUnlimitedBeam, 1, true});
      const auto want = exhaustive_first_pass(lp, *s, scale, sym);
      REQUIRE(!got.empty());
      CHECK(got[0].tokens == want.tokens);
      CHECK(got[0].combined == doctest::Approx(want.combined).epsilon(1e-12));
      CHECK(got[0].acoustic == doctest::Approx(want.acoustic).epsilon(1e-12));
    }
  }
}

// Pruned beams are not monotone in general (a wider beam keeps different
// prefixes alive); the unlimited beam bounds every narrower one.
TEST_CASE("no finite beam beats the unlimited beam") {
  std::mt19937_64 rng(11);
  const std::vector<TokenId> sym{A, B, C};
  for (int trial = 0; trial < 200; ++trial) {
    const auto lm = random_lm(rng, 2, sym);
    const auto lp = random_log_probs(rng, 2 + trial % 5, 7, sym);
    const double best = prefix_beam_search(lp, LmScorer(lm), {0.5, kUnlimitedBeam, 1, true})[0].combined;
    for (std::size_t beam = 1; beam <= 12; ++beam) {
      const auto out = prefix_beam_search(lp, LmScorer(lm), {0.5, beam, 1, true});
      REQUIRE(!out.empty());
      CHECK(out[0].combined <= best + 1e-12);
    }
  }
}

TEST_SUITE("hybrid model") {
  struct Fixture {
    corpus::Corpus data;
    HybridModel model;
    Fixture() {
      corpus::CorpusSpec spec;
      spec.train_count = 40;
      spec.test_count = 8;
      spec.pause_prob = 0.5;
      data = corpus::generate_corpus(spec);
      HybridConfig hc;
      train::TrainConfig tc;
      tc.epochs = 2;
      tc.batch_size = 128;
      tc.warmup_steps = 10;
      model = train::train_first_pass(data.train, {}, data.tokenizer, hc, tc).model;
    }
  };

  TEST_CASE("acoustic posteriors normalize and the model round-trips") {
    Fixture f;
    const auto lp = acoustic_log_probs(f.model, f.data.matched[0].features);
    CHECK(lp.dim(0) == (f.data.matched[0].frames() + 1) / 2);
    for (std::size_t t = 0; t < lp.dim(0); ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < lp.dim(1); ++k) s += std::exp(lp.at(t, k));
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    const auto dir = std::filesystem::temp_directory_path() / "hec_hybrid_model";
    std::filesystem::remove_all(dir);
    f.model.save(dir);
    const auto back = HybridModel::load(dir);
    CHECK(back.acoustic == f.model.acoustic);
    CHECK(back.lm == f.model.lm);
    CHECK(back.tokenizer == f.model.tokenizer);
    CHECK(acoustic_log_probs(back, f.data.matched[0].features) == lp);
  }

  TEST_CASE("N-best cache covers the data, replays live decoding and round-trips") {
    Fixture f;
    const LmScorer lm(f.model.lm);
    auto data = f.data.matched;
    corpus::Utterance silent{"silent", num::Tensor(num::Shape{30, 16}, 0.0), "ab"};
    data.push_back(silent);
    const auto cache = build_nbest_cache(f.model, lm, data);
    CHECK(cache.size() == data.size());
    for (const auto& u : data) CHECK(cache.count(u.id) == 1);
    const auto& empty = cache.at("silent");
    REQUIRE(empty.size() == 1);
    CHECK(empty[0].rank == 0);
    CHECK(empty[0].tokens.empty());

    const auto& u = f.data.matched[3];
    const auto live = decode_utterance(f.model, lm, u.features, u.id);
    CHECK(one_best(cache, u.id) == live.nbest[0].tokens);
    for (const auto& [id, entries] : cache) {
      for (std::size_t i = 1; i < entries.size(); ++i) {
        CHECK(entries[i - 1].combined >= entries[i].combined);
        CHECK(entries[i].rank == static_cast<int>(i + 1));
      }
    }

    const auto dir = std::filesystem::temp_directory_path();
    write_nbest_cache(dir / "hec_nbest_a.tsv", cache);
    const auto back = read_nbest_cache(dir / "hec_nbest_a.tsv");
    CHECK(back == cache);
    write_nbest_cache(dir / "hec_nbest_b.tsv", back);
    std::ifstream a(dir / "hec_nbest_a.tsv"), b(dir / "hec_nbest_b.tsv");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK_THROWS_AS(one_best(cache, "nope"), Error);
  }

  TEST_CASE("multi-segment utterances decode segment by segment") {
    Fixture f;
    const LmScorer lm(f.model.lm);
    bool saw_multi = false;
    for (const auto& u : f.data.train) {
      const auto d = decode_utterance(f.model, lm, u.features, u.id);
      if (d.segments.size() > 1) saw_multi = true;
      for (std::size_t i = 1; i < d.segments.size(); ++i) {
        CHECK(d.segments[i - 1].end <= d.segments[i].start);
      }
    }
    CHECK(saw_multi);
  }
}
