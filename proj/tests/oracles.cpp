#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "hec/decode_eval/beam_search.hpp"
#include "hec/error.hpp"
#include "hec/train/ctc.hpp"
#include "hec/train/losses.hpp"

namespace hec::oracle {

using namespace hec::num;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kGradTolerance = 1e-4;
// Full layers have gradients that are zero up to rounding (key biases shift
// every score of a softmax row equally); a wider step keeps the
// finite-difference rounding noise below the 1e-8 relative-error floor.
constexpr double kLayerEps = 1e-3;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor rand_t(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  return Tensor::uniform(std::move(s), scale, rng);
}

struct OpCase {
  std::string op;
  std::vector<Tensor> inputs;
  Attrs attrs;
};

// f = sum(R * op(inputs)) with a fixed random projection R, every input a parameter.
GradCheckReport check_op(const OpCase& c, std::mt19937_64& rng) {
  ParameterSet params;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    names.push_back("in" + std::to_string(i));
    params.add(names.back(), c.inputs[i]);
  }
  std::vector<const Tensor*> raw;
  for (const auto& t : c.inputs) raw.push_back(&t);
  const Tensor probe = forward_op(c.op, raw, c.attrs);
  const Tensor proj = rand_t(probe.shape(), rng);
  return grad_check(
      [&](Binder& bind) {
        std::vector<Var> in;
        for (const auto& n : names) in.push_back(bind(n));
        Var out = apply_list(c.op, in, c.attrs);
        if (out.value().size() == 1) return out;
        return sum(mul(out, constant(bind.graph(), proj)));
      },
      params, 1e-6);
}

OpCase random_case(const std::string& op, std::mt19937_64& rng) {
  const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 6), k = pick(rng, 1, 5);
  OpCase c{op, {}, {}};
  if (op == "matmul") {
    c.inputs = {rand_t({m, k}, rng), rand_t({k, n}, rng)};
  } else if (op == "linear") {
    c.inputs = {rand_t({m, k}, rng), rand_t({k, n}, rng), rand_t({n}, rng)};
  } else if (op == "add" || op == "sub" || op == "mul") {
    c.inputs = {rand_t({m, n}, rng), rand_t({m, n}, rng)};
  } else if (op == "scale") {
    c.inputs = {rand_t({m, n}, rng)};
    c.attrs.set("factor", std::uniform_real_distribution<double>(-2, 2)(rng));
  } else if (op == "sigmoid" || op == "swish" || op == "relu" || op == "sum" ||
             op == "mean" || op == "log_softmax") {
    c.inputs = {rand_t({m, n}, rng, 3.0)};
  } else if (op == "glu") {
    c.inputs = {rand_t({m, 2 * n}, rng, 2.0)};
  } else if (op == "softmax") {
    c.inputs = {rand_t({m, n}, rng, 3.0)};
    c.attrs.set("axis", static_cast<std::int64_t>(pick(rng, 0, 1)));
  } else if (op == "layer_norm") {
    const std::size_t w = pick(rng, 3, 7);
    c.inputs = {rand_t({m, w}, rng, 2.0), rand_t({w}, rng), rand_t({w}, rng)};
    c.attrs.set("eps", 1e-5);
  } else if (op == "depthwise_conv1d") {
    const std::size_t K = 2 * pick(rng, 0, 2) + 1;
    c.inputs = {rand_t({m + 2, n}, rng), rand_t({K, n}, rng), rand_t({n}, rng)};
  } else if (op == "conv1d") {
    const std::size_t K = 2 * pick(rng, 0, 2) + 1, cin = pick(rng, 1, 3);
    const auto stride = static_cast<std::int64_t>(pick(rng, 1, 2));
    c.inputs = {rand_t({m + 3, cin}, rng), rand_t({K * cin, n}, rng), rand_t({n}, rng)};
    c.attrs.set("kernel", static_cast<std::int64_t>(K)).set("stride", stride);
  } else if (op == "embedding") {
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < m + 1; ++i) ids.push_back(static_cast<std::int64_t>(pick(rng, 0, k)));
    c.inputs = {rand_t({k + 1, n}, rng)};
    c.attrs.set("ids", ids);
  } else if (op == "concat") {
    const auto axis = static_cast<std::int64_t>(pick(rng, 0, 1));
    c.inputs = {rand_t({m, n}, rng), axis == 0 ? rand_t({k, n}, rng) : rand_t({m, k}, rng)};
    c.attrs.set("axis", axis);
  } else if (op == "masked_fill") {
    std::vector<std::int64_t> mask;
    for (std::size_t i = 0; i < m * n; ++i) mask.push_back(static_cast<std::int64_t>(pick(rng, 0, 1)));
    c.inputs = {rand_t({m, n}, rng)};
    c.attrs.set("mask", mask).set("value", -3.0);
  } else if (op == "attention") {
    const std::size_t heads = pick(rng, 1, 3), dk = pick(rng, 1, 3), e = heads * dk;
    const bool causal = pick(rng, 0, 1) == 1;
    const std::size_t tk = pick(rng, 1, 5);
    const std::size_t tq = causal ? pick(rng, 1, tk) : pick(rng, 1, 5);
    const auto key_len = causal ? static_cast<std::int64_t>(tk)
                                : static_cast<std::int64_t>(pick(rng, 1, tk));
    c.inputs = {rand_t({tq, e}, rng, 2.0), rand_t({tk, e}, rng, 2.0), rand_t({tk, e}, rng)};
    c.attrs.set("heads", static_cast<std::int64_t>(heads))
        .set("causal", causal)
        .set("key_len", key_len);
  } else if (op == "cross_entropy") {
    std::vector<std::int64_t> targets;
    for (std::size_t i = 0; i < m; ++i) targets.push_back(static_cast<std::int64_t>(pick(rng, 0, n)));
    c.inputs = {rand_t({m, n + 1}, rng, 3.0)};
    c.attrs.set("targets", targets);
  } else {
    fail(ErrorKind::kInvalidArgument, "no generator for operator " + op);
  }
  return c;
}


std::string seq_str(const TokenSeq& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

void SuiteResult::record(bool ok, double err, const std::string& what) {
  ++instances;
  if (std::isfinite(err)) worst = std::max(worst, err);
  if (!ok) {
    if (failures == 0) detail = what;
    ++failures;
  }
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// ------------------------------------------------------------------ ctc ----

double brute_ctc_loss(const Tensor& logits, const TokenSeq& target) {
  const std::size_t T = logits.dim(0), V = logits.dim(1);
  std::vector<double> logp(T * V);
  for (std::size_t t = 0; t < T; ++t) {
    double z = kNegInf;
    for (std::size_t k = 0; k < V; ++k) z = log_add(z, logits.at(t, k));
    for (std::size_t k = 0; k < V; ++k) logp[t * V + k] = logits.at(t, k) - z;
  }
  double total = kNegInf;
  std::vector<std::size_t> path(T, 0);
  for (;;) {
    TokenSeq out;
    std::size_t prev = 0;
    double lp = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      lp += logp[t * V + path[t]];
      if (path[t] != 0 && path[t] != prev) out.push_back(static_cast<TokenId>(path[t]));
      prev = path[t];
    }
    if (out == target) total = log_add(total, lp);
    std::size_t k = 0;
    while (k < T && ++path[k] == V) path[k++] = 0;
    if (k == T) break;
  }
  return -total;
}

SuiteResult ctc_oracle_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (std::size_t V = 2; V <= 4; ++V) {
    // Every target of length 0..3 over labels 1..V-1.
    std::vector<TokenSeq> targets{{}};
    for (std::size_t len = 1; len <= 3; ++len) {
      std::vector<std::size_t> digits(len, 0);
      for (;;) {
        TokenSeq t;
        for (auto d : digits) t.push_back(static_cast<TokenId>(d + 1));
        targets.push_back(t);
        std::size_t k = 0;
        while (k < len && ++digits[k] == V - 1) digits[k++] = 0;
        if (k == len) break;
      }
    }
    for (std::size_t T = 1; T <= 6; ++T) {
      for (const auto& target : targets) {
        const Tensor logits = rand_t({T, V}, rng, 3.0);
        const double want = brute_ctc_loss(logits, target);
        std::ostringstream what;
        what << "T'=" << T << " V=" << V << " target " << seq_str(target);
        if (train::ctc_min_frames(target) > T) {
          bool rejected = false;
          try {
            train::ctc_loss_value(logits, target);
          } catch (const Error& e) {
            rejected = e.kind() == ErrorKind::kInfeasible;
          }
          r.record(rejected && std::isinf(want), 0.0, what.str() + ": infeasible target not rejected");
          continue;
        }
        const double got = train::ctc_loss_value(logits, target);
        const double err = std::abs(got - want);
        what << ": " << got << " vs " << want;
        r.record(err <= 1e-8, err, what.str());
      }
    }
  }
  return r;
}

// ------------------------------------------------------------ gradients ----

SuiteResult operator_gradient_suite(const std::string& op, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (std::size_t i = 0; i < count; ++i) {
    const OpCase c = random_case(op, rng);
    const auto report = check_op(c, rng);
    r.record(report.max_rel_error <= kGradTolerance, report.max_rel_error,
             op + " instance " + std::to_string(i) + " worst at " + report.worst);
  }
  return r;
}

SuiteResult ctc_gradient_suite(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  while (r.instances < count) {
    const std::size_t V = pick(rng, 2, 5), T = pick(rng, 1, 8);
    TokenSeq target(pick(rng, 0, 4));
    for (auto& t : target) t = static_cast<TokenId>(pick(rng, 1, V - 1));
    if (train::ctc_min_frames(target) > T) continue;
    const Tensor logits = rand_t({T, V}, rng, 2.0);
    const auto report = grad_check(
        [&](Graph&, Var x) { return train::ctc_loss(x, target); }, logits, 1e-6);
    r.record(report.max_rel_error <= kGradTolerance, report.max_rel_error,
             "ctc T'=" + std::to_string(T) + " target " + seq_str(target) + " at " + report.worst);
  }
  return r;
}

SuiteResult attention_ce_gradient_suite(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t U = pick(rng, 1, 6), V = pick(rng, 2, 8);
    std::vector<std::int64_t> ref(U);
    for (auto& t : ref) t = static_cast<std::int64_t>(pick(rng, 0, V - 1));
    const Tensor logits = rand_t({U, V}, rng, 3.0);
    const auto report = grad_check(
        [&](Graph&, Var x) { return train::attention_ce_loss(x, ref); }, logits, 1e-6);
    r.record(report.max_rel_error <= kGradTolerance, report.max_rel_error,
             "attention CE instance " + std::to_string(i) + " at " + report.worst);
  }
  return r;
}

SuiteResult decoder_layer_gradient_suite(second_pass::Structure structure, std::size_t count,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  for (std::size_t i = 0; i < count; ++i) {
    second_pass::AEDConfig cfg = second_pass::AEDConfig::tiny(6, 4);
    cfg.structure = structure;
    cfg.decoder_heads = pick(rng, 1, 2);
    cfg.embed = cfg.decoder_heads * pick(rng, 2, 3);
    cfg.audio_heads = cfg.text_heads = cfg.decoder_heads;
    cfg.decoder_ff = pick(rng, 2, 6);
    cfg.decoder_layers = 1;
    const auto model = second_pass::AEDModel::init(cfg, seed + i);
    ParameterSet params;
    for (const auto& [name, value] : model.params) {
      if (name.rfind("dec0.", 0) != 0) continue;
      // Perturb so layer-norm gains and biases are not at their initial values.
      Tensor v = value;
      const Tensor noise = rand_t(v.shape(), rng, 0.3);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] += noise[k];
      params.add(name, v);
    }
    const std::size_t U = pick(rng, 1, 4), Ta = pick(rng, 1, 5), Tt = pick(rng, 1, 4);
    params.add("x", rand_t({U, cfg.embed}, rng, 1.5));
    params.add("audio", rand_t({Ta, cfg.embed}, rng, 1.5));
    const bool has_text = structure != second_pass::Structure::kNone;
    if (has_text) params.add("text", rand_t({Tt, cfg.embed}, rng, 1.5));
    const Tensor proj = rand_t({U, cfg.embed}, rng);
    const auto report = grad_check(
        [&](Binder& b) {
          const auto audio = second_pass::memory_kv(b, "dec0.ca_audio", b("audio"));
          second_pass::MemoryKV text;
          if (has_text) text = second_pass::memory_kv(b, "dec0.ca_text", b("text"));
          const Var y = second_pass::decoder_layer(b, cfg, 0, b("x"), audio,
                                                   has_text ? &text : nullptr);
          return sum(mul(y, constant(b.graph(), proj)));
        },
        params, kLayerEps);
    r.record(report.max_rel_error <= kGradTolerance, report.max_rel_error,
             second_pass::structure_name(structure) + " layer instance " + std::to_string(i) +
                 " worst at " + report.worst);
  }
  return r;
}

// ----------------------------------------------------------- first pass ----

double sentence_score(const first_pass::LmScorer& lm, const TokenSeq& s) {
  first_pass::LmContext ctx, next;
  double total = 0.0;
  for (TokenId w : s) {
    total += lm.step(ctx, w, next);
    ctx = next;
  }
  return total + lm.finish(ctx);
}

first_pass::NGramLM random_lm(std::mt19937_64& rng, int order, const std::vector<TokenId>& symbols) {
  std::vector<TokenSeq> sents;
  std::uniform_int_distribution<std::size_t> len(0, 5), which(0, symbols.size() - 1);
  for (int i = 0; i < 20; ++i) {
    TokenSeq s(len(rng));
    for (auto& t : s) t = symbols[which(rng)];
    sents.push_back(s);
  }
  return first_pass::NGramLM::train(sents, order, 0.5, symbols);
}

Tensor random_log_probs(std::mt19937_64& rng, std::size_t T, std::size_t V,
                        const std::vector<TokenId>& symbols) {
  Tensor lp(Shape{T, V}, kNegInf);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<TokenId> cols{corpus::kBlank};
  cols.insert(cols.end(), symbols.begin(), symbols.end());
  for (std::size_t t = 0; t < T; ++t) {
    double z = kNegInf;
    std::vector<double> v;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      v.push_back(u(rng));
      z = log_add(z, v.back());
    }
    for (std::size_t i = 0; i < cols.size(); ++i) lp.at(t, static_cast<std::size_t>(cols[i])) = v[i] - z;
  }
  return lp;
}

first_pass::NBestEntry exhaustive_first_pass(const Tensor& lp, const first_pass::LmScorer& lm,
                                             double lm_scale, const std::vector<TokenId>& symbols) {
  const std::size_t T = lp.dim(0);
  std::vector<TokenId> labels{corpus::kBlank};
  labels.insert(labels.end(), symbols.begin(), symbols.end());
  std::map<TokenSeq, double> mass;
  std::vector<std::size_t> digits(T, 0);
  for (;;) {
    double p = 0.0;
    TokenSeq out;
    TokenId prev = corpus::kBlank;
    for (std::size_t t = 0; t < T; ++t) {
      const TokenId l = labels[digits[t]];
      p += lp.at(t, static_cast<std::size_t>(l));
      if (l != corpus::kBlank && l != prev) out.push_back(l);
      prev = l;
    }
    auto it = mass.try_emplace(out, kNegInf).first;
    it->second = log_add(it->second, p);
    std::size_t k = 0;
    while (k < T && ++digits[k] == labels.size()) digits[k++] = 0;
    if (k == T) break;
  }
  first_pass::NBestEntry best;
  bool have = false;
  for (const auto& [seq, ac] : mass) {
    first_pass::NBestEntry e;
    e.tokens = seq;
    e.acoustic = ac;
    e.lm = sentence_score(lm, seq);
    e.combined = ac + lm_scale * e.lm;
    if (!have || first_pass::better_entry(e, best)) best = e;
    have = true;
  }
  return best;
}

SuiteResult first_pass_oracle_suite(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  const std::vector<TokenId> sym{4, 5};
  for (std::size_t trial = 0; trial < count; ++trial) {
    const auto lm = random_lm(rng, 1 + static_cast<int>(trial % 3), sym);
    const std::size_t T = 1 + trial % 4;
    const auto lp = random_log_probs(rng, T, 6, sym);
    const double scale = 0.25 * static_cast<double>(trial % 4);
    const first_pass::LmScorer plain(lm);
    const auto biased = first_pass::bias_lm(lm, {{4, 5}}, 1.0);
    for (const first_pass::LmScorer* s : {&plain, &biased}) {
      const auto got = first_pass::prefix_beam_search(lp, *s, {scale, first_pass::kUnlimitedBeam, 1, true});
      const auto want = exhaustive_first_pass(lp, *s, scale, sym);
      const double err = got.empty() ? INFINITY : std::abs(got[0].combined - want.combined);
      r.record(!got.empty() && got[0].tokens == want.tokens && err <= 1e-9 * (1 + std::abs(want.combined)),
               err, "first pass trial " + std::to_string(trial) + " want " + seq_str(want.tokens));
    }
  }
  return r;
}

// ---------------------------------------------------------- joint search ----

second_pass::AEDModel tiny_aed(std::size_t symbols, second_pass::Structure structure,
                               std::uint64_t seed) {
  auto cfg = second_pass::AEDConfig::tiny(corpus::kFirstSymbol + symbols, 4);
  cfg.embed = 8;
  cfg.audio_heads = cfg.text_heads = cfg.decoder_heads = 2;
  cfg.audio_ff = cfg.text_ff = cfg.decoder_ff = 8;
  cfg.audio_layers = 1;
  cfg.structure = structure;
  auto model = second_pass::AEDModel::init(cfg, seed);
  // Sharpen the output layers so scores are far from uniform.
  std::mt19937_64 rng(seed ^ 0x7E57);
  for (const char* name : {"dec.out.w", "ctc.w"}) {
    Tensor& w = model.params.at(name);
    const Tensor noise = rand_t(w.shape(), rng, 3.0);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += noise[k];
  }
  return model;
}

JointBest exhaustive_joint(const second_pass::AEDModel& model, const Tensor& features,
                           const TokenSeq& onebest, std::size_t max_len) {
  const auto enc = second_pass::encode(model, features, onebest);
  Graph g;
  Binder b(g, model.params);
  const Tensor ctc_logits = second_pass::ctc_logits(b, constant(g, enc.audio)).value();
  std::vector<TokenId> labels;
  for (std::size_t c = corpus::kFirstSymbol; c < model.config.vocab; ++c) labels.push_back(static_cast<TokenId>(c));

  JointBest best;
  bool have = false;
  const auto consider = [&](const TokenSeq& seq) {
    // CTC paths over every output column; only blank and the symbols can
    // spell `seq`, so restricting to them loses no mass.
    const double ctc = -brute_ctc_loss(ctc_logits, seq);
    TokenSeq input{corpus::kSos};
    input.insert(input.end(), seq.begin(), seq.end());
    const Tensor lp = second_pass::decoder_full(model, enc, input);
    double att = 0.0;
    for (std::size_t u = 0; u <= seq.size(); ++u) {
      const TokenId next = u < seq.size() ? seq[u] : corpus::kEos;
      att += lp.at(u, static_cast<std::size_t>(next));
    }
    const double joint = 0.3 * ctc + 0.7 * att;
    if (joint == kNegInf) return;
    const bool better = !have || joint > best.joint ||
                        (joint == best.joint && (seq.size() < best.tokens.size() ||
                                                 (seq.size() == best.tokens.size() && seq < best.tokens)));
    if (better) best = {seq, joint, ctc, att};
    have = true;
  };
  std::vector<TokenSeq> frontier{{}};
  for (std::size_t len = 0; len <= max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& s : frontier) {
      consider(s);
      if (len == max_len) continue;
      for (TokenId c : labels) {
        TokenSeq t = s;
        t.push_back(c);
        next.push_back(t);
      }
    }
    frontier = std::move(next);
  }
  return best;
}

SuiteResult joint_search_oracle_suite(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SuiteResult r;
  const second_pass::Structure structures[] = {second_pass::Structure::kNone,
                                               second_pass::Structure::kPca,
                                               second_pass::Structure::kCca};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t S = pick(rng, 2, 3);
    const auto structure = structures[i % 3];
    const auto model = tiny_aed(S, structure, seed * 1000 + i);
    const Tensor features = rand_t({pick(rng, 4, 16), 4}, rng, 2.0);
    TokenSeq onebest;
    if (structure != second_pass::Structure::kNone) {
      onebest.resize(pick(rng, 0, 3));
      for (auto& t : onebest) t = static_cast<TokenId>(corpus::kFirstSymbol + pick(rng, 0, S - 1));
    }
    const std::size_t max_len = pick(rng, 1, 3);
    eval::BeamOptions opts;
    opts.beam = 1000;
    opts.max_len = max_len;
    const auto got = eval::recognize(model, features, onebest, opts);
    const auto want = exhaustive_joint(model, features, onebest, max_len);
    const double err = std::abs(got.joint - want.joint);
    r.record(got.tokens == want.tokens && err <= 1e-9 * (1 + std::abs(want.joint)), err,
             "joint search instance " + std::to_string(i) + ": got " + seq_str(got.tokens) +
                 " want " + seq_str(want.tokens));
  }
  return r;
}

}  // namespace hec::oracle
