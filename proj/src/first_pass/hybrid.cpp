#include "hec/first_pass/hybrid.hpp"

#include <algorithm>
#include <map>

#include "hec/error.hpp"

namespace hec::first_pass {

void HybridConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, "invalid hybrid config: " + what);
  };
  check(hidden >= 1 && layers >= 1, "hidden and layers must be >= 1");
  check(frame_skip >= 1, "frame_skip must be >= 1");
  check(lm_order >= 1 && lm_k > 0, "lm_order >= 1 and lm_k > 0");
  check(lm_scale >= 0, "lm_scale must be >= 0");
  check(beam >= nbest && nbest >= 1, "need beam >= nbest >= 1");
  segmenter.validate();
}

KeyValues HybridConfig::to_key_values() const {
  KeyValues kv;
  kv.set("context", static_cast<std::uint64_t>(context));
  kv.set("hidden", static_cast<std::uint64_t>(hidden));
  kv.set("layers", static_cast<std::uint64_t>(layers));
  kv.set("frame_skip", static_cast<std::uint64_t>(frame_skip));
  kv.set("seg_threshold", segmenter.threshold);
  kv.set("seg_min_silence", static_cast<std::uint64_t>(segmenter.min_silence));
  kv.set("seg_hangover", static_cast<std::uint64_t>(segmenter.hangover));
  kv.set("lm_order", lm_order);
  kv.set("lm_k", lm_k);
  kv.set("lm_scale", lm_scale);
  kv.set("beam", static_cast<std::uint64_t>(beam));
  kv.set("nbest", static_cast<std::uint64_t>(nbest));
  return kv;
}

HybridConfig HybridConfig::from_key_values(const KeyValues& kv) {
  HybridConfig c;
  c.context = kv.get_size("context", c.context);
  c.hidden = kv.get_size("hidden", c.hidden);
  c.layers = kv.get_size("layers", c.layers);
  c.frame_skip = kv.get_size("frame_skip", c.frame_skip);
  c.segmenter.threshold = kv.get_double("seg_threshold", c.segmenter.threshold);
  c.segmenter.min_silence = kv.get_size("seg_min_silence", c.segmenter.min_silence);
  c.segmenter.hangover = kv.get_size("seg_hangover", c.segmenter.hangover);
  c.lm_order = static_cast<int>(kv.get_int("lm_order", c.lm_order));
  c.lm_k = kv.get_double("lm_k", c.lm_k);
  c.lm_scale = kv.get_double("lm_scale", c.lm_scale);
  c.beam = kv.get_size("beam", c.beam);
  c.nbest = kv.get_size("nbest", c.nbest);
  c.validate();
  return c;
}

void HybridModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  config.to_key_values().save(dir / "config.txt");
  tokenizer.save(dir / "tokens.txt");
  num::save_checkpoint(dir / "acoustic.ckpt", acoustic, config.to_key_values().to_string());
  lm.save(dir / "lm.txt");
}

HybridModel HybridModel::load(const std::filesystem::path& dir) {
  HybridModel m;
  m.config = HybridConfig::from_key_values(KeyValues::load(dir / "config.txt"));
  m.tokenizer = corpus::Tokenizer::load(dir / "tokens.txt");
  m.acoustic = num::load_checkpoint(dir / "acoustic.ckpt");
  m.lm = NGramLM::load(dir / "lm.txt");
  return m;
}

void init_acoustic(num::ParameterSet& params, const HybridConfig& cfg, std::size_t feature_dim,
                   std::size_t vocab, std::mt19937_64& rng) {
  std::size_t in = (2 * cfg.context + 1) * feature_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "am.l" + std::to_string(l);
    params.add_uniform(p + ".w", {in, cfg.hidden}, in, rng);
    params.add_filled(p + ".b", {cfg.hidden}, 0.0);
    in = cfg.hidden;
  }
  params.add_uniform("am.out.w", {in, vocab}, in, rng);
  params.add_filled("am.out.b", {vocab}, 0.0);
}

std::vector<std::size_t> all_frames(std::size_t T, std::size_t step) {
  std::vector<std::size_t> f;
  for (std::size_t t = 0; t < T; t += step) f.push_back(t);
  return f;
}

num::Tensor splice(const num::Tensor& features, std::size_t context,
                   const std::vector<std::size_t>& frames) {
  require(features.rank() == 2, ErrorKind::kShape, "features must be T x D");
  require(!frames.empty(), ErrorKind::kInvalidArgument, "no frames to splice");
  const std::size_t T = features.dim(0), D = features.dim(1), W = 2 * context + 1;
  num::Tensor out(num::Shape{frames.size(), W * D});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const auto src = std::clamp<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(frames[i] + j) - static_cast<std::ptrdiff_t>(context), 0,
          static_cast<std::ptrdiff_t>(T) - 1);
      std::copy_n(features.ptr() + static_cast<std::size_t>(src) * D, D,
                  out.ptr() + i * W * D + j * D);
    }
  }
  return out;
}

num::Var acoustic_logits(num::Binder& bind, const num::Tensor& spliced, std::size_t layers) {
  num::Var h = num::constant(bind.graph(), spliced);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "am.l" + std::to_string(l);
    h = num::relu(num::linear(h, bind(p + ".w"), bind(p + ".b")));
  }
  return num::linear(h, bind("am.out.w"), bind("am.out.b"));
}

num::Tensor acoustic_log_probs(const HybridModel& model, const num::Tensor& features) {
  const auto& cfg = model.config;
  num::Graph g;
  num::Binder bind(g, model.acoustic);
  const auto spliced = splice(features, cfg.context, all_frames(features.dim(0), cfg.frame_skip));
  return num::log_softmax(acoustic_logits(bind, spliced, cfg.layers)).value();
}

std::vector<NBestEntry> decode_first_pass(const HybridModel& model, const LmScorer& lm,
                                          const num::Tensor& features,
                                          const PrefixSearchOptions& opts,
                                          const LmContext& start) {
  return prefix_beam_search(acoustic_log_probs(model, features), lm, opts, start);
}

namespace {

std::vector<NBestEntry> merge_lists(const std::vector<NBestEntry>& head,
                                    const std::vector<NBestEntry>& tail, std::size_t n) {
  std::map<TokenSeq, NBestEntry> best;
  for (const auto& a : head) {
    for (const auto& b : tail) {
      NBestEntry e;
      e.tokens = a.tokens;
      e.tokens.insert(e.tokens.end(), b.tokens.begin(), b.tokens.end());
      e.acoustic = a.acoustic + b.acoustic;
      e.lm = a.lm + b.lm;
      e.combined = a.combined + b.combined;
      auto it = best.find(e.tokens);
      if (it == best.end()) {
        best.emplace(e.tokens, e);
      } else if (better_entry(e, it->second)) {
        it->second = e;
      }
    }
  }
  std::vector<NBestEntry> out;
  for (auto& kv : best) out.push_back(std::move(kv.second));
  std::sort(out.begin(), out.end(), better_entry);
  if (out.size() > n) out.resize(n);
  return out;
}

}  // namespace

UtteranceDecode decode_utterance(const HybridModel& model, const LmScorer& lm,
                                 const num::Tensor& features, const std::string& id) {
  const auto& cfg = model.config;
  UtteranceDecode out;
  out.segments = segment(features, cfg.segmenter, id);
  if (out.segments.empty()) {
    out.nbest.push_back(NBestEntry{});
    return out;
  }
  std::vector<NBestEntry> merged{NBestEntry{}};
  TokenSeq history;
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    const auto& s = out.segments[i];
    PrefixSearchOptions opts{cfg.lm_scale, cfg.beam, cfg.nbest, i + 1 == out.segments.size()};
    const auto seg = features.row_slice(s.start, s.end);
    auto list = decode_first_pass(model, lm, seg, opts, lm.start(history));
    if (list.empty()) continue;
    history.insert(history.end(), list.front().tokens.begin(), list.front().tokens.end());
    merged = merge_lists(merged, list, cfg.nbest);
  }
  for (std::size_t i = 0; i < merged.size(); ++i) merged[i].rank = static_cast<int>(i + 1);
  out.nbest = std::move(merged);
  return out;
}

}  // namespace hec::first_pass
