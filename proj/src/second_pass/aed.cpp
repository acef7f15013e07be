#include "hec/second_pass/aed.hpp"

#include <cmath>

#include "hec/error.hpp"

namespace hec::second_pass {

using num::Binder;
using num::Tensor;
using num::Var;

std::string structure_name(Structure s) {
  switch (s) {
    case Structure::kNone: return "none";
    case Structure::kPca: return "pca";
    case Structure::kCca: return "cca";
  }
  return "?";
}

Structure parse_structure(const std::string& s) {
  if (s == "none") return Structure::kNone;
  if (s == "pca") return Structure::kPca;
  if (s == "cca") return Structure::kCca;
  fail(ErrorKind::kInvalidArgument, "unknown decoder structure '" + s + "' (none|pca|cca)");
}

// ---------------------------------------------------------------- config ----

AEDConfig AEDConfig::full(std::size_t vocab, std::size_t feature_dim) {
  AEDConfig c;
  c.vocab = vocab;
  c.feature_dim = feature_dim;
  c.embed = 512;
  c.audio_layers = 18;
  c.audio_heads = 8;
  c.conv_kernel = 3;
  c.audio_ff = 1024;
  c.text_layers = 6;
  c.text_heads = 8;
  c.text_ff = 2048;
  c.decoder_layers = 6;
  c.decoder_heads = 8;
  c.decoder_ff = 2048;
  return c;
}

AEDConfig AEDConfig::desk(std::size_t vocab, std::size_t feature_dim) {
  AEDConfig c;
  c.vocab = vocab;
  c.feature_dim = feature_dim;
  return c;
}

AEDConfig AEDConfig::tiny(std::size_t vocab, std::size_t feature_dim) {
  AEDConfig c;
  c.vocab = vocab;
  c.feature_dim = feature_dim;
  c.embed = 32;
  c.audio_layers = 2;
  c.audio_heads = 2;
  c.audio_ff = 64;
  c.text_layers = 1;
  c.text_heads = 2;
  c.text_ff = 64;
  c.decoder_layers = 1;
  c.decoder_heads = 2;
  c.decoder_ff = 64;
  return c;
}

void AEDConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, "invalid AED config: " + what);
  };
  check(vocab > corpus::kFirstSymbol, "vocab must exceed the reserved ids");
  check(feature_dim > 0 && embed > 0, "feature_dim and embed must be positive");
  check(audio_layers > 0 && decoder_layers > 0, "audio and decoder layers must be >= 1");
  check(structure == Structure::kNone || text_layers > 0, "text encoder needs >= 1 layer");
  check(audio_heads > 0 && embed % audio_heads == 0, "embed must be divisible by audio_heads");
  check(text_heads > 0 && embed % text_heads == 0, "embed must be divisible by text_heads");
  check(decoder_heads > 0 && embed % decoder_heads == 0,
        "embed must be divisible by decoder_heads");
  check(conv_kernel % 2 == 1, "conv_kernel must be odd");
  check(audio_ff > 0 && text_ff > 0 && decoder_ff > 0, "feedforward dims must be positive");
  check(dropout == 0.0, "dropout must be 0");
}

KeyValues AEDConfig::to_key_values() const {
  KeyValues kv;
  auto u = [&](const char* k, std::size_t v) { kv.set(k, static_cast<std::uint64_t>(v)); };
  u("vocab", vocab);
  u("feature_dim", feature_dim);
  u("embed", embed);
  u("audio_layers", audio_layers);
  u("audio_heads", audio_heads);
  u("conv_kernel", conv_kernel);
  u("audio_ff", audio_ff);
  u("text_layers", text_layers);
  u("text_heads", text_heads);
  u("text_ff", text_ff);
  u("decoder_layers", decoder_layers);
  u("decoder_heads", decoder_heads);
  u("decoder_ff", decoder_ff);
  kv.set("decoder_structure", structure_name(structure));
  kv.set("dropout", dropout);
  return kv;
}

AEDConfig AEDConfig::from_key_values(const KeyValues& kv) {
  AEDConfig c;
  if (kv.has("preset")) {
    const auto p = kv.get("preset");
    const auto V = kv.get_size("vocab", 0), D = kv.get_size("feature_dim", c.feature_dim);
    if (p == "full") {
      c = full(V, D);
    } else if (p == "desk") {
      c = desk(V, D);
    } else if (p == "tiny") {
      c = tiny(V, D);
    } else {
      fail(ErrorKind::kInvalidArgument, "unknown AED preset '" + p + "'");
    }
  }
  auto u = [&](const char* k, std::size_t& v) { v = kv.get_size(k, v); };
  u("vocab", c.vocab);
  u("feature_dim", c.feature_dim);
  u("embed", c.embed);
  u("audio_layers", c.audio_layers);
  u("audio_heads", c.audio_heads);
  u("conv_kernel", c.conv_kernel);
  u("audio_ff", c.audio_ff);
  u("text_layers", c.text_layers);
  u("text_heads", c.text_heads);
  u("text_ff", c.text_ff);
  u("decoder_layers", c.decoder_layers);
  u("decoder_heads", c.decoder_heads);
  u("decoder_ff", c.decoder_ff);
  c.structure = parse_structure(kv.get("decoder_structure", structure_name(c.structure)));
  c.dropout = kv.get_double("dropout", c.dropout);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- params ----

namespace {

std::string layer_prefix(const char* part, std::size_t l) {
  return std::string(part) + std::to_string(l);
}

void add_linear(num::ParameterSet& ps, const std::string& p, std::size_t in, std::size_t out,
                std::mt19937_64& rng) {
  ps.add_uniform(p + ".w", {in, out}, in, rng);
  ps.add_filled(p + ".b", {out}, 0.0);
}

void add_norm(num::ParameterSet& ps, const std::string& p, std::size_t dim) {
  ps.add_filled(p + ".g", {dim}, 1.0);
  ps.add_filled(p + ".b", {dim}, 0.0);
}

void add_attention(num::ParameterSet& ps, const std::string& p, std::size_t E,
                   std::mt19937_64& rng) {
  for (const char* m : {".q", ".k", ".v", ".o"}) add_linear(ps, p + m, E, E, rng);
}

void add_ff(num::ParameterSet& ps, const std::string& p, std::size_t E, std::size_t ff,
            std::mt19937_64& rng) {
  add_linear(ps, p + ".1", E, ff, rng);
  add_linear(ps, p + ".2", ff, E, rng);
}

}  // namespace

AEDModel AEDModel::init(const AEDConfig& config, std::uint64_t seed) {
  config.validate();
  AEDModel m;
  m.config = config;
  auto& ps = m.params;
  std::mt19937_64 rng(seed);
  const std::size_t E = config.embed, V = config.vocab, K = config.conv_kernel;

  add_linear(ps, "sub.conv1", 3 * config.feature_dim, E, rng);
  add_linear(ps, "sub.conv2", 3 * E, E, rng);
  for (std::size_t l = 0; l < config.audio_layers; ++l) {
    const auto p = layer_prefix("enc", l);
    add_norm(ps, p + ".ff1.ln", E);
    add_ff(ps, p + ".ff1", E, config.audio_ff, rng);
    add_norm(ps, p + ".mhsa.ln", E);
    add_attention(ps, p + ".mhsa", E, rng);
    add_norm(ps, p + ".conv.ln", E);
    add_linear(ps, p + ".conv.pw1", E, 2 * E, rng);
    ps.add_uniform(p + ".conv.dw.w", {K, E}, K, rng);
    ps.add_filled(p + ".conv.dw.b", {E}, 0.0);
    add_norm(ps, p + ".conv.ln2", E);
    add_linear(ps, p + ".conv.pw2", E, E, rng);
    add_norm(ps, p + ".ff2.ln", E);
    add_ff(ps, p + ".ff2", E, config.audio_ff, rng);
    add_norm(ps, p + ".out.ln", E);
  }
  add_linear(ps, "ctc", E, V, rng);

  if (config.structure != Structure::kNone) {
    ps.add("txt.emb", Tensor::uniform({V + 1, E}, 1.0, rng));  // row V: sentinel
    for (std::size_t l = 0; l < config.text_layers; ++l) {
      const auto p = layer_prefix("txt", l);
      add_attention(ps, p + ".attn", E, rng);
      add_norm(ps, p + ".ln1", E);
      add_ff(ps, p + ".ff", E, config.text_ff, rng);
      add_norm(ps, p + ".ln2", E);
    }
  }

  ps.add("dec.emb", Tensor::uniform({V, E}, 1.0, rng));
  for (std::size_t l = 0; l < config.decoder_layers; ++l) {
    const auto p = layer_prefix("dec", l);
    add_attention(ps, p + ".self", E, rng);
    add_norm(ps, p + ".ln1", E);
    add_attention(ps, p + ".ca_audio", E, rng);
    add_norm(ps, p + ".ln2", E);
    if (config.structure != Structure::kNone) add_attention(ps, p + ".ca_text", E, rng);
    if (config.structure == Structure::kCca) add_norm(ps, p + ".ln3", E);
    add_ff(ps, p + ".ff", E, config.decoder_ff, rng);
    add_norm(ps, p + ".ln_ff", E);
  }
  add_linear(ps, "dec.out", E, V, rng);
  return m;
}

void AEDModel::save(const std::filesystem::path& path) const {
  num::save_checkpoint(path, params, config.to_key_values().to_string());
}

AEDModel AEDModel::load(const std::filesystem::path& path) {
  std::string text;
  AEDModel m;
  m.params = num::load_checkpoint(path, &text);
  m.config = AEDConfig::from_key_values(KeyValues::parse(text, path.string()));
  return m;
}

// ---------------------------------------------------------------- blocks ----

std::size_t subsampled_length(std::size_t frames) { return (frames + 3) / 4; }

Tensor sinusoidal_positions(std::size_t length, std::size_t dim, std::size_t offset) {
  Tensor pe(num::Shape{length, dim});
  for (std::size_t t = 0; t < length; ++t) {
    const double pos = static_cast<double>(t + offset);
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe.at(t, i) = i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

namespace {

Var proj(Binder& b, const std::string& p, Var x) { return num::linear(x, b(p + ".w"), b(p + ".b")); }

Var norm(Binder& b, const std::string& p, Var x) {
  return num::layer_norm(x, b(p + ".g"), b(p + ".b"));
}

Var feed_forward(Binder& b, const std::string& p, Var x) {
  return proj(b, p + ".2", num::swish(proj(b, p + ".1", x)));
}

Var attend(Binder& b, const std::string& p, Var query, const MemoryKV& mem, std::size_t heads,
           bool causal) {
  const Var q = proj(b, p + ".q", query);
  return proj(b, p + ".o",
              num::attention(q, mem.k, mem.v, static_cast<std::int64_t>(heads), causal));
}

Var add_positions(Var x, std::size_t offset = 0) {
  const auto& s = x.shape();
  return num::add(x, num::constant(*x.graph, sinusoidal_positions(s[0], s[1], offset)));
}

}  // namespace

MemoryKV memory_kv(Binder& bind, const std::string& prefix, Var memory) {
  return {proj(bind, prefix + ".k", memory), proj(bind, prefix + ".v", memory)};
}

Var audio_encode(Binder& b, const AEDConfig& cfg, const Tensor& features) {
  require(features.rank() == 2 && features.dim(1) == cfg.feature_dim, ErrorKind::kShape,
          "audio features must be T x " + std::to_string(cfg.feature_dim) + ", got " +
              num::shape_str(features.shape()));
  require(features.dim(0) >= 4, ErrorKind::kInvalidArgument,
          "audio needs at least 4 frames for 4x subsampling, got " +
              std::to_string(features.dim(0)));
  Var x = num::constant(b.graph(), features);
  x = num::relu(num::conv1d(x, b("sub.conv1.w"), b("sub.conv1.b"), 3, 2));
  x = num::relu(num::conv1d(x, b("sub.conv2.w"), b("sub.conv2.b"), 3, 2));
  x = add_positions(x);
  for (std::size_t l = 0; l < cfg.audio_layers; ++l) {
    const auto p = layer_prefix("enc", l);
    x = num::add(x, num::scale(feed_forward(b, p + ".ff1", norm(b, p + ".ff1.ln", x)), 0.5));
    {
      const Var h = norm(b, p + ".mhsa.ln", x);
      x = num::add(x, attend(b, p + ".mhsa", h, memory_kv(b, p + ".mhsa", h), cfg.audio_heads, false));
    }
    {
      Var h = norm(b, p + ".conv.ln", x);
      h = num::glu(proj(b, p + ".conv.pw1", h));
      h = num::depthwise_conv1d(h, b(p + ".conv.dw.w"), b(p + ".conv.dw.b"));
      h = num::swish(norm(b, p + ".conv.ln2", h));
      x = num::add(x, proj(b, p + ".conv.pw2", h));
    }
    x = num::add(x, num::scale(feed_forward(b, p + ".ff2", norm(b, p + ".ff2.ln", x)), 0.5));
    x = norm(b, p + ".out.ln", x);
  }
  return x;
}

Var text_encode(Binder& b, const AEDConfig& cfg, const TokenSeq& onebest) {
  require(cfg.structure != Structure::kNone, ErrorKind::kInvalidArgument,
          "the standalone AED has no text encoder");
  std::vector<std::int64_t> ids;
  for (TokenId t : onebest) {
    require(t >= 0 && static_cast<std::size_t>(t) < cfg.vocab, ErrorKind::kInvalidArgument,
            "one-best token " + std::to_string(t) + " is outside the vocabulary");
    ids.push_back(t);
  }
  if (ids.empty()) ids.push_back(static_cast<std::int64_t>(cfg.vocab));  // sentinel
  Var x = add_positions(num::embedding(b("txt.emb"), ids));
  for (std::size_t l = 0; l < cfg.text_layers; ++l) {
    const auto p = layer_prefix("txt", l);
    x = norm(b, p + ".ln1", num::add(x, attend(b, p + ".attn", x, memory_kv(b, p + ".attn", x),
                                               cfg.text_heads, false)));
    x = norm(b, p + ".ln2", num::add(x, feed_forward(b, p + ".ff", x)));
  }
  return x;
}

Var ctc_logits(Binder& b, Var audio) { return proj(b, "ctc", audio); }

Var decoder_layer(Binder& b, const AEDConfig& cfg, std::size_t layer, Var x,
                  const MemoryKV& audio, const MemoryKV* text, LayerCache* cache) {
  require(x.shape().size() == 2 && x.shape()[1] == cfg.embed, ErrorKind::kShape,
          "decoder input must be U x " + std::to_string(cfg.embed));
  require((text != nullptr) == (cfg.structure != Structure::kNone), ErrorKind::kInvalidArgument,
          "text memory must be given exactly when the decoder has a text branch");
  const auto p = layer_prefix("dec", layer);
  const std::size_t H = cfg.decoder_heads;

  MemoryKV self = memory_kv(b, p + ".self", x);
  if (cache) {
    if (!cache->k.empty()) {
      self.k = num::concat({num::constant(b.graph(), cache->k), self.k}, 0);
      self.v = num::concat({num::constant(b.graph(), cache->v), self.v}, 0);
    }
    cache->k = self.k.value();
    cache->v = self.v.value();
  }
  const Var h1 = norm(b, p + ".ln1", num::add(x, attend(b, p + ".self", x, self, H, true)));
  Var h;
  switch (cfg.structure) {
    case Structure::kNone:
      h = norm(b, p + ".ln2", num::add(h1, attend(b, p + ".ca_audio", h1, audio, H, false)));
      break;
    case Structure::kPca: {
      const Var ca = attend(b, p + ".ca_audio", h1, audio, H, false);
      const Var ct = attend(b, p + ".ca_text", h1, *text, H, false);
      h = norm(b, p + ".ln2", num::add(h1, num::add(num::scale(ca, 0.5), num::scale(ct, 0.5))));
      break;
    }
    case Structure::kCca: {
      const Var h2 = norm(b, p + ".ln2", num::add(h1, attend(b, p + ".ca_audio", h1, audio, H, false)));
      h = norm(b, p + ".ln3", num::add(h2, attend(b, p + ".ca_text", h2, *text, H, false)));
      break;
    }
  }
  return norm(b, p + ".ln_ff", num::add(h, feed_forward(b, p + ".ff", h)));
}

namespace {

Var decoder_stack(Binder& b, const AEDConfig& cfg, const TokenSeq& input, std::size_t offset,
                  const std::vector<MemoryKV>& audio, const std::vector<MemoryKV>& text,
                  std::vector<LayerCache>* caches) {
  std::vector<std::int64_t> ids;
  for (TokenId t : input) {
    require(t >= 0 && static_cast<std::size_t>(t) < cfg.vocab, ErrorKind::kInvalidArgument,
            "decoder token " + std::to_string(t) + " is outside the vocabulary");
    ids.push_back(t);
  }
  Var x = add_positions(num::embedding(b("dec.emb"), ids), offset);
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    x = decoder_layer(b, cfg, l, x, audio[l], text.empty() ? nullptr : &text[l],
                      caches ? &(*caches)[l] : nullptr);
  }
  return proj(b, "dec.out", x);
}

std::vector<MemoryKV> layer_memories(Binder& b, const AEDConfig& cfg, const char* branch, Var mem) {
  std::vector<MemoryKV> out;
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    out.push_back(memory_kv(b, layer_prefix("dec", l) + "." + branch, mem));
  }
  return out;
}

}  // namespace

ForwardOutput forward(Binder& b, const AEDConfig& cfg, const Tensor& features,
                      const TokenSeq& onebest, const TokenSeq& decoder_input) {
  require(!decoder_input.empty() && decoder_input.front() == corpus::kSos,
          ErrorKind::kInvalidArgument, "decoder input must start with sos");
  const Var audio = audio_encode(b, cfg, features);
  const auto audio_mem = layer_memories(b, cfg, "ca_audio", audio);
  std::vector<MemoryKV> text_mem;
  if (cfg.structure != Structure::kNone) {
    text_mem = layer_memories(b, cfg, "ca_text", text_encode(b, cfg, onebest));
  }
  return {decoder_stack(b, cfg, decoder_input, 0, audio_mem, text_mem, nullptr),
          ctc_logits(b, audio)};
}

// ------------------------------------------------------------- inference ----

EncodedInput encode(const AEDModel& model, const Tensor& features, const TokenSeq& onebest) {
  const auto& cfg = model.config;
  num::Graph g;
  Binder b(g, model.params);
  EncodedInput enc;
  const Var audio = audio_encode(b, cfg, features);
  enc.audio = audio.value();
  enc.ctc_log_probs = num::log_softmax(ctc_logits(b, audio)).value();
  for (const auto& m : layer_memories(b, cfg, "ca_audio", audio)) {
    enc.audio_k.push_back(m.k.value());
    enc.audio_v.push_back(m.v.value());
  }
  if (cfg.structure != Structure::kNone) {
    const Var text = text_encode(b, cfg, onebest);
    enc.text = text.value();
    for (const auto& m : layer_memories(b, cfg, "ca_text", text)) {
      enc.text_k.push_back(m.k.value());
      enc.text_v.push_back(m.v.value());
    }
  }
  return enc;
}

DecoderState initial_state(const AEDModel& model) {
  DecoderState s;
  s.layers.resize(model.config.decoder_layers);
  return s;
}

namespace {

void constant_memories(num::Graph& g, const EncodedInput& enc, std::vector<MemoryKV>& audio,
                       std::vector<MemoryKV>& text) {
  for (std::size_t l = 0; l < enc.audio_k.size(); ++l) {
    audio.push_back({num::constant(g, enc.audio_k[l]), num::constant(g, enc.audio_v[l])});
  }
  for (std::size_t l = 0; l < enc.text_k.size(); ++l) {
    text.push_back({num::constant(g, enc.text_k[l]), num::constant(g, enc.text_v[l])});
  }
}

}  // namespace

Tensor decoder_step(const AEDModel& model, const EncodedInput& enc, DecoderState& state,
                    TokenId token) {
  num::Graph g;
  Binder b(g, model.params);
  std::vector<MemoryKV> audio, text;
  constant_memories(g, enc, audio, text);
  const std::size_t pos = state.tokens.size();
  const Var logits = decoder_stack(b, model.config, {token}, pos, audio, text, &state.layers);
  state.tokens.push_back(token);
  return num::log_softmax(logits).value().reshaped({model.config.vocab});
}

Tensor decoder_full(const AEDModel& model, const EncodedInput& enc, const TokenSeq& decoder_input) {
  num::Graph g;
  Binder b(g, model.params);
  std::vector<MemoryKV> audio, text;
  constant_memories(g, enc, audio, text);
  return num::log_softmax(decoder_stack(b, model.config, decoder_input, 0, audio, text, nullptr))
      .value();
}

}  // namespace hec::second_pass
