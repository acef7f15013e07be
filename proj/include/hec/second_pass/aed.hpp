#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hec/config.hpp"
#include "hec/corpus/tokenizer.hpp"
#include "hec/numerics/graph.hpp"
#include "hec/numerics/params.hpp"

namespace hec::second_pass {

using corpus::TokenId;
using corpus::TokenSeq;

// How the decoder consumes the encoders. kNone is the standalone AED
// baseline: no text encoder, a single cross-attention to audio.
enum class Structure { kNone, kPca, kCca };

std::string structure_name(Structure s);
Structure parse_structure(const std::string& s);

struct AEDConfig {
  std::size_t vocab = 0;
  std::size_t feature_dim = 16;
  std::size_t embed = 64;
  std::size_t audio_layers = 4;
  std::size_t audio_heads = 4;
  std::size_t conv_kernel = 3;
  std::size_t audio_ff = 128;
  std::size_t text_layers = 2;
  std::size_t text_heads = 4;
  std::size_t text_ff = 128;
  std::size_t decoder_layers = 2;
  std::size_t decoder_heads = 4;
  std::size_t decoder_ff = 128;
  Structure structure = Structure::kPca;
  double dropout = 0.0;

  // Full-size model: 18 conformer layers, embed 512.
  static AEDConfig full(std::size_t vocab, std::size_t feature_dim);
  static AEDConfig desk(std::size_t vocab, std::size_t feature_dim);
  // Smaller than desk; used by the multi-seed experiments on one CPU core.
  static AEDConfig tiny(std::size_t vocab, std::size_t feature_dim);

  void validate() const;
  KeyValues to_key_values() const;
  static AEDConfig from_key_values(const KeyValues& kv);
};

struct AEDModel {
  AEDConfig config;
  num::ParameterSet params;

  static AEDModel init(const AEDConfig& config, std::uint64_t seed);
  // Numerics checkpoint with the config as its config block.
  void save(const std::filesystem::path& path) const;
  static AEDModel load(const std::filesystem::path& path);
};

// Output length of the 4x subsampling front end.
std::size_t subsampled_length(std::size_t frames);

num::Tensor sinusoidal_positions(std::size_t length, std::size_t dim, std::size_t offset = 0);

// Graph-level building blocks; parameters are read through the binder.
num::Var audio_encode(num::Binder& bind, const AEDConfig& cfg, const num::Tensor& features);
num::Var text_encode(num::Binder& bind, const AEDConfig& cfg, const TokenSeq& onebest);
num::Var ctc_logits(num::Binder& bind, num::Var audio);

// Keys and values of one attention memory.
struct MemoryKV {
  num::Var k;
  num::Var v;
};
MemoryKV memory_kv(num::Binder& bind, const std::string& prefix, num::Var memory);

// Self-attention keys/values of the positions already decoded, per layer.
struct LayerCache {
  num::Tensor k;
  num::Tensor v;
};

// One decoder layer over the new positions `x`. With a cache, the cached
// positions precede `x` and the cache is extended with the new keys and
// values.
num::Var decoder_layer(num::Binder& bind, const AEDConfig& cfg, std::size_t layer, num::Var x,
                       const MemoryKV& audio, const MemoryKV* text, LayerCache* cache = nullptr);

struct ForwardOutput {
  num::Var att_logits;  // [len(decoder input), V]
  num::Var ctc_logits;  // [T', V], audio branch only
};

// Teacher-forced forward: `decoder_input` is sos followed by the reference
// tokens; row u of att_logits predicts reference token u (eos last).
ForwardOutput forward(num::Binder& bind, const AEDConfig& cfg, const num::Tensor& features,
                      const TokenSeq& onebest, const TokenSeq& decoder_input);

// Inference-time encoder outputs and per-layer cross-attention memories.
struct EncodedInput {
  num::Tensor audio;                 // [T', E]
  std::optional<num::Tensor> text;   // [U', E]
  num::Tensor ctc_log_probs;         // [T', V]
  std::vector<num::Tensor> audio_k, audio_v, text_k, text_v;
};
EncodedInput encode(const AEDModel& model, const num::Tensor& features, const TokenSeq& onebest);

// Incremental decoder: tokens fed so far (sos first) and the self-attention
// caches.
struct DecoderState {
  TokenSeq tokens;
  std::vector<LayerCache> layers;
};

DecoderState initial_state(const AEDModel& model);
// Feeds `token`, returns log-probabilities of the next token.
num::Tensor decoder_step(const AEDModel& model, const EncodedInput& enc, DecoderState& state,
                         TokenId token);
// Log-probabilities for every position of `decoder_input` in one pass.
num::Tensor decoder_full(const AEDModel& model, const EncodedInput& enc,
                         const TokenSeq& decoder_input);

}  // namespace hec::second_pass
