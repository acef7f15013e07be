#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hec/config.hpp"
#include "hec/corpus/corpus.hpp"
#include "hec/first_pass/decoder.hpp"
#include "hec/first_pass/ngram.hpp"
#include "hec/first_pass/segmenter.hpp"
#include "hec/numerics/graph.hpp"
#include "hec/numerics/params.hpp"

namespace hec::first_pass {

struct HybridConfig {
  std::size_t context = 2;  // spliced frames on each side
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t frame_skip = 2;
  SegmenterConfig segmenter;
  int lm_order = 3;
  double lm_k = 0.1;
  double lm_scale = 0.5;
  std::size_t beam = 8;
  std::size_t nbest = 4;

  void validate() const;
  KeyValues to_key_values() const;
  static HybridConfig from_key_values(const KeyValues& kv);
};

// First-pass recognizer: a frame classifier over spliced features (outputs:
// every tokenizer id, blank doubling as silence), an n-gram LM and the
// energy segmenter.
struct HybridModel {
  HybridConfig config;
  corpus::Tokenizer tokenizer;
  num::ParameterSet acoustic;
  NGramLM lm;

  // Directory with config.txt, tokens.txt, acoustic.ckpt, lm.txt.
  void save(const std::filesystem::path& dir) const;
  static HybridModel load(const std::filesystem::path& dir);
};

void init_acoustic(num::ParameterSet& params, const HybridConfig& cfg, std::size_t feature_dim,
                   std::size_t vocab, std::mt19937_64& rng);

// Rows `frames` of `features`, each with +-context neighbours (edges
// replicated), flattened to one row per frame.
num::Tensor splice(const num::Tensor& features, std::size_t context,
                   const std::vector<std::size_t>& frames);
std::vector<std::size_t> all_frames(std::size_t T, std::size_t step = 1);

num::Var acoustic_logits(num::Binder& bind, const num::Tensor& spliced, std::size_t layers);

// Log-posteriors of every `frame_skip`-th frame; rows sum to 1 in
// probability space.
num::Tensor acoustic_log_probs(const HybridModel& model, const num::Tensor& features);

struct UtteranceDecode {
  std::vector<Segment> segments;
  std::vector<NBestEntry> nbest;  // empty segmentation gives one rank-0 entry
  bool empty() const { return segments.empty(); }
};

// Segments, decodes every segment (LM history carried over from the
// previous segments' one-best, end symbol only after the last) and merges
// the per-segment lists into the top-n concatenations.
UtteranceDecode decode_utterance(const HybridModel& model, const LmScorer& lm,
                                 const num::Tensor& features, const std::string& id = "");

// Single segment, no segmentation.
std::vector<NBestEntry> decode_first_pass(const HybridModel& model, const LmScorer& lm,
                                          const num::Tensor& features,
                                          const PrefixSearchOptions& opts,
                                          const LmContext& start = {});

}  // namespace hec::first_pass
