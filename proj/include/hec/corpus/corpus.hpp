#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hec/config.hpp"
#include "hec/corpus/tokenizer.hpp"
#include "hec/numerics/tensor.hpp"

namespace hec::corpus {

// One utterance: features are T x D (values exactly representable in float32).
struct Utterance {
  std::string id;
  num::Tensor features;
  std::string transcript;

  std::size_t frames() const { return features.dim(0); }
};

using Dataset = std::vector<Utterance>;

// Acoustic recording condition of a split.
enum class Condition { kMatched, kDialect, kAccent };

// Word-frequency profile of a split.
enum class Lexical {
  kPaired,    // paired audio-text training distribution
  kDialect,   // skewed toward regional words
  kEntity,    // one rare entity word per utterance
  kLmText,    // text-only language-model data
};

struct CorpusSpec {
  std::uint64_t seed = 1;
  std::size_t feature_dim = 16;
  std::string alphabet = "abcdefghijkl";
  // Explicit vocabulary; when empty, core/regional/entity words are drawn
  // from the alphabet.
  std::vector<std::string> words;
  std::size_t core_words = 40;
  std::size_t regional_words = 20;
  std::size_t entity_words = 12;
  std::size_t min_word_chars = 2;
  std::size_t max_word_chars = 4;
  std::size_t min_char_frames = 4;
  std::size_t max_char_frames = 8;
  std::size_t space_frames = 4;
  std::size_t min_words = 2;
  std::size_t max_words = 4;
  std::size_t min_silence = 6;
  std::size_t max_silence = 14;
  double pause_prob = 0.1;
  std::size_t pause_frames = 30;
  double noise = 3.0;
  double silence_level = 0.02;
  double coarticulation = 0.3;
  double zipf = 1.0;
  double regional_rate = 0.05;     // regional-word share of paired data
  double lm_regional_rate = 0.3;   // regional-word share of LM text
  double dialect_shift = 0.4;      // template perturbation magnitude
  double dialect_skew = 0.5;       // regional-word share of the dialect split
  double dialect_noise = 3.0;
  double accent_shift = 0.5;
  double accent_noise = 1.5;
  std::size_t train_count = 2000;
  std::size_t test_count = 200;   // per test split, entity split included
  std::size_t extra_count = 1000; // shifted training data, half dialect, half accent
  std::size_t lm_count = 20000;   // LM text sentences

  void validate() const;
  KeyValues to_key_values() const;
  static CorpusSpec from_key_values(const KeyValues& kv);
};

// Word inventory and acoustic prototypes derived from a spec.
struct Lexicon {
  std::vector<std::string> core;
  std::vector<std::string> regional;
  std::vector<std::string> entities;
  std::string symbols;  // alphabet plus the word separator ' '
  // One unit-RMS prototype frame per symbol, indexed like `symbols`.
  std::vector<std::vector<double>> prototypes;
  // Per-word, per-character durations and coarticulation offsets.
  std::vector<std::vector<std::size_t>> durations;
  std::vector<std::vector<std::vector<double>>> offsets;

  std::vector<std::string> all_words() const;
};

Lexicon build_lexicon(const CorpusSpec& spec);

// Canonical frames of a word under a recording condition.
num::Tensor word_template(const CorpusSpec& spec, const Lexicon& lex, const std::string& word,
                          Condition condition);

struct Corpus {
  Tokenizer tokenizer;
  Lexicon lexicon;
  Dataset train;
  Dataset matched;
  Dataset dialect;
  Dataset accent;
  Dataset entity;  // matched condition, one entity word per utterance; empty without entities
  Dataset extra;   // additional shifted training data
  std::vector<std::string> lm_text;
};

// All splits; deterministic under spec.seed.
Corpus generate_corpus(const CorpusSpec& spec);

// Additional utterances from an independent random stream named `stream`.
Dataset generate_split(const CorpusSpec& spec, const Lexicon& lex, Condition condition,
                       Lexical lexical, std::size_t count, const std::string& stream);

// Text-only sentences for language-model training.
std::vector<std::string> generate_lm_text(const CorpusSpec& spec, const Lexicon& lex,
                                          std::size_t count);

Tokenizer make_tokenizer(const Lexicon& lex);

// Mean absolute per-dimension deviation between each word's template under
// `condition` and its matched template.
double mean_template_deviation(const CorpusSpec& spec, const Lexicon& lex, Condition condition);

std::mt19937_64 stream_rng(std::uint64_t seed, const std::string& stream);

// Manifest: UTF-8 lines "id \t transcript \t feature-path" (path relative to
// the manifest directory). Feature file: little-endian u32 T, u32 D, then
// T x D float32 row-major.
void write_dataset(const std::filesystem::path& manifest, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& manifest);
void write_features(const std::filesystem::path& path, const num::Tensor& features);
num::Tensor read_features(const std::filesystem::path& path);

// Directory layout: spec.txt, lm_text.txt and one manifest per split
// (<split>.tsv with features under <split>_feats/). The lexicon and
// tokenizer are rebuilt from the spec.
void write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir, CorpusSpec* spec = nullptr);

}  // namespace hec::corpus
