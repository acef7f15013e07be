#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hec/config.hpp"
#include "hec/corpus/corpus.hpp"
#include "hec/first_pass/hybrid.hpp"
#include "hec/train/optimizer.hpp"

namespace hec::eval {

enum class ExperimentKind { kCombination, kRobustness, kBiasing };

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kCombination;
  corpus::CorpusSpec corpus;
  // When set, splits are read from this gen-data directory and every seed
  // shares them; otherwise each seed generates its own corpus.
  std::filesystem::path corpus_dir;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  first_pass::HybridConfig hybrid;
  train::TrainConfig first_train;
  train::TrainConfig second_train;
  std::string preset = "tiny";
  KeyValues aed;  // overrides on top of the preset
  std::size_t beam = 5;
  double bias_boost = 3.0;

  ExperimentConfig();
  void validate() const;
  // Flat keys: kind, seeds, preset, beam, bias_boost, corpus_dir, and
  // corpus.*, hybrid.*, first.*, second.*, aed.* for the nested configs.
  KeyValues to_key_values() const;
  static ExperimentConfig from_key_values(const KeyValues& kv);
};

struct ReportRow {
  std::string name;
  std::vector<double> values;
};

struct ExperimentReport {
  std::string title;
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;  // means over seeds
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<ReportRow>> per_seed;

  double at(const std::string& row, const std::string& column) const;
  double at_seed(std::size_t seed_index, const std::string& row, const std::string& column) const;
  // Aligned plain text; columns named werr* use one decimal, others two.
  std::string table() const;
  // "seed \t set \t <columns>", mean rows first (seed "mean"), full precision.
  std::string tsv() const;
  // Inverse of tsv(); the title is left empty.
  static ExperimentReport parse_tsv(const std::string& text);
};

// combination: hybrid, standalone AED, HEC-PCA and HEC-CCA on the matched,
// dialect and accent splits plus the word-weighted average.
// robustness: HEC-PCA trained on old-hybrid N-best, evaluated with the old
// hybrid and with a new hybrid trained on train + extra shifted data.
// biasing: entity recall and WER with and without an entity-biased LM, for
// the first pass and the full cascade.
ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* progress = nullptr);

}  // namespace hec::eval
