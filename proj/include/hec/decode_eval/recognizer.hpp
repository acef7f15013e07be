#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hec/decode_eval/beam_search.hpp"
#include "hec/first_pass/hybrid.hpp"
#include "hec/train/trainer.hpp"

namespace hec::eval {

struct Hypothesis {
  std::string id;
  double score = 0.0;
  std::string text;
  bool truncated = false;
};

using Hypotheses = std::vector<Hypothesis>;

// First-pass one-best per utterance (combined score).
Hypotheses decode_hybrid(const first_pass::HybridModel& model, const first_pass::LmScorer& lm,
                         const corpus::Dataset& data);

// Joint beam search per prepared example (joint score).
Hypotheses decode_second_pass(const second_pass::AEDModel& model,
                              const std::vector<train::SecondPassExample>& data,
                              const corpus::Tokenizer& tokenizer, const BeamOptions& opts);

std::map<std::string, std::string> texts(const Hypotheses& hyps);
std::map<std::string, std::string> references(const corpus::Dataset& data);

// Lines "id \t score \t text".
void write_hypotheses(const std::filesystem::path& path, const Hypotheses& hyps);
Hypotheses read_hypotheses(const std::filesystem::path& path);

// Share of reference entity occurrences found as whole words in the
// hypothesis of the same utterance.
double entity_recall(const std::map<std::string, std::string>& refs,
                     const std::map<std::string, std::string>& hyps,
                     const std::vector<std::string>& entities);

}  // namespace hec::eval
