#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hec/corpus/corpus.hpp"
#include "hec/first_pass/hybrid.hpp"

namespace hec::first_pass {

// Utterance id -> ranked hypotheses. An utterance without detected speech
// holds a single rank-0 entry with an empty token sequence.
using NBestCache = std::map<std::string, std::vector<NBestEntry>>;

NBestCache build_nbest_cache(const HybridModel& model, const LmScorer& lm,
                             const corpus::Dataset& data);

// One-best tokens of `id`; rejects a missing id.
const TokenSeq& one_best(const NBestCache& cache, const std::string& id);

// Lines "id \t rank \t acoustic \t lm \t combined \t space-joined token ids",
// utterances in id order, entries in rank order. Scores use the shortest
// round-trip decimal form.
void write_nbest_cache(const std::filesystem::path& path, const NBestCache& cache);
NBestCache read_nbest_cache(const std::filesystem::path& path);

}  // namespace hec::first_pass
