#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hec::eval {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference = 0;  // reference length

  std::size_t errors() const { return substitutions + deletions + insertions; }
  EditCounts& operator+=(const EditCounts& o);
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Unit-cost Levenshtein alignment. Among minimum-cost alignments the
// backtrace prefers substitution (or match), then insertion, then deletion.
EditCounts edit_distance(const std::vector<std::int64_t>& ref, const std::vector<std::int64_t>& hyp);

// Character tokens of each string, the space included.
EditCounts edit_distance(const std::string& ref, const std::string& hyp);

// Summed counts over utterances keyed by id; the two maps must cover the
// same ids.
EditCounts edit_counts(const std::map<std::string, std::string>& refs,
                       const std::map<std::string, std::string>& hyps);

// 100 * (S + D + I) / reference tokens, over utterances keyed by id. The
// two maps must cover the same ids.
double wer(const std::map<std::string, std::string>& refs,
           const std::map<std::string, std::string>& hyps);
double wer(const EditCounts& counts);

// (baseline - system) / baseline * 100, rounded to one decimal.
double werr(double baseline, double system);
double werr_exact(double baseline, double system);

}  // namespace hec::eval
