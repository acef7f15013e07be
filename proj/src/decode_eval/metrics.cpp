#include "hec/decode_eval/metrics.hpp"

#include <cmath>

#include "hec/error.hpp"

namespace hec::eval {

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference += o.reference;
  return *this;
}

EditCounts edit_distance(const std::vector<std::int64_t>& ref,
                         const std::vector<std::int64_t>& hyp) {
  const std::size_t R = ref.size(), H = hyp.size();
  std::vector<std::size_t> d((R + 1) * (H + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (H + 1) + j]; };
  for (std::size_t i = 0; i <= R; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= H; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= R; ++i) {
    for (std::size_t j = 1; j <= H; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]);
      at(i, j) = std::min({sub, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  EditCounts c;
  c.reference = R;
  std::size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      c.substitutions += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

EditCounts edit_distance(const std::string& ref, const std::string& hyp) {
  return edit_distance(std::vector<std::int64_t>(ref.begin(), ref.end()),
                       std::vector<std::int64_t>(hyp.begin(), hyp.end()));
}

double wer(const EditCounts& counts) {
  require(counts.reference > 0, ErrorKind::kInvalidArgument, "WER needs reference tokens");
  return 100.0 * static_cast<double>(counts.errors()) / static_cast<double>(counts.reference);
}

EditCounts edit_counts(const std::map<std::string, std::string>& refs,
                       const std::map<std::string, std::string>& hyps) {
  require(refs.size() == hyps.size(), ErrorKind::kInvalidArgument,
          "WER: " + std::to_string(refs.size()) + " references but " +
              std::to_string(hyps.size()) + " hypotheses");
  EditCounts total;
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    require(it != hyps.end(), ErrorKind::kInvalidArgument, "WER: no hypothesis for " + id);
    total += edit_distance(ref, it->second);
  }
  return total;
}

double wer(const std::map<std::string, std::string>& refs,
           const std::map<std::string, std::string>& hyps) {
  return wer(edit_counts(refs, hyps));
}

double werr_exact(double baseline, double system) {
  require(baseline > 0 && std::isfinite(baseline) && std::isfinite(system),
          ErrorKind::kInvalidArgument, "WERR needs a positive baseline");
  return (baseline - system) / baseline * 100.0;
}

double werr(double baseline, double system) {
  return std::round(werr_exact(baseline, system) * 10.0) / 10.0;
}

}  // namespace hec::eval
