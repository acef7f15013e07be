#include "hec/decode_eval/recognizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hec/error.hpp"

namespace hec::eval {

namespace {

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace

Hypotheses decode_hybrid(const first_pass::HybridModel& model, const first_pass::LmScorer& lm,
                         const corpus::Dataset& data) {
  Hypotheses out;
  out.reserve(data.size());
  for (const auto& u : data) {
    const auto d = first_pass::decode_utterance(model, lm, u.features, u.id);
    const auto& best = d.nbest.front();
    out.push_back({u.id, best.combined, model.tokenizer.decode(best.tokens), false});
  }
  return out;
}

Hypotheses decode_second_pass(const second_pass::AEDModel& model,
                              const std::vector<train::SecondPassExample>& data,
                              const corpus::Tokenizer& tokenizer, const BeamOptions& opts) {
  Hypotheses out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    const BeamResult r = recognize(model, ex.features, ex.onebest, opts);
    out.push_back({ex.id, r.joint, tokenizer.decode(r.tokens), r.truncated});
  }
  return out;
}

std::map<std::string, std::string> texts(const Hypotheses& hyps) {
  std::map<std::string, std::string> out;
  for (const auto& h : hyps) out[h.id] = h.text;
  return out;
}

std::map<std::string, std::string> references(const corpus::Dataset& data) {
  std::map<std::string, std::string> out;
  for (const auto& u : data) out[u.id] = u.transcript;
  return out;
}

void write_hypotheses(const std::filesystem::path& path, const Hypotheses& hyps) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::kIo, "cannot write hypotheses " + path.string());
  for (const auto& h : hyps) os << h.id << '\t' << format_double(h.score) << '\t' << h.text << '\n';
}

Hypotheses read_hypotheses(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kNotFound, "missing hypotheses " + path.string());
  Hypotheses out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    require(b != std::string::npos, ErrorKind::kIo,
            "malformed hypothesis line '" + line + "' in " + path.string());
    Hypothesis h;
    h.id = line.substr(0, a);
    h.score = std::stod(line.substr(a + 1, b - a - 1));
    h.text = line.substr(b + 1);
    out.push_back(std::move(h));
  }
  return out;
}

double entity_recall(const std::map<std::string, std::string>& refs,
                     const std::map<std::string, std::string>& hyps,
                     const std::vector<std::string>& entities) {
  const std::set<std::string> ents(entities.begin(), entities.end());
  std::size_t total = 0, found = 0;
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    require(it != hyps.end(), ErrorKind::kInvalidArgument, "no hypothesis for " + id);
    auto hyp_words = words_of(it->second);
    for (const auto& w : words_of(ref)) {
      if (!ents.count(w)) continue;
      ++total;
      auto pos = std::find(hyp_words.begin(), hyp_words.end(), w);
      if (pos != hyp_words.end()) {
        ++found;
        hyp_words.erase(pos);
      }
    }
  }
  require(total > 0, ErrorKind::kInvalidArgument, "references contain no entity words");
  return static_cast<double>(found) / static_cast<double>(total);
}

}  // namespace hec::eval
