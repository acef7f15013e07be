#include "hec/first_pass/nbest_cache.hpp"

#include <fstream>
#include <sstream>

#include "hec/config.hpp"
#include "hec/error.hpp"

namespace hec::first_pass {

NBestCache build_nbest_cache(const HybridModel& model, const LmScorer& lm,
                             const corpus::Dataset& data) {
  NBestCache cache;
  for (const auto& u : data) {
    require(!cache.count(u.id), ErrorKind::kInvalidArgument, "duplicate utterance id " + u.id);
    cache[u.id] = decode_utterance(model, lm, u.features, u.id).nbest;
  }
  return cache;
}

const TokenSeq& one_best(const NBestCache& cache, const std::string& id) {
  auto it = cache.find(id);
  require(it != cache.end() && !it->second.empty(), ErrorKind::kNotFound,
          "no N-best entry for utterance " + id);
  return it->second.front().tokens;
}

void write_nbest_cache(const std::filesystem::path& path, const NBestCache& cache) {
  std::ofstream os(path);
  require(os.good(), ErrorKind::kIo, "cannot write N-best cache " + path.string());
  for (const auto& [id, entries] : cache) {
    for (const auto& e : entries) {
      os << id << '\t' << e.rank << '\t' << format_double(e.acoustic) << '\t'
         << format_double(e.lm) << '\t' << format_double(e.combined) << '\t';
      for (std::size_t i = 0; i < e.tokens.size(); ++i) os << (i ? " " : "") << e.tokens[i];
      os << '\n';
    }
  }
  require(os.good(), ErrorKind::kIo, "failed writing N-best cache " + path.string());
}

NBestCache read_nbest_cache(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::kNotFound, "missing N-best cache " + path.string());
  NBestCache cache;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (line.back() == '\t') cols.emplace_back();
    require(cols.size() == 6, ErrorKind::kIo,
            path.string() + ":" + std::to_string(lineno) + ": expected 6 columns");
    NBestEntry e;
    try {
      e.rank = std::stoi(cols[1]);
      e.acoustic = std::stod(cols[2]);
      e.lm = std::stod(cols[3]);
      e.combined = std::stod(cols[4]);
    } catch (const std::exception&) {
      fail(ErrorKind::kIo, path.string() + ":" + std::to_string(lineno) + ": malformed score");
    }
    std::istringstream ts(cols[5]);
    for (TokenId t; ts >> t;) e.tokens.push_back(t);
    cache[cols[0]].push_back(std::move(e));
  }
  return cache;
}

}  // namespace hec::first_pass
