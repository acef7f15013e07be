#include "hec/decode_eval/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hec/decode_eval/metrics.hpp"
#include "hec/decode_eval/recognizer.hpp"
#include "hec/error.hpp"
#include "hec/first_pass/nbest_cache.hpp"
#include "hec/train/trainer.hpp"

namespace hec::eval {

namespace {

using Clock = std::chrono::steady_clock;
using TextMap = std::map<std::string, std::string>;

KeyValues with_prefix(const KeyValues& kv, const std::string& prefix) {
  KeyValues out;
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind(prefix, 0) == 0) out.set(k.substr(prefix.size()), v);
  }
  return out;
}

void add_prefixed(KeyValues& out, const KeyValues& kv, const std::string& prefix) {
  for (const auto& [k, v] : kv.entries()) out.set(prefix + k, v);
}

class Progress {
 public:
  explicit Progress(std::ostream* os) : os_(os), start_(Clock::now()) {}
  void operator()(const std::string& msg) const {
    if (!os_) return;
    const double s = std::chrono::duration<double>(Clock::now() - start_).count();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "[%7.1fs] ", s);
    *os_ << buf << msg << std::endl;
  }

 private:
  std::ostream* os_;
  Clock::time_point start_;
};

struct SeedData {
  corpus::Corpus corpus;
  corpus::CorpusSpec spec;
};

SeedData load_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData d;
  if (!cfg.corpus_dir.empty()) {
    d.corpus = corpus::read_corpus(cfg.corpus_dir, &d.spec);
  } else {
    d.spec = cfg.corpus;
    d.spec.seed = seed;
    d.corpus = corpus::generate_corpus(d.spec);
  }
  return d;
}

train::TrainConfig seeded(train::TrainConfig t, std::uint64_t seed) {
  t.seed = seed;
  return t;
}

second_pass::AEDConfig aed_config(const ExperimentConfig& cfg, const SeedData& d,
                                  second_pass::Structure structure) {
  KeyValues kv = cfg.aed;
  kv.set("preset", cfg.preset);
  kv.set("vocab", static_cast<std::uint64_t>(d.corpus.tokenizer.size()));
  kv.set("feature_dim", static_cast<std::uint64_t>(d.spec.feature_dim));
  kv.set("decoder_structure", second_pass::structure_name(structure));
  return second_pass::AEDConfig::from_key_values(kv);
}

first_pass::HybridModel train_hybrid(const ExperimentConfig& cfg, const SeedData& d,
                                     const corpus::Dataset& data, std::uint64_t seed) {
  return train::train_first_pass(data, d.corpus.lm_text, d.corpus.tokenizer, cfg.hybrid,
                                 seeded(cfg.first_train, seed))
      .model;
}

second_pass::AEDModel train_aed(const ExperimentConfig& cfg, const SeedData& d,
                                const first_pass::NBestCache* cache,
                                second_pass::Structure structure, std::uint64_t seed) {
  const auto ex = train::prepare_second_pass(d.corpus.train, cache, d.corpus.tokenizer,
                                             cfg.hybrid.segmenter);
  return train::train_second_pass(ex, aed_config(cfg, d, structure), seeded(cfg.second_train, seed))
      .model;
}

TextMap onebest_texts(const first_pass::NBestCache& cache, const corpus::Tokenizer& tok) {
  TextMap out;
  for (const auto& [id, entries] : cache) out[id] = tok.decode(entries.front().tokens);
  return out;
}

TextMap second_pass_texts(const ExperimentConfig& cfg, const SeedData& d,
                          const second_pass::AEDModel& model, const corpus::Dataset& split,
                          const first_pass::NBestCache* cache) {
  const auto ex = train::prepare_second_pass(split, cache, d.corpus.tokenizer, cfg.hybrid.segmenter);
  BeamOptions opts;
  opts.beam = cfg.beam;
  return texts(decode_second_pass(model, ex, d.corpus.tokenizer, opts));
}

// Per-split edit counts for each system, plus the pooled "avg" row.
struct Scores {
  std::vector<std::string> splits;
  std::vector<std::vector<EditCounts>> counts;  // [split][system]

  void add(const std::string& split, const TextMap& refs, const std::vector<TextMap>& hyps) {
    splits.push_back(split);
    counts.emplace_back();
    for (const auto& h : hyps) counts.back().push_back(edit_counts(refs, h));
  }

  std::vector<ReportRow> rows(const std::string& avg_name) const {
    std::vector<ReportRow> out;
    std::vector<EditCounts> pooled(counts.front().size());
    for (std::size_t s = 0; s < splits.size(); ++s) {
      ReportRow r{splits[s], {}};
      for (std::size_t k = 0; k < counts[s].size(); ++k) {
        r.values.push_back(wer(counts[s][k]));
        pooled[k] += counts[s][k];
      }
      out.push_back(std::move(r));
    }
    ReportRow avg{avg_name, {}};
    for (const auto& c : pooled) avg.values.push_back(wer(c));
    out.push_back(std::move(avg));
    return out;
  }
};

std::vector<ReportRow> run_combination(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const Progress& log) {
  const SeedData d = load_data(cfg, seed);
  log("seed " + std::to_string(seed) + ": corpus ready");
  const auto hybrid = train_hybrid(cfg, d, d.corpus.train, seed);
  const first_pass::LmScorer lm(hybrid.lm);
  const auto cache = first_pass::build_nbest_cache(hybrid, lm, d.corpus.train);
  log("seed " + std::to_string(seed) + ": first pass trained");
  const auto aed = train_aed(cfg, d, nullptr, second_pass::Structure::kNone, seed);
  log("seed " + std::to_string(seed) + ": aed trained");
  const auto pca = train_aed(cfg, d, &cache, second_pass::Structure::kPca, seed);
  log("seed " + std::to_string(seed) + ": hec-pca trained");
  const auto cca = train_aed(cfg, d, &cache, second_pass::Structure::kCca, seed);
  log("seed " + std::to_string(seed) + ": hec-cca trained");

  Scores scores;
  const std::pair<const char*, const corpus::Dataset*> splits[] = {
      {"matched", &d.corpus.matched}, {"dialect", &d.corpus.dialect}, {"accent", &d.corpus.accent}};
  for (const auto& [name, split] : splits) {
    const auto test_cache = first_pass::build_nbest_cache(hybrid, lm, *split);
    scores.add(name, references(*split),
               {onebest_texts(test_cache, d.corpus.tokenizer),
                second_pass_texts(cfg, d, aed, *split, nullptr),
                second_pass_texts(cfg, d, pca, *split, &test_cache),
                second_pass_texts(cfg, d, cca, *split, &test_cache)});
  }
  log("seed " + std::to_string(seed) + ": decoded");
  auto rows = scores.rows("avg");
  for (auto& r : rows) {
    r.values.push_back(werr_exact(r.values[0], r.values[2]));
    r.values.push_back(werr_exact(r.values[1], r.values[2]));
  }
  return rows;
}

std::vector<ReportRow> run_robustness(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const Progress& log) {
  const SeedData d = load_data(cfg, seed);
  require(!d.corpus.extra.empty(), ErrorKind::kInvalidArgument,
          "robustness experiment needs extra shifted training data (extra_count > 0)");
  const auto old_hybrid = train_hybrid(cfg, d, d.corpus.train, seed);
  corpus::Dataset extended = d.corpus.train;
  extended.insert(extended.end(), d.corpus.extra.begin(), d.corpus.extra.end());
  const auto new_hybrid = train_hybrid(cfg, d, extended, seed);
  const first_pass::LmScorer old_lm(old_hybrid.lm), new_lm(new_hybrid.lm);
  const auto cache = first_pass::build_nbest_cache(old_hybrid, old_lm, d.corpus.train);
  log("seed " + std::to_string(seed) + ": first passes trained");
  const auto pca = train_aed(cfg, d, &cache, second_pass::Structure::kPca, seed);
  log("seed " + std::to_string(seed) + ": hec-pca trained");

  Scores scores;
  const std::pair<const char*, const corpus::Dataset*> splits[] = {
      {"matched", &d.corpus.matched}, {"dialect", &d.corpus.dialect}, {"accent", &d.corpus.accent}};
  for (const auto& [name, split] : splits) {
    const auto old_cache = first_pass::build_nbest_cache(old_hybrid, old_lm, *split);
    const auto new_cache = first_pass::build_nbest_cache(new_hybrid, new_lm, *split);
    scores.add(name, references(*split),
               {onebest_texts(old_cache, d.corpus.tokenizer),
                onebest_texts(new_cache, d.corpus.tokenizer),
                second_pass_texts(cfg, d, pca, *split, &old_cache),
                second_pass_texts(cfg, d, pca, *split, &new_cache)});
  }
  log("seed " + std::to_string(seed) + ": decoded");
  return scores.rows("avg");
}

std::vector<ReportRow> run_biasing(const ExperimentConfig& cfg, std::uint64_t seed,
                                   const Progress& log) {
  const SeedData d = load_data(cfg, seed);
  const auto& tok = d.corpus.tokenizer;
  const auto hybrid = train_hybrid(cfg, d, d.corpus.train, seed);
  const first_pass::LmScorer plain(hybrid.lm);
  std::vector<corpus::TokenSeq> phrases;
  for (const auto& e : d.corpus.lexicon.entities) phrases.push_back(tok.encode(e));
  const first_pass::LmScorer biased = first_pass::bias_lm(hybrid.lm, phrases, cfg.bias_boost);
  const auto cache = first_pass::build_nbest_cache(hybrid, plain, d.corpus.train);
  log("seed " + std::to_string(seed) + ": first pass trained");
  const auto pca = train_aed(cfg, d, &cache, second_pass::Structure::kPca, seed);
  log("seed " + std::to_string(seed) + ": hec-pca trained");

  Scores scores;
  ReportRow recall{"entity-recall", {}};
  const std::pair<const char*, const corpus::Dataset*> splits[] = {
      {"entity", &d.corpus.entity}, {"matched", &d.corpus.matched}};
  for (const auto& [name, split] : splits) {
    const auto plain_cache = first_pass::build_nbest_cache(hybrid, plain, *split);
    const auto biased_cache = first_pass::build_nbest_cache(hybrid, biased, *split);
    const std::vector<TextMap> hyps{onebest_texts(plain_cache, tok), onebest_texts(biased_cache, tok),
                                    second_pass_texts(cfg, d, pca, *split, &plain_cache),
                                    second_pass_texts(cfg, d, pca, *split, &biased_cache)};
    const auto refs = references(*split);
    scores.add(name, refs, hyps);
    if (split == &d.corpus.entity) {
      for (const auto& h : hyps) {
        recall.values.push_back(100.0 * entity_recall(refs, h, d.corpus.lexicon.entities));
      }
    }
  }
  log("seed " + std::to_string(seed) + ": decoded");
  auto rows = scores.rows("overall");
  rows.insert(rows.begin(), recall);
  return rows;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kCombination: return "combination";
    case ExperimentKind::kRobustness: return "robustness";
    case ExperimentKind::kBiasing: return "biasing";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
  if (name == "combination") return ExperimentKind::kCombination;
  if (name == "robustness") return ExperimentKind::kRobustness;
  if (name == "biasing") return ExperimentKind::kBiasing;
  fail(ErrorKind::kInvalidArgument,
       "unknown experiment kind '" + name + "' (combination|robustness|biasing)");
}

ExperimentConfig::ExperimentConfig() {
  first_train.epochs = 4;
  first_train.batch_size = 256;
  first_train.warmup_steps = 100;
  second_train.epochs = 10;
  second_train.batch_size = 8;
  second_train.warmup_steps = 100;
}

void ExperimentConfig::validate() const {
  require(!seeds.empty(), ErrorKind::kInvalidArgument, "experiment needs at least one seed");
  require(beam >= 1, ErrorKind::kInvalidArgument, "beam must be at least 1");
  require(bias_boost >= 0, ErrorKind::kInvalidArgument, "bias_boost must be non-negative");
  if (corpus_dir.empty()) corpus.validate();
  hybrid.validate();
  first_train.validate();
  second_train.validate();
}

KeyValues ExperimentConfig::to_key_values() const {
  KeyValues kv;
  kv.set("kind", kind_name(kind));
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  kv.set("seeds", s);
  kv.set("preset", preset);
  kv.set("beam", static_cast<std::uint64_t>(beam));
  kv.set("bias_boost", bias_boost);
  if (!corpus_dir.empty()) kv.set("corpus_dir", corpus_dir.string());
  add_prefixed(kv, corpus.to_key_values(), "corpus.");
  add_prefixed(kv, hybrid.to_key_values(), "hybrid.");
  add_prefixed(kv, first_train.to_key_values(), "first.");
  add_prefixed(kv, second_train.to_key_values(), "second.");
  add_prefixed(kv, aed, "aed.");
  return kv;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
  ExperimentConfig c;
  c.kind = parse_kind(kv.get("kind", kind_name(c.kind)));
  if (kv.has("seeds")) {
    c.seeds.clear();
    for (const auto& s : kv.get_list("seeds")) {
      KeyValues one;
      one.set("seed", s);
      c.seeds.push_back(one.get_uint("seed", 0));
    }
  }
  c.preset = kv.get("preset", c.preset);
  c.beam = kv.get_size("beam", c.beam);
  c.bias_boost = kv.get_double("bias_boost", c.bias_boost);
  c.corpus_dir = kv.get("corpus_dir", "");
  c.corpus = corpus::CorpusSpec::from_key_values(with_prefix(kv, "corpus."));
  c.hybrid = first_pass::HybridConfig::from_key_values(with_prefix(kv, "hybrid."));
  // Nested training configs start from the experiment defaults.
  KeyValues first = c.first_train.to_key_values(), second = c.second_train.to_key_values();
  const KeyValues first_kv = with_prefix(kv, "first."), second_kv = with_prefix(kv, "second.");
  for (const auto& [k, v] : first_kv.entries()) first.set(k, v);
  for (const auto& [k, v] : second_kv.entries()) second.set(k, v);
  c.first_train = train::TrainConfig::from_key_values(first);
  c.second_train = train::TrainConfig::from_key_values(second);
  c.aed = with_prefix(kv, "aed.");
  c.validate();
  return c;
}

double ExperimentReport::at(const std::string& row, const std::string& column) const {
  const auto c = std::find(columns.begin(), columns.end(), column);
  require(c != columns.end(), ErrorKind::kNotFound, "report has no column '" + column + "'");
  for (const auto& r : rows) {
    if (r.name == row) return r.values[static_cast<std::size_t>(c - columns.begin())];
  }
  fail(ErrorKind::kNotFound, "report has no row '" + row + "'");
}

double ExperimentReport::at_seed(std::size_t seed_index, const std::string& row,
                                 const std::string& column) const {
  require(seed_index < per_seed.size(), ErrorKind::kNotFound, "seed index out of range");
  ExperimentReport one;
  one.columns = columns;
  one.rows = per_seed[seed_index];
  return one.at(row, column);
}

std::string ExperimentReport::table() const {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"test set"});
  for (const auto& c : columns) cells.back().push_back(c);
  for (const auto& r : rows) {
    cells.push_back({r.name});
    for (std::size_t k = 0; k < r.values.size(); ++k) {
      cells.back().push_back(fixed(r.values[k], columns[k].rfind("werr", 0) == 0 ? 1 : 2));
    }
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], line[k].size());
  }
  std::ostringstream os;
  os << title << "  (mean over seeds";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : " ") << seeds[i];
  os << ")\n";
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      const std::string pad(width[k] - line[k].size(), ' ');
      if (k == 0) {
        os << line[k] << pad;
      } else {
        os << "  " << pad << line[k];
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string ExperimentReport::tsv() const {
  std::ostringstream os;
  os << "seed\tset";
  for (const auto& c : columns) os << '\t' << c;
  os << '\n';
  const auto emit = [&](const std::string& seed, const std::vector<ReportRow>& rs) {
    for (const auto& r : rs) {
      os << seed << '\t' << r.name;
      for (double v : r.values) os << '\t' << format_double(v);
      os << '\n';
    }
  };
  emit("mean", rows);
  for (std::size_t i = 0; i < per_seed.size(); ++i) emit(std::to_string(seeds[i]), per_seed[i]);
  return os.str();
}

ExperimentReport ExperimentReport::parse_tsv(const std::string& text) {
  const auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, '\t')) out.push_back(field);
    return out;
  };
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::kIo, "empty report");
  auto header = split(line);
  require(header.size() > 2 && header[0] == "seed" && header[1] == "set", ErrorKind::kIo,
          "report header must start with seed and set");
  ExperimentReport r;
  r.columns.assign(header.begin() + 2, header.end());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line);
    require(f.size() == header.size(), ErrorKind::kIo,
            "report line " + std::to_string(lineno) + ": expected " +
                std::to_string(header.size()) + " fields");
    ReportRow row{f[1], {}};
    for (std::size_t i = 2; i < f.size(); ++i) {
      std::size_t used = 0;
      try {
        row.values.push_back(std::stod(f[i], &used));
      } catch (const std::exception&) {
      }
      if (used != f[i].size() || f[i].empty()) {
        fail(ErrorKind::kIo, "report line " + std::to_string(lineno) + ": bad number '" + f[i] + "'");
      }
    }
    if (f[0] == "mean") {
      r.rows.push_back(std::move(row));
      continue;
    }
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(f[0]);
    } catch (const std::exception&) {
      fail(ErrorKind::kIo, "report line " + std::to_string(lineno) + ": bad seed '" + f[0] + "'");
    }
    if (r.seeds.empty() || r.seeds.back() != seed) {
      r.seeds.push_back(seed);
      r.per_seed.emplace_back();
    }
    r.per_seed.back().push_back(std::move(row));
  }
  return r;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* progress) {
  config.validate();
  if (!config.corpus_dir.empty()) {
    require(std::filesystem::exists(config.corpus_dir), ErrorKind::kNotFound,
            "missing corpus directory " + config.corpus_dir.string());
  }
  const Progress log(progress);
  ExperimentReport report;
  report.seeds = config.seeds;
  switch (config.kind) {
    case ExperimentKind::kCombination:
      report.title = "combination: WER (%) and WERR (%) of HEC-PCA";
      report.columns = {"hybrid", "aed", "hec-pca", "hec-cca", "werr-vs-hybrid", "werr-vs-aed"};
      break;
    case ExperimentKind::kRobustness:
      report.title = "robustness: WER (%) with old and new first pass";
      report.columns = {"old-hybrid", "new-hybrid", "hec-old", "hec-new"};
      break;
    case ExperimentKind::kBiasing:
      report.title = "biasing: entity recall (%) and WER (%)";
      report.columns = {"fp-plain", "fp-biased", "hec-plain", "hec-biased"};
      break;
  }
  for (std::uint64_t seed : config.seeds) {
    switch (config.kind) {
      case ExperimentKind::kCombination:
        report.per_seed.push_back(run_combination(config, seed, log));
        break;
      case ExperimentKind::kRobustness:
        report.per_seed.push_back(run_robustness(config, seed, log));
        break;
      case ExperimentKind::kBiasing:
        report.per_seed.push_back(run_biasing(config, seed, log));
        break;
    }
  }
  report.rows = report.per_seed.front();
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    for (std::size_t k = 0; k < report.rows[r].values.size(); ++k) {
      double sum = 0;
      for (const auto& s : report.per_seed) sum += s[r].values[k];
      report.rows[r].values[k] = sum / static_cast<double>(report.per_seed.size());
    }
  }
  // WERR of the mean WERs, not the mean of per-seed WERRs.
  if (config.kind == ExperimentKind::kCombination) {
    for (auto& r : report.rows) {
      r.values[4] = werr_exact(r.values[0], r.values[2]);
      r.values[5] = werr_exact(r.values[1], r.values[2]);
    }
  }
  return report;
}

}  // namespace hec::eval
