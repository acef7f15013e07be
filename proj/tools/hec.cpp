// Command-line front end: data generation, the two training stages,
// decoding, scoring and the experiment runner.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hec/config.hpp"
#include "hec/corpus/corpus.hpp"
#include "hec/decode_eval/experiment.hpp"
#include "hec/decode_eval/metrics.hpp"
#include "hec/decode_eval/recognizer.hpp"
#include "hec/error.hpp"
#include "hec/first_pass/hybrid.hpp"
#include "hec/first_pass/nbest_cache.hpp"
#include "hec/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace hec;

namespace {

struct Settings {
  std::string config;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key=value config file");
    app->add_option("--set", sets, "key=value override (repeatable)");
  }

  KeyValues load() const {
    KeyValues kv = config.empty() ? KeyValues{} : KeyValues::load(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      require(eq != std::string::npos && eq > 0, ErrorKind::kInvalidArgument,
              "--set expects key=value, got '" + s + "'");
      kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    return kv;
  }
};

KeyValues with_prefix(const KeyValues& kv, const std::string& prefix) {
  KeyValues out;
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind(prefix, 0) == 0) out.set(k.substr(prefix.size()), v);
  }
  return out;
}

const corpus::Dataset& split_of(const corpus::Corpus& c, const std::string& name) {
  if (name == "train") return c.train;
  if (name == "matched") return c.matched;
  if (name == "dialect") return c.dialect;
  if (name == "accent") return c.accent;
  if (name == "entity") return c.entity;
  if (name == "extra") return c.extra;
  fail(ErrorKind::kInvalidArgument, "unknown split '" + name + "'");
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kNotFound, "cannot open " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

// First-pass search flags shared by decode-first, cache-nbest and decode.
struct FirstPassFlags {
  std::size_t beam = 0;
  std::size_t n = 0;
  double lm_scale = -1.0;
  std::string boost_list;
  double boost = 3.0;

  void attach(CLI::App* app, bool with_beam) {
    if (with_beam) app->add_option("--beam", beam, "prefix beam width");
    app->add_option("--n", n, "N-best size");
    app->add_option("--lm-scale", lm_scale, "LM weight");
    app->add_option("--boost-list", boost_list, "biasing phrases, one per line");
    app->add_option("--boost", boost, "per-token biasing bonus");
  }

  void apply(first_pass::HybridModel& m) const {
    if (beam) m.config.beam = beam;
    if (n) m.config.nbest = n;
    if (lm_scale >= 0) m.config.lm_scale = lm_scale;
    m.config.validate();
  }

  first_pass::LmScorer scorer(const first_pass::HybridModel& m) const {
    if (boost_list.empty()) return first_pass::LmScorer(m.lm);
    std::vector<corpus::TokenSeq> phrases;
    for (const auto& p : read_lines(boost_list)) phrases.push_back(m.tokenizer.encode(p));
    return first_pass::bias_lm(m.lm, phrases, boost);
  }
};

struct Paths {
  std::string data, split = "matched", model, cache, out;
};

int gen_data(const Settings& s, const Paths& p) {
  const auto spec = corpus::CorpusSpec::from_key_values(s.load());
  const auto c = corpus::generate_corpus(spec);
  corpus::write_corpus(p.out, spec, c);
  std::printf("wrote %zu train, %zu extra and %zu test utterances to %s\n", c.train.size(),
              c.extra.size(), c.matched.size() + c.dialect.size() + c.accent.size() + c.entity.size(),
              p.out.c_str());
  return 0;
}

int train_first(const Settings& s, const Paths& p, bool with_extra) {
  const auto kv = s.load();
  const auto c = corpus::read_corpus(p.data);
  auto data = c.train;
  if (with_extra) data.insert(data.end(), c.extra.begin(), c.extra.end());
  const auto r = train::train_first_pass(data, c.lm_text, c.tokenizer,
                                         first_pass::HybridConfig::from_key_values(kv),
                                         train::TrainConfig::from_key_values(with_prefix(kv, "train.")));
  r.model.save(p.out);
  r.log.write(fs::path(p.out) / "train_log.tsv");
  std::printf("trained on %zu utterances (%zu skipped), final epoch loss %s\n", data.size(),
              r.skipped, format_double(r.log.epoch_loss.back()).c_str());
  return 0;
}

int decode_first(const Paths& p, const FirstPassFlags& f) {
  auto model = first_pass::HybridModel::load(p.model);
  f.apply(model);
  const auto c = corpus::read_corpus(p.data);
  const auto sc = f.scorer(model);
  eval::write_hypotheses(p.out, eval::decode_hybrid(model, sc, split_of(c, p.split)));
  return 0;
}

int cache_nbest(const Paths& p, const FirstPassFlags& f) {
  auto model = first_pass::HybridModel::load(p.model);
  f.apply(model);
  const auto c = corpus::read_corpus(p.data);
  const auto sc = f.scorer(model);
  first_pass::write_nbest_cache(p.out, first_pass::build_nbest_cache(model, sc, split_of(c, p.split)));
  return 0;
}

int train_second(const Settings& s, const Paths& p, const std::string& structure,
                 const std::string& preset) {
  auto kv = s.load();
  const auto st = second_pass::parse_structure(structure);
  require(st == second_pass::Structure::kNone || !p.cache.empty(), ErrorKind::kInvalidArgument,
          "--structure " + structure + " needs --cache");
  corpus::CorpusSpec spec;
  const auto c = corpus::read_corpus(p.data, &spec);
  const auto cache = p.cache.empty() ? first_pass::NBestCache{}
                                     : first_pass::read_nbest_cache(p.cache);
  const auto seg = first_pass::HybridConfig::from_key_values(with_prefix(kv, "hybrid.")).segmenter;
  const auto ex = train::prepare_second_pass(c.train, p.cache.empty() ? nullptr : &cache,
                                             c.tokenizer, seg);
  KeyValues aed = with_prefix(kv, "aed.");
  aed.set("preset", preset);
  aed.set("vocab", static_cast<std::uint64_t>(c.tokenizer.size()));
  aed.set("feature_dim", static_cast<std::uint64_t>(spec.feature_dim));
  aed.set("decoder_structure", structure);
  const auto r = train::train_second_pass(ex, second_pass::AEDConfig::from_key_values(aed),
                                          train::TrainConfig::from_key_values(with_prefix(kv, "train.")));
  r.model.save(p.out);
  r.log.write(fs::path(p.out).replace_extension(".log.tsv"));
  std::printf("trained %s on %zu utterances (%zu skipped), final epoch loss %s\n",
              structure.c_str(), ex.size(), r.skipped,
              format_double(r.log.epoch_loss.back()).c_str());
  return 0;
}

int decode(const Settings& s, const Paths& p, const std::string& system,
           const FirstPassFlags& f, std::size_t beam, std::size_t max_len) {
  const auto kv = s.load();
  const auto c = corpus::read_corpus(p.data);
  const auto& data = split_of(c, p.split);
  eval::Hypotheses hyps;
  if (system == "hybrid") {
    auto model = first_pass::HybridModel::load(p.model);
    f.apply(model);
    if (beam) model.config.beam = beam;
    hyps = eval::decode_hybrid(model, f.scorer(model), data);
  } else if (system == "aed" || system == "hec") {
    const auto model = second_pass::AEDModel::load(p.model);
    const bool text = model.config.structure != second_pass::Structure::kNone;
    require(text == (system == "hec"), ErrorKind::kInvalidArgument,
            "--system " + system + " does not match the model's decoder structure " +
                second_pass::structure_name(model.config.structure));
    require(!text || !p.cache.empty(), ErrorKind::kInvalidArgument, "--system hec needs --cache");
    const auto cache = text ? first_pass::read_nbest_cache(p.cache) : first_pass::NBestCache{};
    const auto seg = first_pass::HybridConfig::from_key_values(with_prefix(kv, "hybrid.")).segmenter;
    eval::BeamOptions opts;
    opts.beam = beam ? beam : opts.beam;
    opts.max_len = max_len;
    hyps = eval::decode_second_pass(
        model, train::prepare_second_pass(data, text ? &cache : nullptr, c.tokenizer, seg),
        c.tokenizer, opts);
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown system '" + system + "'");
  }
  eval::write_hypotheses(p.out, hyps);
  std::size_t truncated = 0;
  for (const auto& h : hyps) truncated += h.truncated;
  if (truncated) std::fprintf(stderr, "%zu hypotheses hit the length limit\n", truncated);
  return 0;
}

int evaluate(const Paths& p, const std::vector<std::string>& hyp_files) {
  corpus::CorpusSpec spec;
  const auto c = corpus::read_corpus(p.data, &spec);
  const auto refs = eval::references(split_of(c, p.split));
  for (const auto& file : hyp_files) {
    const auto hyps = eval::texts(eval::read_hypotheses(file));
    const auto e = eval::edit_counts(refs, hyps);
    std::printf("%s\tWER %.2f\tsub %zu\tdel %zu\tins %zu\tref %zu", file.c_str(), eval::wer(e),
                e.substitutions, e.deletions, e.insertions, e.reference);
    if (p.split == "entity") {
      std::printf("\trecall %.2f", 100.0 * eval::entity_recall(refs, hyps, c.lexicon.entities));
    }
    std::printf("\n");
  }
  return 0;
}

int report(const std::string& tsv) {
  std::ifstream in(tsv);
  require(static_cast<bool>(in), ErrorKind::kNotFound, "cannot open " + tsv);
  std::stringstream ss;
  ss << in.rdbuf();
  std::fputs(eval::ExperimentReport::parse_tsv(ss.str()).table().c_str(), stdout);
  return 0;
}

int experiment(const Settings& s, const std::string& kind, const std::string& out) {
  auto kv = s.load();
  if (!kind.empty()) kv.set("kind", kind);
  const auto cfg = eval::ExperimentConfig::from_key_values(kv);
  const auto r = eval::run_experiment(cfg, &std::cerr);
  std::fputs(r.table().c_str(), stdout);
  if (!out.empty()) {
    write_text(out + ".txt", r.table());
    write_text(out + ".tsv", r.tsv());
    cfg.to_key_values().save(out + ".config.txt");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-pass speech recognition with a hypothesis-encoding second pass"};
  app.require_subcommand(1);

  Settings settings;
  Paths paths;
  FirstPassFlags fp;
  std::string structure = "pca", preset = "desk", system = "hec", kind, out_prefix, tsv;
  std::size_t beam = 0, max_len = 0;
  bool with_extra = false;
  std::vector<std::string> hyp_files;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus directory");
  settings.attach(gen);
  gen->add_option("--out", paths.out, "output directory")->required();

  auto* tf = app.add_subcommand("train-first", "train the first-pass recognizer");
  settings.attach(tf);
  tf->add_option("--data", paths.data, "corpus directory")->required();
  tf->add_option("--out", paths.out, "model directory")->required();
  tf->add_flag("--with-extra", with_extra, "add the extra shifted split to the training data");

  auto* df = app.add_subcommand("decode-first", "first-pass one-best hypotheses");
  df->add_option("--data", paths.data, "corpus directory")->required();
  df->add_option("--model", paths.model, "first-pass model directory")->required();
  df->add_option("--split", paths.split, "split name");
  df->add_option("--out", paths.out, "hypothesis file")->required();
  fp.attach(df, true);

  auto* cn = app.add_subcommand("cache-nbest", "write the first-pass N-best cache of a split");
  cn->add_option("--data", paths.data, "corpus directory")->required();
  cn->add_option("--model", paths.model, "first-pass model directory")->required();
  cn->add_option("--split", paths.split, "split name");
  cn->add_option("--out", paths.out, "cache file")->required();
  fp.attach(cn, true);

  auto* ts = app.add_subcommand("train-second", "train the second pass on cached hypotheses");
  settings.attach(ts);
  ts->add_option("--data", paths.data, "corpus directory")->required();
  ts->add_option("--cache", paths.cache, "N-best cache of the train split");
  ts->add_option("--structure", structure, "pca, cca or none (standalone AED)")
      ->check(CLI::IsMember({"pca", "cca", "none"}));
  ts->add_option("--preset", preset, "full, desk or tiny")
      ->check(CLI::IsMember({"full", "desk", "tiny"}));
  ts->add_option("--out", paths.out, "checkpoint file")->required();

  auto* dec = app.add_subcommand("decode", "decode a split");
  settings.attach(dec);
  dec->add_option("--system", system, "hybrid, aed or hec")
      ->check(CLI::IsMember({"hybrid", "aed", "hec"}));
  dec->add_option("--data", paths.data, "corpus directory")->required();
  dec->add_option("--split", paths.split, "split name");
  dec->add_option("--model", paths.model, "model directory or checkpoint")->required();
  dec->add_option("--cache", paths.cache, "N-best cache of the split (hec)");
  dec->add_option("--beam", beam, "beam width");
  dec->add_option("--max-len", max_len, "maximum output tokens (default 2x encoder frames)");
  dec->add_option("--out", paths.out, "hypothesis file")->required();
  fp.attach(dec, false);

  auto* ev = app.add_subcommand("eval", "score hypothesis files against a split");
  ev->add_option("--data", paths.data, "corpus directory")->required();
  ev->add_option("--split", paths.split, "split name");
  ev->add_option("hyps", hyp_files, "hypothesis files")->required();

  auto* rep = app.add_subcommand("report", "print an experiment TSV as an aligned table");
  rep->add_option("tsv", tsv, "report TSV")->required();

  auto* ex = app.add_subcommand("experiment", "run a multi-seed experiment");
  settings.attach(ex);
  ex->add_option("--kind", kind, "combination, robustness or biasing")
      ->check(CLI::IsMember({"combination", "robustness", "biasing"}));
  ex->add_option("--out", out_prefix, "write <out>.txt, <out>.tsv and <out>.config.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::kInvalidArgument);
  }

  try {
    if (*gen) return gen_data(settings, paths);
    if (*tf) return train_first(settings, paths, with_extra);
    if (*df) return decode_first(paths, fp);
    if (*cn) return cache_nbest(paths, fp);
    if (*ts) return train_second(settings, paths, structure, preset);
    if (*dec) return decode(settings, paths, system, fp, beam, max_len);
    if (*ev) return evaluate(paths, hyp_files);
    if (*rep) return report(tsv);
    if (*ex) return experiment(settings, kind, out_prefix);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", kind_name(e.kind()), e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
