#include "hec/corpus/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hec/error.hpp"

namespace hec::corpus {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<double> unit_rms(std::vector<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double rms = std::sqrt(ss / static_cast<double>(v.size()));
  if (rms > 0) {
    for (double& x : v) x /= rms;
  }
  return v;
}

std::vector<double> normal_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::string random_word(const CorpusSpec& spec, std::mt19937_64& rng) {
  const std::size_t len = uniform_size(rng, spec.min_word_chars, spec.max_word_chars);
  std::string w;
  while (w.size() < len) {
    const char c = spec.alphabet[uniform_size(rng, 0, spec.alphabet.size() - 1)];
    if (!w.empty() && w.back() == c) continue;
    w.push_back(c);
  }
  return w;
}

std::size_t word_index(const Lexicon& lex, const std::string& word) {
  std::size_t i = 0;
  for (const auto* list : {&lex.core, &lex.regional, &lex.entities}) {
    for (const auto& w : *list) {
      if (w == word) return i;
      ++i;
    }
  }
  fail(ErrorKind::kInvalidArgument, "word '" + word + "' is not in the lexicon");
}

std::size_t symbol_index(const Lexicon& lex, char c) {
  const auto pos = lex.symbols.find(c);
  require(pos != std::string::npos, ErrorKind::kInvalidArgument,
          std::string("symbol '") + c + "' is not in the lexicon");
  return pos;
}

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::kMatched: return "matched";
    case Condition::kDialect: return "dialect";
    case Condition::kAccent: return "accent";
  }
  return "?";
}

double shift_of(const CorpusSpec& spec, Condition c) {
  switch (c) {
    case Condition::kMatched: return 0.0;
    case Condition::kDialect: return spec.dialect_shift;
    case Condition::kAccent: return spec.accent_shift;
  }
  return 0.0;
}

double noise_of(const CorpusSpec& spec, Condition c) {
  switch (c) {
    case Condition::kMatched: return spec.noise;
    case Condition::kDialect: return spec.dialect_noise;
    case Condition::kAccent: return spec.accent_noise;
  }
  return 0.0;
}

// Symbol prototypes as realized under a recording condition.
std::vector<std::vector<double>> condition_prototypes(const CorpusSpec& spec, const Lexicon& lex,
                                                      Condition condition) {
  auto protos = lex.prototypes;
  const double shift = shift_of(spec, condition);
  if (shift == 0.0) return protos;
  auto rng = stream_rng(spec.seed, std::string("condition-") + condition_name(condition));
  for (auto& p : protos) {
    const auto u = normal_vec(p.size(), rng);
    for (std::size_t d = 0; d < p.size(); ++d) p[d] += shift * u[d];
  }
  return protos;
}

void append_frames(std::vector<double>& frames, const std::vector<double>& frame, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) frames.insert(frames.end(), frame.begin(), frame.end());
}

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

class WordSampler {
 public:
  WordSampler(const CorpusSpec& spec, const Lexicon& lex) : spec_(spec), lex_(lex) {
    std::vector<double> w;
    for (std::size_t r = 0; r < lex.core.size(); ++r) {
      w.push_back(1.0 / std::pow(static_cast<double>(r + 1), spec.zipf));
    }
    zipf_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }

  const std::string& draw(Lexical lexical, std::mt19937_64& rng) {
    double regional = 0.0;
    switch (lexical) {
      case Lexical::kPaired:
      case Lexical::kEntity: regional = spec_.regional_rate; break;
      case Lexical::kDialect:
        regional = spec_.dialect_skew + (1.0 - spec_.dialect_skew) * spec_.regional_rate;
        break;
      case Lexical::kLmText: regional = spec_.lm_regional_rate; break;
    }
    const double u = uniform01(rng);
    if (!lex_.regional.empty() && u < regional) {
      return lex_.regional[uniform_size(rng, 0, lex_.regional.size() - 1)];
    }
    return lex_.core[zipf_(rng)];
  }

  const std::string& entity(std::mt19937_64& rng) {
    require(!lex_.entities.empty(), ErrorKind::kInvalidArgument,
            "entity split requested but the lexicon has no entity words");
    return lex_.entities[uniform_size(rng, 0, lex_.entities.size() - 1)];
  }

 private:
  const CorpusSpec& spec_;
  const Lexicon& lex_;
  std::discrete_distribution<std::size_t> zipf_;
};

std::vector<std::string> draw_sentence(const CorpusSpec& spec, WordSampler& sampler,
                                       Lexical lexical, std::mt19937_64& rng) {
  const std::size_t n = uniform_size(rng, spec.min_words, spec.max_words);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(sampler.draw(lexical, rng));
  if (lexical == Lexical::kEntity) {
    words[uniform_size(rng, 0, n - 1)] = sampler.entity(rng);
  }
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

}  // namespace

std::mt19937_64 stream_rng(std::uint64_t seed, const std::string& stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(fnv1a(stream))));
}

// ------------------------------------------------------------------ spec ----

void CorpusSpec::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, "invalid corpus spec: " + what);
  };
  check(!alphabet.empty() || !words.empty(), "empty vocabulary");
  if (words.empty()) {
    check(core_words > 0, "empty vocabulary");
    check(alphabet.size() >= 2, "alphabet needs at least two symbols");
    check(alphabet.find(' ') == std::string::npos, "alphabet must not contain ' '");
  }
  check(feature_dim > 0, "feature_dim must be positive");
  check(min_word_chars >= 1 && min_word_chars <= max_word_chars, "word length range");
  check(min_char_frames >= 1 && min_char_frames <= max_char_frames, "char frame range");
  check(min_words >= 1 && min_words <= max_words, "words-per-utterance range");
  check(min_silence <= max_silence, "silence range");
  check(noise >= 0 && dialect_noise >= 0 && accent_noise >= 0 && silence_level >= 0,
        "noise levels must be non-negative");
  check(dialect_shift >= 0 && accent_shift >= 0 && dialect_skew >= 0 && dialect_skew <= 1,
        "shift parameters must be non-negative");
  check(regional_rate >= 0 && regional_rate <= 1 && lm_regional_rate >= 0 &&
            lm_regional_rate <= 1 && pause_prob >= 0 && pause_prob <= 1,
        "rates must lie in [0,1]");
}

KeyValues CorpusSpec::to_key_values() const {
  KeyValues kv;
  kv.set("seed", static_cast<std::uint64_t>(seed));
  kv.set("feature_dim", static_cast<std::uint64_t>(feature_dim));
  kv.set("alphabet", alphabet);
  std::string wl;
  for (std::size_t i = 0; i < words.size(); ++i) wl += (i ? "," : "") + words[i];
  kv.set("words", wl);
  kv.set("core_words", static_cast<std::uint64_t>(core_words));
  kv.set("regional_words", static_cast<std::uint64_t>(regional_words));
  kv.set("entity_words", static_cast<std::uint64_t>(entity_words));
  kv.set("min_word_chars", static_cast<std::uint64_t>(min_word_chars));
  kv.set("max_word_chars", static_cast<std::uint64_t>(max_word_chars));
  kv.set("min_char_frames", static_cast<std::uint64_t>(min_char_frames));
  kv.set("max_char_frames", static_cast<std::uint64_t>(max_char_frames));
  kv.set("space_frames", static_cast<std::uint64_t>(space_frames));
  kv.set("min_words", static_cast<std::uint64_t>(min_words));
  kv.set("max_words", static_cast<std::uint64_t>(max_words));
  kv.set("min_silence", static_cast<std::uint64_t>(min_silence));
  kv.set("max_silence", static_cast<std::uint64_t>(max_silence));
  kv.set("pause_prob", pause_prob);
  kv.set("pause_frames", static_cast<std::uint64_t>(pause_frames));
  kv.set("noise", noise);
  kv.set("silence_level", silence_level);
  kv.set("coarticulation", coarticulation);
  kv.set("zipf", zipf);
  kv.set("regional_rate", regional_rate);
  kv.set("lm_regional_rate", lm_regional_rate);
  kv.set("dialect_shift", dialect_shift);
  kv.set("dialect_skew", dialect_skew);
  kv.set("dialect_noise", dialect_noise);
  kv.set("accent_shift", accent_shift);
  kv.set("accent_noise", accent_noise);
  kv.set("train_count", static_cast<std::uint64_t>(train_count));
  kv.set("test_count", static_cast<std::uint64_t>(test_count));
  kv.set("extra_count", static_cast<std::uint64_t>(extra_count));
  kv.set("lm_count", static_cast<std::uint64_t>(lm_count));
  return kv;
}

CorpusSpec CorpusSpec::from_key_values(const KeyValues& kv) {
  CorpusSpec s;
  s.seed = kv.get_uint("seed", s.seed);
  s.feature_dim = kv.get_size("feature_dim", s.feature_dim);
  s.alphabet = kv.get("alphabet", s.alphabet);
  s.words = kv.get_list("words");
  s.core_words = kv.get_size("core_words", s.core_words);
  s.regional_words = kv.get_size("regional_words", s.regional_words);
  s.entity_words = kv.get_size("entity_words", s.entity_words);
  s.min_word_chars = kv.get_size("min_word_chars", s.min_word_chars);
  s.max_word_chars = kv.get_size("max_word_chars", s.max_word_chars);
  s.min_char_frames = kv.get_size("min_char_frames", s.min_char_frames);
  s.max_char_frames = kv.get_size("max_char_frames", s.max_char_frames);
  s.space_frames = kv.get_size("space_frames", s.space_frames);
  s.min_words = kv.get_size("min_words", s.min_words);
  s.max_words = kv.get_size("max_words", s.max_words);
  s.min_silence = kv.get_size("min_silence", s.min_silence);
  s.max_silence = kv.get_size("max_silence", s.max_silence);
  s.pause_prob = kv.get_double("pause_prob", s.pause_prob);
  s.pause_frames = kv.get_size("pause_frames", s.pause_frames);
  s.noise = kv.get_double("noise", s.noise);
  s.silence_level = kv.get_double("silence_level", s.silence_level);
  s.coarticulation = kv.get_double("coarticulation", s.coarticulation);
  s.zipf = kv.get_double("zipf", s.zipf);
  s.regional_rate = kv.get_double("regional_rate", s.regional_rate);
  s.lm_regional_rate = kv.get_double("lm_regional_rate", s.lm_regional_rate);
  s.dialect_shift = kv.get_double("dialect_shift", s.dialect_shift);
  s.dialect_skew = kv.get_double("dialect_skew", s.dialect_skew);
  s.dialect_noise = kv.get_double("dialect_noise", s.dialect_noise);
  s.accent_shift = kv.get_double("accent_shift", s.accent_shift);
  s.accent_noise = kv.get_double("accent_noise", s.accent_noise);
  s.train_count = kv.get_size("train_count", s.train_count);
  s.test_count = kv.get_size("test_count", s.test_count);
  s.extra_count = kv.get_size("extra_count", s.extra_count);
  s.lm_count = kv.get_size("lm_count", s.lm_count);
  s.validate();
  return s;
}

// --------------------------------------------------------------- lexicon ----

std::vector<std::string> Lexicon::all_words() const {
  std::vector<std::string> all = core;
  all.insert(all.end(), regional.begin(), regional.end());
  all.insert(all.end(), entities.begin(), entities.end());
  return all;
}

Lexicon build_lexicon(const CorpusSpec& spec) {
  spec.validate();
  auto rng = stream_rng(spec.seed, "lexicon");
  Lexicon lex;
  if (!spec.words.empty()) {
    lex.core = spec.words;
  } else {
    std::set<std::string> seen;
    auto fill = [&](std::vector<std::string>& list, std::size_t n) {
      std::size_t attempts = 0;
      while (list.size() < n) {
        require(++attempts < 100000, ErrorKind::kInvalidArgument,
                "alphabet too small for the requested vocabulary");
        std::string w = random_word(spec, rng);
        if (seen.insert(w).second) list.push_back(std::move(w));
      }
    };
    fill(lex.core, spec.core_words);
    fill(lex.regional, spec.regional_words);
    fill(lex.entities, spec.entity_words);
  }
  std::string symbols;
  for (const auto& w : lex.all_words()) {
    require(!w.empty() && w.find(' ') == std::string::npos, ErrorKind::kInvalidArgument,
            "vocabulary words must be non-empty and contain no spaces");
    symbols += w;
  }
  symbols += spec.alphabet;
  symbols += ' ';
  std::sort(symbols.begin(), symbols.end());
  symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
  lex.symbols = symbols;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    lex.prototypes.push_back(unit_rms(normal_vec(spec.feature_dim, rng)));
  }
  for (const auto& w : lex.all_words()) {
    std::vector<std::size_t> dur;
    std::vector<std::vector<double>> off;
    for (std::size_t i = 0; i < w.size(); ++i) {
      dur.push_back(uniform_size(rng, spec.min_char_frames, spec.max_char_frames));
      auto v = normal_vec(spec.feature_dim, rng);
      for (double& x : v) x *= spec.coarticulation;
      off.push_back(std::move(v));
    }
    lex.durations.push_back(std::move(dur));
    lex.offsets.push_back(std::move(off));
  }
  return lex;
}

Tokenizer make_tokenizer(const Lexicon& lex) { return Tokenizer(lex.symbols); }

num::Tensor word_template(const CorpusSpec& spec, const Lexicon& lex, const std::string& word,
                          Condition condition) {
  const auto protos = condition_prototypes(spec, lex, condition);
  const std::size_t wi = word_index(lex, word);
  std::vector<double> frames;
  for (std::size_t i = 0; i < word.size(); ++i) {
    std::vector<double> f = protos[symbol_index(lex, word[i])];
    for (std::size_t d = 0; d < f.size(); ++d) f[d] += lex.offsets[wi][i][d];
    append_frames(frames, f, lex.durations[wi][i]);
  }
  const std::size_t T = frames.size() / spec.feature_dim;
  return num::Tensor(num::Shape{T, spec.feature_dim}, std::move(frames));
}

double mean_template_deviation(const CorpusSpec& spec, const Lexicon& lex, Condition condition) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& w : lex.all_words()) {
    const auto a = word_template(spec, lex, w, condition);
    const auto b = word_template(spec, lex, w, Condition::kMatched);
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    n += a.size();
  }
  return total / static_cast<double>(n);
}

// ------------------------------------------------------------ generation ----

Dataset generate_split(const CorpusSpec& spec, const Lexicon& lex, Condition condition,
                       Lexical lexical, std::size_t count, const std::string& stream) {
  spec.validate();
  auto rng = stream_rng(spec.seed, stream);
  WordSampler sampler(spec, lex);
  const auto protos = condition_prototypes(spec, lex, condition);
  const double noise = noise_of(spec, condition);
  const std::size_t D = spec.feature_dim;
  std::vector<double> space = protos[symbol_index(lex, ' ')];

  std::map<std::string, num::Tensor> templates;
  auto template_of = [&](const std::string& w) -> const num::Tensor& {
    auto it = templates.find(w);
    if (it == templates.end()) it = templates.emplace(w, word_template(spec, lex, w, condition)).first;
    return it->second;
  };

  Dataset out;
  out.reserve(count);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t u = 0; u < count; ++u) {
    const auto words = draw_sentence(spec, sampler, lexical, rng);
    std::vector<double> frames;
    std::vector<char> speech;  // per frame
    auto silence = [&](std::size_t n) {
      frames.insert(frames.end(), n * D, 0.0);
      speech.insert(speech.end(), n, 0);
    };
    silence(uniform_size(rng, spec.min_silence, spec.max_silence));
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto& t = template_of(words[i]);
      frames.insert(frames.end(), t.data().begin(), t.data().end());
      speech.insert(speech.end(), t.dim(0), 1);
      if (i + 1 < words.size()) {
        append_frames(frames, space, spec.space_frames);
        speech.insert(speech.end(), spec.space_frames, 1);
        if (spec.pause_prob > 0 && uniform01(rng) < spec.pause_prob) silence(spec.pause_frames);
      }
    }
    silence(uniform_size(rng, spec.min_silence, spec.max_silence));
    const std::size_t T = speech.size();
    for (std::size_t t = 0; t < T; ++t) {
      const double sd = speech[t] ? noise : spec.silence_level;
      for (std::size_t d = 0; d < D; ++d) {
        double& v = frames[t * D + d];
        if (sd > 0) v += sd * gauss(rng);
        v = to_float_precision(v);
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "-%05zu", u);
    out.push_back(Utterance{stream + id, num::Tensor(num::Shape{T, D}, std::move(frames)),
                            join_words(words)});
  }
  return out;
}

std::vector<std::string> generate_lm_text(const CorpusSpec& spec, const Lexicon& lex,
                                          std::size_t count) {
  auto rng = stream_rng(spec.seed, "lm-text");
  WordSampler sampler(spec, lex);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(join_words(draw_sentence(spec, sampler, Lexical::kLmText, rng)));
  }
  return out;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  Corpus c;
  c.lexicon = build_lexicon(spec);
  c.tokenizer = make_tokenizer(c.lexicon);
  c.train = generate_split(spec, c.lexicon, Condition::kMatched, Lexical::kPaired,
                           spec.train_count, "train");
  c.matched = generate_split(spec, c.lexicon, Condition::kMatched, Lexical::kPaired,
                             spec.test_count, "matched");
  c.dialect = generate_split(spec, c.lexicon, Condition::kDialect, Lexical::kDialect,
                             spec.test_count, "dialect");
  c.accent = generate_split(spec, c.lexicon, Condition::kAccent, Lexical::kPaired,
                            spec.test_count, "accent");
  if (!c.lexicon.entities.empty()) {
    c.entity = generate_split(spec, c.lexicon, Condition::kMatched, Lexical::kEntity,
                              spec.test_count, "entity");
  }
  c.extra = generate_split(spec, c.lexicon, Condition::kDialect, Lexical::kDialect,
                           spec.extra_count / 2, "extra-dialect");
  auto accent = generate_split(spec, c.lexicon, Condition::kAccent, Lexical::kPaired,
                               spec.extra_count - spec.extra_count / 2, "extra-accent");
  c.extra.insert(c.extra.end(), accent.begin(), accent.end());
  c.lm_text = generate_lm_text(spec, c.lexicon, spec.lm_count);
  return c;
}

// -------------------------------------------------------------------- io ----

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  require(is.good(), ErrorKind::kIo, "truncated feature file " + path.string());
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_features(const std::filesystem::path& path, const num::Tensor& features) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::kIo, "cannot write feature file " + path.string());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(features.dim(0)));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(features.dim(1)));
  for (double v : features.data()) put_le<float>(os, static_cast<float>(v));
  require(os.good(), ErrorKind::kIo, "failed writing feature file " + path.string());
}

num::Tensor read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::kNotFound, "missing feature file " + path.string());
  const auto T = get_le<std::uint32_t>(is, path);
  const auto D = get_le<std::uint32_t>(is, path);
  require(T > 0 && D > 0, ErrorKind::kIo, "empty feature matrix in " + path.string());
  std::vector<double> data(static_cast<std::size_t>(T) * D);
  for (double& v : data) v = static_cast<double>(get_le<float>(is, path));
  return num::Tensor(num::Shape{T, D}, std::move(data));
}

void write_dataset(const std::filesystem::path& manifest, const Dataset& data) {
  const auto dir = manifest.parent_path();
  const auto feat_dir_name = manifest.stem().string() + "_feats";
  std::filesystem::create_directories(dir / feat_dir_name);
  std::ofstream os(manifest);
  require(os.good(), ErrorKind::kIo, "cannot write manifest " + manifest.string());
  for (const auto& u : data) {
    require(u.id.find('\t') == std::string::npos && u.transcript.find('\t') == std::string::npos,
            ErrorKind::kInvalidArgument, "tab inside utterance id or transcript: " + u.id);
    const auto rel = std::filesystem::path(feat_dir_name) / (u.id + ".feat");
    write_features(dir / rel, u.features);
    os << u.id << '\t' << u.transcript << '\t' << rel.generic_string() << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  require(is.good(), ErrorKind::kNotFound, "missing manifest " + manifest.string());
  const auto dir = manifest.parent_path();
  Dataset out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    require(b != std::string::npos, ErrorKind::kIo,
            "malformed manifest line in " + manifest.string() + ": " + line);
    Utterance u;
    u.id = line.substr(0, a);
    u.transcript = line.substr(a + 1, b - a - 1);
    u.features = read_features(dir / line.substr(b + 1));
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace hec::corpus

namespace hec::corpus {

void write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  spec.to_key_values().save(dir / "spec.txt");
  write_dataset(dir / "train.tsv", corpus.train);
  write_dataset(dir / "matched.tsv", corpus.matched);
  write_dataset(dir / "dialect.tsv", corpus.dialect);
  write_dataset(dir / "accent.tsv", corpus.accent);
  write_dataset(dir / "entity.tsv", corpus.entity);
  write_dataset(dir / "extra.tsv", corpus.extra);
  std::ofstream os(dir / "lm_text.txt");
  require(os.good(), ErrorKind::kIo, "cannot write " + (dir / "lm_text.txt").string());
  for (const auto& line : corpus.lm_text) os << line << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir, CorpusSpec* spec_out) {
  const auto spec = CorpusSpec::from_key_values(KeyValues::load(dir / "spec.txt"));
  Corpus c;
  c.lexicon = build_lexicon(spec);
  c.tokenizer = make_tokenizer(c.lexicon);
  c.train = read_dataset(dir / "train.tsv");
  c.matched = read_dataset(dir / "matched.tsv");
  c.dialect = read_dataset(dir / "dialect.tsv");
  c.accent = read_dataset(dir / "accent.tsv");
  c.entity = read_dataset(dir / "entity.tsv");
  c.extra = read_dataset(dir / "extra.tsv");
  std::ifstream is(dir / "lm_text.txt");
  require(is.good(), ErrorKind::kNotFound, "missing " + (dir / "lm_text.txt").string());
  std::string line;
  while (std::getline(is, line)) c.lm_text.push_back(line);
  if (spec_out) *spec_out = spec;
  return c;
}

}  // namespace hec::corpus
