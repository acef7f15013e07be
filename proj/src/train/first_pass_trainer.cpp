#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "hec/config.hpp"
#include "hec/error.hpp"
#include "hec/train/trainer.hpp"

namespace hec::train {

void TrainLog::write(const std::filesystem::path& path) const {
  std::ofstream os(path);
  require(os.good(), ErrorKind::kIo, "cannot write training log " + path.string());
  os << "step\tloss\tctc\tatt\tlr\n";
  for (const auto& r : rows) {
    os << r.step << '\t' << format_double(r.loss) << '\t' << format_double(r.ctc) << '\t'
       << format_double(r.att) << '\t' << format_double(r.lr) << '\n';
  }
}

bool uniform_frame_labels(const num::Tensor& features, const corpus::TokenSeq& tokens,
                          const first_pass::SegmenterConfig& seg,
                          std::vector<std::int64_t>& labels) {
  const auto speech = first_pass::speech_frames(features, seg);
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < speech.size(); ++t) {
    if (speech[t]) idx.push_back(t);
  }
  labels.assign(speech.size(), corpus::kBlank);
  if (idx.size() < tokens.size()) return false;
  const std::size_t L = tokens.size(), S = idx.size();
  for (std::size_t i = 0; i < S && L > 0; ++i) labels[idx[i]] = tokens[i * L / S];
  return true;
}

namespace {

struct FrameRef {
  std::size_t utt;
  std::size_t frame;
};

}  // namespace

FirstPassResult train_first_pass(const corpus::Dataset& data,
                                 const std::vector<std::string>& lm_text,
                                 const corpus::Tokenizer& tokenizer,
                                 const first_pass::HybridConfig& hybrid, const TrainConfig& cfg) {
  require(!data.empty(), ErrorKind::kInvalidArgument, "first-pass training set is empty");
  hybrid.validate();
  cfg.validate();
  FirstPassResult res;
  auto& model = res.model;
  model.config = hybrid;
  model.tokenizer = tokenizer;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t D = data.front().features.dim(1);
  first_pass::init_acoustic(model.acoustic, hybrid, D, tokenizer.size(), rng);

  std::vector<std::vector<std::int64_t>> labels(data.size());
  std::vector<FrameRef> frames;
  std::vector<corpus::TokenSeq> sentences;
  for (std::size_t u = 0; u < data.size(); ++u) {
    require(data[u].features.dim(1) == D, ErrorKind::kShape, "feature dim differs in " + data[u].id);
    const auto tokens = tokenizer.encode(data[u].transcript);
    sentences.push_back(tokens);
    if (!uniform_frame_labels(data[u].features, tokens, hybrid.segmenter, labels[u])) {
      ++res.skipped;
      continue;
    }
    for (std::size_t t = 0; t < labels[u].size(); ++t) frames.push_back({u, t});
  }
  for (const auto& s : lm_text) sentences.push_back(tokenizer.encode(s));
  std::vector<corpus::TokenId> symbols;
  for (corpus::TokenId id = corpus::kFirstSymbol; id < static_cast<corpus::TokenId>(tokenizer.size()); ++id) {
    symbols.push_back(id);
  }
  model.lm = first_pass::NGramLM::train(sentences, hybrid.lm_order, hybrid.lm_k, symbols);
  require(!frames.empty(), ErrorKind::kInvalidArgument, "no utterance could be aligned");

  Adam adam(cfg);
  const std::size_t W = 2 * hybrid.context + 1;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(frames.begin(), frames.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < frames.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(frames.size(), b + cfg.batch_size);
      num::Tensor x(num::Shape{e - b, W * D});
      std::vector<std::int64_t> y;
      for (std::size_t i = b; i < e; ++i) {
        const auto& f = frames[i];
        const auto row = first_pass::splice(data[f.utt].features, hybrid.context, {f.frame});
        std::copy(row.ptr(), row.ptr() + row.size(), x.ptr() + (i - b) * W * D);
        y.push_back(labels[f.utt][f.frame]);
      }
      num::Graph g;
      num::Binder bind(g, model.acoustic);
      auto loss = num::cross_entropy(first_pass::acoustic_logits(bind, x, hybrid.layers), y);
      auto grads = g.backward(loss.id);
      const double lr = adam.step(model.acoustic, grads);
      res.log.rows.push_back({adam.steps(), loss.value().item(), 0.0, 0.0, lr});
      total += loss.value().item();
      ++batches;
    }
    res.log.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return res;
}

double frame_accuracy(const first_pass::HybridModel& model, const corpus::Dataset& data) {
  std::size_t hit = 0, n = 0;
  for (const auto& u : data) {
    std::vector<std::int64_t> labels;
    if (!uniform_frame_labels(u.features, model.tokenizer.encode(u.transcript),
                              model.config.segmenter, labels)) {
      continue;
    }
    num::Graph g;
    num::Binder bind(g, model.acoustic);
    const auto spliced =
        first_pass::splice(u.features, model.config.context, first_pass::all_frames(u.frames()));
    const auto logits = first_pass::acoustic_logits(bind, spliced, model.config.layers).value();
    for (std::size_t t = 0; t < labels.size(); ++t) {
      const double* r = logits.ptr() + t * logits.dim(1);
      const auto best = std::max_element(r, r + logits.dim(1)) - r;
      hit += best == labels[t];
      ++n;
    }
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

}  // namespace hec::train
