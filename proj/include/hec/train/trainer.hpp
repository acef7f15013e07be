#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hec/corpus/corpus.hpp"
#include "hec/first_pass/hybrid.hpp"
#include "hec/first_pass/nbest_cache.hpp"
#include "hec/second_pass/aed.hpp"
#include "hec/train/losses.hpp"
#include "hec/train/optimizer.hpp"

namespace hec::train {

struct LogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double ctc = 0.0;  // second pass only
  double att = 0.0;  // second pass only
  double lr = 0.0;
};

struct TrainLog {
  std::vector<LogRow> rows;
  std::vector<double> epoch_loss;  // mean loss per epoch

  // "step \t loss \t ctc \t att \t lr", one line per update.
  void write(const std::filesystem::path& path) const;
};

// Uniform alignment: the tokens of `transcript` spread evenly over the
// detected speech frames, every other frame labelled blank. Returns false
// when there are fewer speech frames than tokens.
bool uniform_frame_labels(const num::Tensor& features, const corpus::TokenSeq& tokens,
                          const first_pass::SegmenterConfig& seg, std::vector<std::int64_t>& labels);

struct FirstPassResult {
  first_pass::HybridModel model;
  TrainLog log;
  std::size_t skipped = 0;  // utterances shorter than their transcript
};

// STEP1: CE training of the frame classifier against uniform alignments
// (batch_size counts frames here) and add-k LM estimation on the
// transcripts plus `lm_text`.
FirstPassResult train_first_pass(const corpus::Dataset& data,
                                 const std::vector<std::string>& lm_text,
                                 const corpus::Tokenizer& tokenizer,
                                 const first_pass::HybridConfig& hybrid, const TrainConfig& cfg);

// Share of labelled frames whose argmax matches the uniform-alignment label.
double frame_accuracy(const first_pass::HybridModel& model, const corpus::Dataset& data);

// One second-pass training or test item: segmented audio (segments
// concatenated), the first-pass one-best and the reference tokens.
struct SecondPassExample {
  std::string id;
  num::Tensor features;
  corpus::TokenSeq onebest;
  corpus::TokenSeq reference;
};

// Applies the segmenter (falling back to the whole utterance when nothing
// is detected) and looks up one-best hypotheses. With a null cache the
// one-best stays empty (standalone AED); otherwise a missing id is
// rejected.
std::vector<SecondPassExample> prepare_second_pass(const corpus::Dataset& data,
                                                   const first_pass::NBestCache* cache,
                                                   const corpus::Tokenizer& tokenizer,
                                                   const first_pass::SegmenterConfig& seg);

struct SecondPassResult {
  second_pass::AEDModel model;
  TrainLog log;
  std::size_t skipped = 0;  // CTC-infeasible utterances
};

// Per-utterance loss: weights.ctc * ctc / (L + 1) + weights.att * mean CE
// over the L + 1 reference tokens (eos included). Gradients are averaged
// over batch_size utterances per update.
double second_pass_loss(const second_pass::AEDModel& model, const SecondPassExample& ex,
                        const JointLossWeights& weights, num::GradientMap* grads,
                        double* ctc = nullptr, double* att = nullptr);

// STEP3.
SecondPassResult train_second_pass(const std::vector<SecondPassExample>& data,
                                   const second_pass::AEDConfig& config, const TrainConfig& cfg,
                                   const JointLossWeights& weights = {});

}  // namespace hec::train
