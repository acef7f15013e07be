#include <algorithm>
#include <numeric>
#include <random>

#include "hec/error.hpp"
#include "hec/train/ctc.hpp"
#include "hec/train/trainer.hpp"

namespace hec::train {

std::vector<SecondPassExample> prepare_second_pass(const corpus::Dataset& data,
                                                   const first_pass::NBestCache* cache,
                                                   const corpus::Tokenizer& tokenizer,
                                                   const first_pass::SegmenterConfig& seg) {
  std::vector<SecondPassExample> out;
  out.reserve(data.size());
  for (const auto& u : data) {
    SecondPassExample ex;
    ex.id = u.id;
    const auto segments = first_pass::segment(u.features, seg, u.id);
    ex.features = segments.empty() ? u.features : first_pass::concat_segments(u.features, segments);
    if (cache) ex.onebest = first_pass::one_best(*cache, u.id);
    ex.reference = tokenizer.encode(u.transcript);
    out.push_back(std::move(ex));
  }
  return out;
}

double second_pass_loss(const second_pass::AEDModel& model, const SecondPassExample& ex,
                        const JointLossWeights& weights, num::GradientMap* grads, double* ctc,
                        double* att) {
  num::Graph g;
  num::Binder bind(g, model.params);
  corpus::TokenSeq input{corpus::kSos};
  input.insert(input.end(), ex.reference.begin(), ex.reference.end());
  std::vector<std::int64_t> target(ex.reference.begin(), ex.reference.end());
  target.push_back(corpus::kEos);
  const auto out = second_pass::forward(bind, model.config, ex.features, ex.onebest, input);
  const double norm = 1.0 / static_cast<double>(target.size());
  const num::Var c = num::scale(ctc_loss(out.ctc_logits, ex.reference), norm);
  const num::Var a = attention_ce_loss(out.att_logits, target);
  const num::Var loss = joint_loss(c, a, weights);
  if (ctc) *ctc = c.value().item();
  if (att) *att = a.value().item();
  if (grads) {
    for (auto& [name, t] : g.backward(loss.id)) {
      auto it = grads->find(name);
      if (it == grads->end()) {
        grads->emplace(name, std::move(t));
      } else {
        it->second += t;
      }
    }
  }
  return loss.value().item();
}

SecondPassResult train_second_pass(const std::vector<SecondPassExample>& data,
                                   const second_pass::AEDConfig& config, const TrainConfig& cfg,
                                   const JointLossWeights& weights) {
  require(!data.empty(), ErrorKind::kInvalidArgument, "second-pass training set is empty");
  cfg.validate();
  weights.validate();
  SecondPassResult res;
  res.model = second_pass::AEDModel::init(config, cfg.seed);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto Tp = data[i].features.dim(0) >= 4
                        ? second_pass::subsampled_length(data[i].features.dim(0))
                        : 0;
    if (Tp == 0 || ctc_min_frames(std::vector<std::int64_t>(data[i].reference.begin(),
                                                            data[i].reference.end())) > Tp) {
      ++res.skipped;
      continue;
    }
    order.push_back(i);
  }
  require(!order.empty(), ErrorKind::kInfeasible, "no CTC-feasible training utterance");

  std::mt19937_64 rng(cfg.seed ^ 0x5EC0DULL);
  Adam adam(cfg);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      num::GradientMap grads;
      double loss = 0.0, ctc_sum = 0.0, att_sum = 0.0;
      for (std::size_t i = b; i < e; ++i) {
        double c = 0.0, a = 0.0;
        loss += second_pass_loss(res.model, data[order[i]], weights, &grads, &c, &a);
        ctc_sum += c;
        att_sum += a;
      }
      const double n = static_cast<double>(e - b);
      for (auto& [name, g] : grads) {
        for (double& x : g.data()) x /= n;
      }
      const double lr = adam.step(res.model.params, grads);
      res.log.rows.push_back({adam.steps(), loss / n, ctc_sum / n, att_sum / n, lr});
      epoch_total += loss;
    }
    res.log.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
  }
  return res;
}

}  // namespace hec::train
