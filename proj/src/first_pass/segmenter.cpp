#include "hec/first_pass/segmenter.hpp"

#include <algorithm>
#include <cmath>

#include "hec/error.hpp"

namespace hec::first_pass {

void SegmenterConfig::validate() const {
  require(threshold >= 0 && std::isfinite(threshold), ErrorKind::kInvalidArgument,
          "segmenter threshold must be finite and >= 0");
}

std::vector<double> frame_energy(const num::Tensor& features) {
  require(features.rank() == 2, ErrorKind::kShape, "features must be T x D");
  const std::size_t T = features.dim(0), D = features.dim(1);
  std::vector<double> e(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) e[t] += features.at(t, d) * features.at(t, d);
    e[t] /= static_cast<double>(D);
  }
  return e;
}

std::vector<bool> speech_frames(const num::Tensor& features, const SegmenterConfig& cfg) {
  const auto e = frame_energy(features);
  std::vector<bool> speech(e.size());
  for (std::size_t t = 0; t < e.size(); ++t) speech[t] = e[t] > cfg.threshold;
  return speech;
}

std::vector<Segment> segment(const num::Tensor& features, const SegmenterConfig& cfg,
                             const std::string& utterance) {
  cfg.validate();
  const auto speech = speech_frames(features, cfg);
  const std::size_t T = speech.size();
  require(T >= 1, ErrorKind::kInvalidArgument, "cannot segment an empty signal");

  // Raw speech runs, widened by the hangover.
  std::vector<Segment> runs;
  for (std::size_t t = 0; t < T;) {
    if (!speech[t]) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < T && speech[e]) ++e;
    runs.push_back({utterance, t > cfg.hangover ? t - cfg.hangover : 0,
                    std::min(T, e + cfg.hangover)});
    t = e;
  }
  std::vector<Segment> out;
  for (const auto& r : runs) {
    if (!out.empty() && (r.start <= out.back().end || r.start - out.back().end < cfg.min_silence)) {
      out.back().end = std::max(out.back().end, r.end);
    } else {
      out.push_back(r);
    }
  }
  return out;
}

num::Tensor concat_segments(const num::Tensor& features, const std::vector<Segment>& segments) {
  require(!segments.empty(), ErrorKind::kInvalidArgument, "no segments to concatenate");
  const std::size_t D = features.dim(1);
  std::vector<double> data;
  for (const auto& s : segments) {
    require(s.start < s.end && s.end <= features.dim(0), ErrorKind::kInvalidArgument,
            "segment outside the signal");
    data.insert(data.end(), features.ptr() + s.start * D, features.ptr() + s.end * D);
  }
  const std::size_t T = data.size() / D;
  return num::Tensor(num::Shape{T, D}, std::move(data));
}

}  // namespace hec::first_pass
