#pragma once

#include <string>
#include <vector>

#include "hec/numerics/tensor.hpp"

namespace hec::first_pass {

struct Segment {
  std::string utterance;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
};

// Energy automaton: a frame is speech when its mean-square value exceeds
// `threshold`; speech runs are widened by `hangover` frames on both sides
// (clipped to the signal), and gaps shorter than `min_silence` frames are
// bridged.
struct SegmenterConfig {
  double threshold = 0.1;
  std::size_t min_silence = 20;
  std::size_t hangover = 5;

  void validate() const;
};

std::vector<double> frame_energy(const num::Tensor& features);
std::vector<bool> speech_frames(const num::Tensor& features, const SegmenterConfig& cfg);
std::vector<Segment> segment(const num::Tensor& features, const SegmenterConfig& cfg,
                             const std::string& utterance = "");

// Rows of every segment, concatenated in order.
num::Tensor concat_segments(const num::Tensor& features, const std::vector<Segment>& segments);

}  // namespace hec::first_pass
