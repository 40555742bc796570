#pragma once

// One training/evaluation item: a mixture, its M clean sources, and one
// grayscale frame sequence per speaker, stored compactly.

#include <cstdint>
#include <vector>

#include "avlit/tensor.hpp"

namespace avlit {

struct Example {
  std::size_t speakers = 0;
  std::size_t samples = 0;
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> mixture;       // [T]
  std::vector<float> sources;       // [M, T]
  std::vector<std::uint8_t> video;  // [M, F, H, W]

  Tensor<float> mixture_tensor() const { return Tensor<float>::from({1, samples}, mixture); }
  Tensor<float> sources_tensor() const { return Tensor<float>::from({speakers, samples}, sources); }

  /// Frames scaled to [0, 1].
  Tensor<float> frames_tensor() const {
    std::vector<float> v(video.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(video[i]) / 255.0f;
    return Tensor<float>::from({speakers, frames, height, width}, std::move(v));
  }
};

}  // namespace avlit
