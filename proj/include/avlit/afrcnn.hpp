#pragma once

// A-FRCNN block: a multi-scale U-Net-style unit with adjacent-level fusion and
// a delayed global fusion stage, wrapped as a residual map io -> io.
//
//   entry      1x1 io -> B
//   expand     1x1 B -> C, norm, PReLU                       -> X_0
//   pyramid    X_s = PReLU(norm(dwconv_s2(X_{s-1})))          s = 1..S-1
//   fusion     X'_s = PReLU(norm(1x1(cat[X_s, up(X_{s+1}), dwconv_s2(X_{s-1})])))
//              (missing neighbours omitted at the ends)
//   global     PReLU(norm(1x1(cat[up(X'_0) .. up(X'_{S-1})])))  S*C -> C
//   exit       1x1 C -> B, PReLU, 1x1 B -> io
//   output     input + exit
//
// Pyramid lengths halve with ceiling rounding; upsampling is nearest-neighbour
// to the recorded length of the destination scale.

#include <cstdint>
#include <vector>

#include "avlit/layers.hpp"

namespace avlit {

struct BlockConfig {
  std::size_t io_channels = 512;
  std::size_t bottleneck = 128;      // B
  std::size_t stage_channels = 512;  // C
  std::size_t stages = 5;            // S
  std::size_t down_kernel = 5;
  static constexpr std::size_t kDownStride = 2;

  void validate() const;
  /// Shortest input length for which all S levels are non-empty.
  std::size_t min_length() const { return std::size_t{1} << (stages - 1); }

  bool operator==(const BlockConfig&) const = default;
};

/// Lengths of the S pyramid levels for an input of length `len`: ceil(len / 2^s).
std::vector<std::size_t> pyramid_lengths(std::size_t len, std::size_t stages);

/// Number of inputs concatenated at fusion level s (self plus present neighbours).
std::size_t fusion_fan_in(std::size_t level, std::size_t stages);

/// Closed-form parameter count; independent of the input length.
std::size_t block_param_count(const BlockConfig& config);

template <typename T>
struct BlockWeights {
  Conv1dLayer<T> entry;
  Conv1dLayer<T> expand;
  NormLayer<T> expand_norm;
  PReluLayer<T> expand_act;

  std::vector<Conv1dLayer<T>> down;  // S-1 depthwise, stride 2
  std::vector<NormLayer<T>> down_norm;
  std::vector<PReluLayer<T>> down_act;

  std::vector<Conv1dLayer<T>> fuse_down;  // S-1 depthwise, stride 2 (level s-1 into s)
  std::vector<Conv1dLayer<T>> fuse_proj;  // S
  std::vector<NormLayer<T>> fuse_norm;
  std::vector<PReluLayer<T>> fuse_act;

  Conv1dLayer<T> global_proj;
  NormLayer<T> global_norm;
  PReluLayer<T> global_act;

  Conv1dLayer<T> squeeze;
  PReluLayer<T> squeeze_act;
  Conv1dLayer<T> exit;

  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
class AfrcnnBlock {
 public:
  AfrcnnBlock() = default;
  AfrcnnBlock(const BlockConfig& config, std::mt19937_64& rng);

  /// Shape-preserving residual map. Throws ConfigError when the input is
  /// shorter than config().min_length().
  Tensor<T> forward(const Tensor<T>& x, std::vector<std::size_t>* level_lengths = nullptr) const;

  const BlockConfig& config() const { return config_; }
  BlockWeights<T>& weights() { return weights_; }
  const BlockWeights<T>& weights() const { return weights_; }

  ParamList<T> parameters(const std::string& prefix) const;

  /// Independent copy with freshly allocated tensors.
  AfrcnnBlock clone() const;

 private:
  BlockConfig config_;
  BlockWeights<T> weights_;
};

extern template class AfrcnnBlock<float>;
extern template class AfrcnnBlock<double>;

}  // namespace avlit
