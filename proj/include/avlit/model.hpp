#pragma once

// Audio-visual separator built from two iterated A-FRCNN blocks.
//
// Layouts: waveforms are [1, T] (mixture) and [M, T] (separated sources);
// video clips are [M, F, H, W] with values in [0, 1]; latent audio is [C, T'];
// per-speaker video embeddings are [M, C', F].

#include <array>
#include <string>
#include <vector>

#include "avlit/afrcnn.hpp"

namespace avlit {

struct ModelConfig {
  std::size_t speakers = 2;     // M
  std::size_t audio_iters = 4;  // N_A
  std::size_t video_iters = 2;  // N_V
  std::vector<std::size_t> fusion_positions{0};  // P, sorted and unique

  std::size_t enc_channels = 512;  // C
  std::size_t enc_kernel = 40;     // K
  std::size_t enc_stride = 20;

  BlockConfig audio_block{.io_channels = 512, .bottleneck = 128, .stage_channels = 512, .stages = 5};
  BlockConfig video_block{.io_channels = 128, .bottleneck = 128, .stage_channels = 128, .stages = 5};

  std::size_t video_embed = 1024;  // C'
  std::size_t frame_height = 64;
  std::size_t frame_width = 64;
  double fps = 25.0;
  std::size_t sample_rate = 16000;

  /// Throws ConfigError on any inconsistency.
  void validate() const;

  std::size_t latent_length(std::size_t samples) const;
  std::size_t decoded_length(std::size_t latent) const { return (latent - 1) * enc_stride + enc_kernel; }
  std::size_t expected_frames(std::size_t samples) const;
  bool fuses_at(std::size_t iteration) const;

  bool operator==(const ModelConfig&) const = default;
};

/// Channel widths of the frozen frame encoder, input to bottleneck.
inline constexpr std::array<std::size_t, 5> kFrameEncoderChannels{1, 4, 8, 16, 64};
inline constexpr float kFrameLeakySlope = 0.3f;

/// C' implied by a frame size: 64 * (H / 16) * (W / 16).
std::size_t frame_embedding_size(std::size_t height, std::size_t width);

/// Presets "avlit-2", "avlit-4", "avlit-8"; N_V = N_A / 2 and P = {0}.
ModelConfig preset(const std::string& name);

/// Named fusion schedules: early {0}, middle {N_A/2}, late {N_A-1}, all, none.
std::vector<std::size_t> fusion_schedule(const std::string& name, std::size_t audio_iters);

/// Parses "0,2,3" or a schedule name.
std::vector<std::size_t> parse_fusion(const std::string& text, std::size_t audio_iters);

// key=value text form, one entry per line, stable key order.
std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& config);
std::string config_to_text(const ModelConfig& config);
/// Sets one field; returns false when the key is not a model key.
bool set_config_entry(ModelConfig& config, const std::string& key, const std::string& value);
ModelConfig config_from_text(const std::string& text);

template <typename T>
struct FrameEncoder {
  std::array<Tensor<T>, 4> weights;  // [Cout, Cin, 2, 2], no bias

  static FrameEncoder create(std::mt19937_64& rng);
  /// frame [1, H, W] -> [64, H/16, W/16]
  Tensor<T> operator()(const Tensor<T>& frame) const;
  void collect(const std::string& prefix, ParamList<T>& out, bool trainable) const;
};

template <typename T>
struct FrameDecoder {
  std::array<Tensor<T>, 4> weights;  // [Cin, Cout, 2, 2]
  std::array<Tensor<T>, 4> biases;

  static FrameDecoder create(std::mt19937_64& rng);
  /// [64, h, w] -> [1, 16h, 16w] in (0, 1)
  Tensor<T> operator()(const Tensor<T>& code) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
class AvlitModel {
 public:
  AvlitModel() = default;
  AvlitModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Throws ConfigError when T is too short for the encoder or either block,
  /// and DimensionError when the clip does not match the audio duration.
  void check_inputs(std::size_t samples, const Shape& frames_shape) const;

  /// [1, T] -> f_A [C, T']
  Tensor<T> encode_audio(const Tensor<T>& mixture) const;
  /// [M, F, H, W] -> f_V [M, C', F]. Runs without gradient tracking.
  Tensor<T> encode_video(const Tensor<T>& frames) const;
  /// f_V [M, C', F] -> f'_V [C, T']
  Tensor<T> video_branch(const Tensor<T>& embeddings, std::size_t latent_length) const;
  /// R(N_A) [C, T] from f_A and f'_V (f'_V may be undefined when P is empty).
  Tensor<T> audio_branch(const Tensor<T>& audio, const Tensor<T>& video) const;
  /// ReLU mask, masking and transposed-conv decoding, trimmed or padded to `samples`.
  Tensor<T> decode(const Tensor<T>& audio, const Tensor<T>& mask_logits, std::size_t samples) const;

  /// [1, T] mixture and [M, F, H, W] clip -> [M, T] sources in video order.
  Tensor<T> separate(const Tensor<T>& mixture, const Tensor<T>& frames) const;
  /// Same, with precomputed f'_V [C, T'] (for example all zeros).
  Tensor<T> separate_with_video(const Tensor<T>& mixture, const Tensor<T>& video) const;

  /// All tensors in a fixed order; the frame encoder is reported as not trainable.
  ParamList<T> parameters() const;
  ParamList<T> trainable_parameters() const;

  Conv1dLayer<T>& encoder() { return encoder_; }
  Tensor<T>& decoder_weight() { return decoder_weight_; }
  Tensor<T>& decoder_bias() { return decoder_bias_; }
  FrameEncoder<T>& frame_encoder() { return frame_encoder_; }
  const FrameEncoder<T>& frame_encoder() const { return frame_encoder_; }
  AfrcnnBlock<T>& audio_block() { return audio_block_; }
  AfrcnnBlock<T>& video_block() { return video_block_; }

  AvlitModel clone() const;

 private:
  ModelConfig config_;
  Conv1dLayer<T> encoder_;
  Tensor<T> decoder_weight_;  // [C, M, K]
  Tensor<T> decoder_bias_;    // [M]
  FrameEncoder<T> frame_encoder_;
  Conv1dLayer<T> video_in_;   // C' -> video io
  Conv1dLayer<T> video_out_;  // M * video io -> C
  AfrcnnBlock<T> video_block_;
  AfrcnnBlock<T> audio_block_;
};

extern template class AvlitModel<float>;
extern template class AvlitModel<double>;

/// Total parameter count from the configuration alone.
std::size_t model_param_count(const ModelConfig& config);

// Checkpoint container: "AVLT", u32 version, config text, weight records.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::string& path, const AvlitModel<float>& model);
AvlitModel<float> load_checkpoint(const std::string& path);
std::string checkpoint_bytes(const AvlitModel<float>& model);
AvlitModel<float> checkpoint_from_bytes(const std::string& bytes);

}  // namespace avlit
