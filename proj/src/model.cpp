#include "avlit/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "avlit/errors.hpp"

namespace avlit {

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("invalid value for '" + key + "': '" + value + "' (expected a non-negative integer)");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("invalid value for '" + key + "': '" + value + "' (expected a number)");
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join_positions(const std::vector<std::size_t>& p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) out += (i ? "," : "") + std::to_string(p[i]);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (speakers < 1) throw ConfigError("speakers must be >= 1");
  if (audio_iters < 1) throw ConfigError("audio_iters must be >= 1");
  if (!std::is_sorted(fusion_positions.begin(), fusion_positions.end()) ||
      std::adjacent_find(fusion_positions.begin(), fusion_positions.end()) != fusion_positions.end()) {
    throw ConfigError("fusion positions must be sorted and unique");
  }
  for (auto p : fusion_positions) {
    if (p >= audio_iters) {
      throw ConfigError("fusion position " + std::to_string(p) + " is outside 0.." + std::to_string(audio_iters - 1));
    }
  }
  if (enc_channels < 1 || enc_kernel < 1 || enc_stride < 1) throw ConfigError("encoder sizes must be >= 1");
  if (audio_block.io_channels != enc_channels) {
    throw ConfigError("audio block io_channels (" + std::to_string(audio_block.io_channels) +
                      ") must equal enc_channels (" + std::to_string(enc_channels) + ")");
  }
  audio_block.validate();
  video_block.validate();
  if (frame_height == 0 || frame_width == 0 || frame_height % 16 || frame_width % 16) {
    throw ConfigError("frame size must be a positive multiple of 16");
  }
  if (video_embed != frame_embedding_size(frame_height, frame_width)) {
    throw ConfigError("video_embed must be " + std::to_string(frame_embedding_size(frame_height, frame_width)) +
                      " for " + std::to_string(frame_height) + "x" + std::to_string(frame_width) + " frames");
  }
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ConfigError("fps must be positive");
  if (sample_rate < 1) throw ConfigError("sample_rate must be >= 1");
}

std::size_t ModelConfig::latent_length(std::size_t samples) const {
  if (samples < enc_kernel) {
    throw DimensionError("encode_audio", "time",
                         "waveform of " + std::to_string(samples) + " samples is shorter than the kernel (" +
                             std::to_string(enc_kernel) + ")");
  }
  return (samples - enc_kernel) / enc_stride + 1;
}

std::size_t ModelConfig::expected_frames(std::size_t samples) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(samples) / sample_rate * fps));
}

bool ModelConfig::fuses_at(std::size_t iteration) const {
  return std::binary_search(fusion_positions.begin(), fusion_positions.end(), iteration);
}

std::size_t frame_embedding_size(std::size_t height, std::size_t width) {
  return kFrameEncoderChannels.back() * (height / 16) * (width / 16);
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "avlit-2") {
    c.audio_iters = 2;
  } else if (name == "avlit-4") {
    c.audio_iters = 4;
  } else if (name == "avlit-8") {
    c.audio_iters = 8;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected avlit-2, avlit-4 or avlit-8)");
  }
  c.video_iters = c.audio_iters / 2;
  c.fusion_positions = {0};
  return c;
}

std::vector<std::size_t> fusion_schedule(const std::string& name, std::size_t audio_iters) {
  if (audio_iters < 1) throw ConfigError("audio_iters must be >= 1");
  if (name == "early") return {0};
  if (name == "middle") return {audio_iters / 2};
  if (name == "late") return {audio_iters - 1};
  if (name == "none") return {};
  if (name == "all") {
    std::vector<std::size_t> all(audio_iters);
    for (std::size_t i = 0; i < audio_iters; ++i) all[i] = i;
    return all;
  }
  throw ConfigError("unknown fusion schedule '" + name + "'");
}

std::vector<std::size_t> parse_fusion(const std::string& text, std::size_t audio_iters) {
  if (text.empty()) return {};
  if (!std::isdigit(static_cast<unsigned char>(text[0]))) return fusion_schedule(text, audio_iters);
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count("fusion", item));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c) {
  auto n = [](std::size_t v) { return std::to_string(v); };
  return {
      {"speakers", n(c.speakers)},
      {"audio_iters", n(c.audio_iters)},
      {"video_iters", n(c.video_iters)},
      {"fusion", join_positions(c.fusion_positions)},
      {"enc_channels", n(c.enc_channels)},
      {"enc_kernel", n(c.enc_kernel)},
      {"enc_stride", n(c.enc_stride)},
      {"audio_bottleneck", n(c.audio_block.bottleneck)},
      {"audio_channels", n(c.audio_block.stage_channels)},
      {"audio_stages", n(c.audio_block.stages)},
      {"audio_down_kernel", n(c.audio_block.down_kernel)},
      {"video_io", n(c.video_block.io_channels)},
      {"video_bottleneck", n(c.video_block.bottleneck)},
      {"video_channels", n(c.video_block.stage_channels)},
      {"video_stages", n(c.video_block.stages)},
      {"video_down_kernel", n(c.video_block.down_kernel)},
      {"video_embed", n(c.video_embed)},
      {"frame_height", n(c.frame_height)},
      {"frame_width", n(c.frame_width)},
      {"fps", format_real(c.fps)},
      {"sample_rate", n(c.sample_rate)},
  };
}

std::string config_to_text(const ModelConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + "=" + v + "\n";
  return out;
}

bool set_config_entry(ModelConfig& c, const std::string& key, const std::string& value) {
  auto count = [&] { return parse_count(key, value); };
  if (key == "speakers") c.speakers = count();
  else if (key == "audio_iters") c.audio_iters = count();
  else if (key == "video_iters") c.video_iters = count();
  else if (key == "fusion") c.fusion_positions = parse_fusion(value, std::max<std::size_t>(c.audio_iters, 1));
  else if (key == "enc_channels") c.enc_channels = c.audio_block.io_channels = count();
  else if (key == "enc_kernel") c.enc_kernel = count();
  else if (key == "enc_stride") c.enc_stride = count();
  else if (key == "audio_bottleneck") c.audio_block.bottleneck = count();
  else if (key == "audio_channels") c.audio_block.stage_channels = count();
  else if (key == "audio_stages") c.audio_block.stages = count();
  else if (key == "audio_down_kernel") c.audio_block.down_kernel = count();
  else if (key == "video_io") c.video_block.io_channels = count();
  else if (key == "video_bottleneck") c.video_block.bottleneck = count();
  else if (key == "video_channels") c.video_block.stage_channels = count();
  else if (key == "video_stages") c.video_block.stages = count();
  else if (key == "video_down_kernel") c.video_block.down_kernel = count();
  else if (key == "video_embed") c.video_embed = count();
  else if (key == "frame_height") c.frame_height = count();
  else if (key == "frame_width") c.frame_width = count();
  else if (key == "fps") c.fps = parse_real(key, value);
  else if (key == "sample_rate") c.sample_rate = count();
  else return false;
  return true;
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig c;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config line " + std::to_string(lineno) + ": missing '='");
    if (!set_config_entry(c, line.substr(0, eq), line.substr(eq + 1))) {
      throw ConfigError("model config line " + std::to_string(lineno) + ": unknown key '" + line.substr(0, eq) + "'");
    }
  }
  c.validate();
  return c;
}

template <typename T>
FrameEncoder<T> FrameEncoder<T>::create(std::mt19937_64& rng) {
  FrameEncoder enc;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto cin = kFrameEncoderChannels[i], cout = kFrameEncoderChannels[i + 1];
    enc.weights[i] = uniform_init<T>({cout, cin, 2, 2}, cin * 4, rng);
  }
  return enc;
}

template <typename T>
Tensor<T> FrameEncoder<T>::operator()(const Tensor<T>& frame) const {
  Tensor<T> h = frame;
  for (const auto& w : weights) h = leaky_relu(conv2d(h, w, Tensor<T>{}, 2), static_cast<T>(kFrameLeakySlope));
  return h;
}

template <typename T>
void FrameEncoder<T>::collect(const std::string& prefix, ParamList<T>& out, bool trainable) const {
  for (std::size_t i = 0; i < 4; ++i) out.push_back({prefix + ".conv" + std::to_string(i + 1) + ".weight", weights[i], trainable});
}

template <typename T>
FrameDecoder<T> FrameDecoder<T>::create(std::mt19937_64& rng) {
  FrameDecoder dec;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto cin = kFrameEncoderChannels[4 - i], cout = kFrameEncoderChannels[3 - i];
    dec.weights[i] = uniform_init<T>({cin, cout, 2, 2}, cin, rng);
    dec.biases[i] = uniform_init<T>({cout}, cin, rng);
  }
  return dec;
}

template <typename T>
Tensor<T> FrameDecoder<T>::operator()(const Tensor<T>& code) const {
  Tensor<T> h = code;
  for (std::size_t i = 0; i < 4; ++i) {
    h = conv_transpose2d(h, weights[i], biases[i], 2);
    h = i < 3 ? leaky_relu(h, static_cast<T>(kFrameLeakySlope)) : sigmoid(h);
  }
  return h;
}

template <typename T>
void FrameDecoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < 4; ++i) {
    const auto tag = prefix + ".deconv" + std::to_string(i + 1);
    out.push_back({tag + ".weight", weights[i], true});
    out.push_back({tag + ".bias", biases[i], true});
  }
}

template <typename T>
AvlitModel<T>::AvlitModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  encoder_ = Conv1dLayer<T>::create(1, c.enc_channels, c.enc_kernel, {.stride = c.enc_stride}, rng);
  decoder_weight_ = uniform_init<T>({c.enc_channels, c.speakers, c.enc_kernel}, c.enc_channels * c.enc_kernel, rng);
  decoder_bias_ = uniform_init<T>({c.speakers}, c.enc_channels * c.enc_kernel, rng);
  frame_encoder_ = FrameEncoder<T>::create(rng);
  const auto vio = c.video_block.io_channels;
  video_in_ = Conv1dLayer<T>::create(c.video_embed, vio, 1, {}, rng);
  video_out_ = Conv1dLayer<T>::create(c.speakers * vio, c.enc_channels, 1, {}, rng);
  if (c.video_iters > 0) video_block_ = AfrcnnBlock<T>(c.video_block, rng);
  audio_block_ = AfrcnnBlock<T>(c.audio_block, rng);
}

template <typename T>
void AvlitModel<T>::check_inputs(std::size_t samples, const Shape& frames_shape) const {
  const auto& c = config_;
  const auto latent = c.latent_length(samples);
  if (latent < c.audio_block.min_length()) {
    throw ConfigError("latent length " + std::to_string(latent) + " is shorter than the audio block minimum " +
                      std::to_string(c.audio_block.min_length()));
  }
  if (frames_shape.size() != 4) throw DimensionError("separate", "frames", "expected [M, F, H, W], got " + to_string(frames_shape));
  if (frames_shape[0] != c.speakers) {
    throw DimensionError("separate", "speakers",
                         "expected " + std::to_string(c.speakers) + " videos, got " + std::to_string(frames_shape[0]));
  }
  if (frames_shape[2] != c.frame_height || frames_shape[3] != c.frame_width) {
    throw DimensionError("separate", "frame_size",
                         "expected " + std::to_string(c.frame_height) + "x" + std::to_string(c.frame_width) +
                             ", got " + std::to_string(frames_shape[2]) + "x" + std::to_string(frames_shape[3]));
  }
  const auto frames = frames_shape[1];
  const auto expected = c.expected_frames(samples);
  if ((frames > expected ? frames - expected : expected - frames) > 1) {
    throw DimensionError("separate", "frames",
                         std::to_string(frames) + " frames do not cover " + std::to_string(samples) +
                             " samples (expected " + std::to_string(expected) + " +/- 1)");
  }
  if (c.video_iters > 0 && !c.fusion_positions.empty() && frames < c.video_block.min_length()) {
    throw ConfigError(std::to_string(frames) + " frames is shorter than the video block minimum " +
                      std::to_string(c.video_block.min_length()));
  }
}

template <typename T>
Tensor<T> AvlitModel<T>::encode_audio(const Tensor<T>& mixture) const {
  if (mixture.rank() != 2 || mixture.dim(0) != 1) {
    throw DimensionError("encode_audio", "channels", "expected [1, T], got " + to_string(mixture.shape()));
  }
  config_.latent_length(mixture.dim(1));
  return encoder_(mixture);
}

template <typename T>
Tensor<T> AvlitModel<T>::encode_video(const Tensor<T>& frames) const {
  const auto& c = config_;
  if (frames.rank() != 4) throw DimensionError("encode_video", "frames", "expected [M, F, H, W], got " + to_string(frames.shape()));
  if (frames.dim(2) != c.frame_height || frames.dim(3) != c.frame_width) {
    throw DimensionError("encode_video", "frame_size",
                         "expected " + std::to_string(c.frame_height) + "x" + std::to_string(c.frame_width) +
                             ", got " + std::to_string(frames.dim(2)) + "x" + std::to_string(frames.dim(3)));
  }
  NoGradGuard no_grad;
  const std::size_t speakers = frames.dim(0), count = frames.dim(1), pixels = c.frame_height * c.frame_width;
  const std::size_t embed = c.video_embed;
  std::vector<T> out(speakers * embed * count);
  auto src = frames.data();
  for (std::size_t m = 0; m < speakers; ++m) {
    for (std::size_t f = 0; f < count; ++f) {
      const auto* p = src.data() + (m * count + f) * pixels;
      auto frame = Tensor<T>::from({1, c.frame_height, c.frame_width}, std::vector<T>(p, p + pixels));
      const auto code = frame_encoder_(frame);
      for (std::size_t k = 0; k < embed; ++k) out[(m * embed + k) * count + f] = code.data()[k];
    }
  }
  return Tensor<T>::from({speakers, embed, count}, std::move(out));
}

template <typename T>
Tensor<T> AvlitModel<T>::video_branch(const Tensor<T>& embeddings, std::size_t latent_length) const {
  const auto& c = config_;
  if (embeddings.rank() != 3 || embeddings.dim(0) != c.speakers || embeddings.dim(1) != c.video_embed) {
    throw DimensionError("video_branch", "channels",
                         "expected [" + std::to_string(c.speakers) + ", " + std::to_string(c.video_embed) +
                             ", F], got " + to_string(embeddings.shape()));
  }
  const std::size_t frames = embeddings.dim(2);
  std::vector<Tensor<T>> per_speaker;
  for (std::size_t m = 0; m < c.speakers; ++m) {
    auto g = video_in_(reshape(narrow(embeddings, 0, m, 1), {c.video_embed, frames}));
    Tensor<T> r;
    for (std::size_t i = 0; i < c.video_iters; ++i) r = video_block_.forward(i == 0 ? g : add(r, g));
    per_speaker.push_back(c.video_iters == 0 ? g : r);
  }
  auto merged = per_speaker.size() == 1 ? per_speaker[0] : concat(per_speaker, 0);
  return nearest_interp1d(video_out_(merged), latent_length);
}

template <typename T>
Tensor<T> AvlitModel<T>::audio_branch(const Tensor<T>& audio, const Tensor<T>& video) const {
  const auto& c = config_;
  if (!c.fusion_positions.empty()) {
    if (!video.defined()) throw ConfigError("audio_branch: fusion positions set but no video features given");
    if (video.shape() != audio.shape()) {
      throw DimensionError("audio_branch", "video", "f'_V " + to_string(video.shape()) + " vs f_A " + to_string(audio.shape()));
    }
  }
  Tensor<T> r;
  for (std::size_t i = 0; i < c.audio_iters; ++i) {
    auto in = i == 0 ? audio : add(r, audio);
    if (c.fuses_at(i)) in = add(in, video);
    r = audio_block_.forward(in);
  }
  return r;
}

template <typename T>
Tensor<T> AvlitModel<T>::decode(const Tensor<T>& audio, const Tensor<T>& mask_logits, std::size_t samples) const {
  auto masked = mul(audio, relu(mask_logits));
  auto out = conv_transpose1d(masked, decoder_weight_, decoder_bias_, config_.enc_stride, 0);
  const auto len = out.dim(1);
  if (len >= samples) return len == samples ? out : narrow(out, 1, 0, samples);
  return concat(std::vector<Tensor<T>>{out, Tensor<T>::zeros({config_.speakers, samples - len})}, 1);
}

template <typename T>
Tensor<T> AvlitModel<T>::separate(const Tensor<T>& mixture, const Tensor<T>& frames) const {
  check_inputs(mixture.rank() == 2 ? mixture.dim(1) : 0, frames.shape());
  auto audio = encode_audio(mixture);
  Tensor<T> video;
  if (!config_.fusion_positions.empty()) video = video_branch(encode_video(frames), audio.dim(1));
  return decode(audio, audio_branch(audio, video), mixture.dim(1));
}

template <typename T>
Tensor<T> AvlitModel<T>::separate_with_video(const Tensor<T>& mixture, const Tensor<T>& video) const {
  auto audio = encode_audio(mixture);
  if (audio.dim(1) < config_.audio_block.min_length()) {
    throw ConfigError("latent length " + std::to_string(audio.dim(1)) + " is shorter than the audio block minimum " +
                      std::to_string(config_.audio_block.min_length()));
  }
  return decode(audio, audio_branch(audio, video), mixture.dim(1));
}

template <typename T>
ParamList<T> AvlitModel<T>::parameters() const {
  ParamList<T> out;
  encoder_.collect("encoder", out);
  out.push_back({"decoder.weight", decoder_weight_, true});
  out.push_back({"decoder.bias", decoder_bias_, true});
  frame_encoder_.collect("frame_encoder", out, false);
  video_in_.collect("video_in", out);
  if (config_.video_iters > 0) video_block_.weights().collect("video_block", out);
  video_out_.collect("video_out", out);
  audio_block_.weights().collect("audio_block", out);
  return out;
}

template <typename T>
ParamList<T> AvlitModel<T>::trainable_parameters() const {
  ParamList<T> out;
  for (auto& p : parameters()) {
    if (p.trainable) out.push_back(p);
  }
  return out;
}

template <typename T>
AvlitModel<T> AvlitModel<T>::clone() const {
  AvlitModel copy(config_, 0);
  auto dst = copy.parameters();
  assign_values(parameters(), dst);
  return copy;
}

std::size_t model_param_count(const ModelConfig& c) {
  c.validate();
  std::size_t n = 0;
  n += c.enc_channels * c.enc_kernel + c.enc_channels;
  n += c.enc_channels * c.speakers * c.enc_kernel + c.speakers;
  for (std::size_t i = 0; i < 4; ++i) n += kFrameEncoderChannels[i] * kFrameEncoderChannels[i + 1] * 4;
  const auto vio = c.video_block.io_channels;
  n += c.video_embed * vio + vio;
  if (c.video_iters > 0) n += block_param_count(c.video_block);
  n += c.speakers * vio * c.enc_channels + c.enc_channels;
  n += block_param_count(c.audio_block);
  return n;
}

template struct FrameEncoder<float>;
template struct FrameEncoder<double>;
template struct FrameDecoder<float>;
template struct FrameDecoder<double>;
template class AvlitModel<float>;
template class AvlitModel<double>;

}  // namespace avlit
