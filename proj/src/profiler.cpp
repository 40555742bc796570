#include "avlit/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "avlit/errors.hpp"

namespace avlit {

namespace {

using u64 = std::uint64_t;

class Builder {
 public:
  explicit Builder(std::vector<CostRow>& rows) : rows_(rows) {}

  // Pointwise or depthwise conv1d with bias; `calls` invocations.
  void conv(const std::string& name, u64 cin_per_group, u64 cout, u64 kernel, u64 out_len, u64 calls, u64 params) {
    rows_.push_back({name, calls * cout * cin_per_group * kernel * out_len, params, calls * cout * out_len});
  }
  void pointwise(const std::string& name, u64 cin, u64 cout, u64 len, u64 calls) {
    conv(name, cin, cout, 1, len, calls, cin * cout + cout);
  }
  void norm(const std::string& name, u64 channels, u64 len, u64 calls) {
    rows_.push_back({name, calls * channels * len, 2 * channels, calls * channels * len});
  }
  void prelu(const std::string& name, u64 channels, u64 len, u64 calls) {
    rows_.push_back({name, 0, 1, calls * channels * len});
  }

 private:
  std::vector<CostRow>& rows_;
};

void block_rows(Builder& b, const std::string& prefix, const BlockConfig& c, std::size_t len, u64 calls) {
  const auto lengths = pyramid_lengths(len, c.stages);
  const u64 io = c.io_channels, bn = c.bottleneck, ch = c.stage_channels, k = c.down_kernel, s = c.stages;
  b.pointwise(prefix + ".entry", io, bn, len, calls);
  b.pointwise(prefix + ".expand", bn, ch, len, calls);
  b.norm(prefix + ".expand_norm", ch, len, calls);
  b.prelu(prefix + ".expand_act", ch, len, calls);
  for (std::size_t i = 1; i < s; ++i) {
    const auto tag = std::to_string(i);
    b.conv(prefix + ".down" + tag, 1, ch, k, lengths[i], calls, ch * k + ch);
    b.norm(prefix + ".down_norm" + tag, ch, lengths[i], calls);
    b.prelu(prefix + ".down_act" + tag, ch, lengths[i], calls);
  }
  for (std::size_t i = 1; i < s; ++i) {
    b.conv(prefix + ".fuse_down" + std::to_string(i), 1, ch, k, lengths[i], calls, ch * k + ch);
  }
  for (std::size_t l = 0; l < s; ++l) {
    const auto tag = std::to_string(l);
    b.pointwise(prefix + ".fuse_proj" + tag, fusion_fan_in(l, s) * ch, ch, lengths[l], calls);
    b.norm(prefix + ".fuse_norm" + tag, ch, lengths[l], calls);
    b.prelu(prefix + ".fuse_act" + tag, ch, lengths[l], calls);
  }
  b.pointwise(prefix + ".global_proj", s * ch, ch, len, calls);
  b.norm(prefix + ".global_norm", ch, len, calls);
  b.prelu(prefix + ".global_act", ch, len, calls);
  b.pointwise(prefix + ".squeeze", ch, bn, len, calls);
  b.prelu(prefix + ".squeeze_act", bn, len, calls);
  b.pointwise(prefix + ".exit", bn, io, len, calls);
}

std::string pad(const std::string& s, std::size_t w, bool left) {
  if (s.size() >= w) return s;
  return left ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

}  // namespace

std::uint64_t CostReport::total_macs() const {
  u64 n = 0;
  for (const auto& r : rows) n += r.macs;
  return n;
}

std::uint64_t CostReport::total_params() const {
  u64 n = 0;
  for (const auto& r : rows) n += r.params;
  return n;
}

std::uint64_t CostReport::total_act_elems() const {
  u64 n = 0;
  for (const auto& r : rows) n += r.act_elems;
  return n;
}

std::string CostReport::csv() const {
  std::ostringstream out;
  out << "layer,macs,params,act_elems\n";
  for (const auto& r : rows) out << r.layer << ',' << r.macs << ',' << r.params << ',' << r.act_elems << '\n';
  out << "total," << total_macs() << ',' << total_params() << ',' << total_act_elems() << '\n';
  return out.str();
}

std::string CostReport::table() const {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.layer.size());
  std::ostringstream out;
  auto line = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d) {
    out << pad(a, w, false) << "  " << pad(b, 16, true) << "  " << pad(c, 10, true) << "  " << pad(d, 14, true) << '\n';
  };
  line("layer", "MACs", "params", "act_elems");
  for (const auto& r : rows) line(r.layer, std::to_string(r.macs), std::to_string(r.params), std::to_string(r.act_elems));
  line("total", std::to_string(total_macs()), std::to_string(total_params()), std::to_string(total_act_elems()));
  char summary[160];
  std::snprintf(summary, sizeof summary, "%.3f G MACs, %.4f M params, %.2f s input (%zu samples), N_A=%zu, N_V=%zu\n",
                static_cast<double>(total_macs()) / 1e9, static_cast<double>(total_params()) / 1e6, seconds, samples,
                audio_iters, video_iters);
  out << summary;
  return out.str();
}

std::size_t input_samples(const ModelConfig& config, double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * static_cast<double>(config.sample_rate)));
}

CostReport cost_report(const ModelConfig& c, double seconds) {
  c.validate();
  if (!(seconds > 0)) throw ConfigError("profile duration must be > 0");
  CostReport report;
  report.seconds = seconds;
  report.samples = input_samples(c, seconds);
  report.audio_iters = c.audio_iters;
  report.video_iters = c.video_iters;

  const u64 T = report.samples, L = c.latent_length(T), C = c.enc_channels, M = c.speakers, K = c.enc_kernel;
  if (L < c.audio_block.min_length()) throw ConfigError("input too short for the audio block");
  const bool video = !c.fusion_positions.empty();
  const u64 F = video ? c.expected_frames(T) : 0, vio = c.video_block.io_channels;
  if (video && c.video_iters > 0 && F < c.video_block.min_length()) throw ConfigError("too few frames for the video block");
  const u64 frame_calls = M * F;

  Builder b(report.rows);
  b.conv("encoder", 1, C, K, L, 1, C * K + C);

  std::size_t h = c.frame_height, w = c.frame_width;
  for (std::size_t i = 0; i < 4; ++i) {
    const u64 cin = kFrameEncoderChannels[i], cout = kFrameEncoderChannels[i + 1];
    h /= 2;
    w /= 2;
    report.rows.push_back({"frame_encoder.conv" + std::to_string(i + 1), frame_calls * cout * cin * 4 * h * w,
                           cout * cin * 4, frame_calls * cout * h * w});
  }
  b.pointwise("video_in", c.video_embed, vio, F, M);
  if (c.video_iters > 0) block_rows(b, "video_block", c.video_block, std::max<u64>(F, 1), video ? M * c.video_iters : 0);
  b.pointwise("video_out", M * vio, C, F, 1);
  block_rows(b, "audio_block", c.audio_block, L, c.audio_iters);

  const u64 decoded = c.decoded_length(L);
  report.rows.push_back({"decoder", C * M * K * L, C * M * K + M, M * decoded});
  return report;
}

std::uint64_t count_params(const ModelConfig& config) { return model_param_count(config); }

std::uint64_t count_macs(const ModelConfig& config, double seconds) { return cost_report(config, seconds).total_macs(); }

Timing time_inference(const AvlitModel<float>& model, double seconds, std::size_t trials) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  const auto& c = model.config();
  const std::size_t T = input_samples(c, seconds), F = c.expected_frames(T);
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> mix(T), frames(c.speakers * F * c.frame_height * c.frame_width);
  for (auto& v : mix) v = u(rng);
  for (auto& v : frames) v = 0.5f * (u(rng) + 1.0f);
  const auto x = Tensor<float>::from({1, T}, std::move(mix));
  const auto v = Tensor<float>::from({c.speakers, F, c.frame_height, c.frame_width}, std::move(frames));

  NoGradGuard no_grad;
  model.separate(x, v);
  std::vector<double> times;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.separate(x, v);
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  Timing t;
  t.trials = trials;
  for (double s : times) t.mean += s / static_cast<double>(trials);
  double var = 0;
  for (double s : times) var += (s - t.mean) * (s - t.mean) / static_cast<double>(trials);
  t.stddev = trials == 1 ? 0.0 : std::sqrt(var);
  return t;
}

}  // namespace avlit
