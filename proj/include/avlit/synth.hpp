#pragma once

// Synthetic audio-visual speakers and SNR-controlled mixtures.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avlit/example.hpp"
#include "avlit/frames.hpp"

namespace avlit {

/// Number of synthetic voices. Voice k has a fundamental in
/// [kBaseF0 * kF0Ratio^k, kBaseF0 * kF0Ratio^k * kF0Spread).
inline constexpr std::size_t kSpeakerPool = 6;
inline constexpr double kBaseF0 = 100.0;
inline constexpr double kF0Ratio = 1.25;
inline constexpr double kF0Spread = 1.1;

// Mouth rectangle geometry in a frame of side `size`.
inline constexpr std::uint8_t kMouthLevel = 255;
inline constexpr std::uint32_t kMouthMinHeight = 2;

std::pair<double, double> f0_range(std::size_t speaker_id);

struct ClipFormat {
  std::size_t sample_rate = 16000;
  double fps = 25.0;
  std::uint32_t frame_size = 64;  // H = W

  std::size_t samples(double seconds) const;
  /// round(T / sample_rate * fps)
  std::size_t frames(std::size_t samples) const;
  bool operator==(const ClipFormat&) const = default;
};

struct SnrRange {
  double lo = 0;
  double hi = 0;
  bool fixed() const { return lo == hi; }
  bool operator==(const SnrRange&) const = default;
};

/// "lo:hi" or a single value for a fixed SNR. Throws ConfigError.
SnrRange parse_snr_range(const std::string& text);
std::string format_snr_range(const SnrRange& r);

struct MixSpec {
  std::size_t speakers = 2;
  double duration = 2.0;  // seconds
  SnrRange speech_snr{-5, 5};
  SnrRange noise_snr{-6, 3};
  bool noise = true;  // false gives a silent noise track
  std::uint64_t seed = 0;
  ClipFormat format;

  void validate() const;
  bool operator==(const MixSpec&) const = default;
};

/// 10 log10(P_ref / P_signal), powers as mean squares.
double snr_db(std::span<const double> reference, std::span<const double> signal);
double snr_db(std::span<const float> reference, std::span<const float> signal);

/// Gain g with 10 log10(P_ref / P(g * signal)) = target_db.
/// Throws std::domain_error when either input has zero power.
double snr_gain(std::span<const double> signal, std::span<const double> reference, double target_db);
std::vector<double> scale_to_snr(std::span<const double> signal, std::span<const double> reference, double target_db);

struct SpeakerClip {
  double f0 = 0;
  std::vector<double> envelope;  // [T], in [0, 1]
  std::vector<double> audio;     // [T]
  FrameStack frames;             // [F, size, size]
};

/// Random syllable-like envelope: raised-sine bumps and pauses, at least one bump.
std::vector<double> random_envelope(std::uint64_t seed, std::size_t samples, std::size_t sample_rate);

/// Harmonic stack at `f0` shaped by `envelope`, plus mouth frames whose
/// rectangle height follows the envelope at each frame time.
SpeakerClip render_speaker(double f0, std::vector<double> envelope, const ClipFormat& format, std::uint64_t phase_seed);

/// Mouth frame for an opening in [0, 1].
void draw_mouth(std::span<std::uint8_t> frame, std::uint32_t size, double opening);
/// Rows of the rectangle in a frame drawn by draw_mouth (center column).
std::uint32_t mouth_height(std::span<const std::uint8_t> frame, std::uint32_t size);

SpeakerClip synth_speaker(std::uint64_t seed, double duration, std::size_t speaker_id, const ClipFormat& format = {});

struct MixMeta {
  std::uint64_t seed = 0;
  std::vector<std::size_t> speaker_ids;  // voice of each source, in source order
  std::vector<double> speech_snr_db;     // SNR of source 1 over source i, i = 2..M
  double noise_snr_db = 0;               // SNR of source 1 over the noise; unused when silent
  bool noise = true;
};

/// One generated item. example.mixture = ((s_1 + s_2) + ...) + n in float.
struct MixedItem {
  Example example;
  std::vector<float> noise;
  MixMeta meta;
};

/// Item `index` of the corpus defined by `spec`; its seed is spec.seed ^ index.
MixedItem synth_mixture(const MixSpec& spec, std::size_t index = 0);

/// Items [first, first + count), generated on up to `threads` workers.
/// The result does not depend on the thread count.
std::vector<MixedItem> synth_corpus(const MixSpec& spec, std::size_t count, std::size_t first = 0,
                                    std::size_t threads = 1);

std::vector<Example> examples_of(std::vector<MixedItem> items);

/// Worker cap from AVLIT_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_threads();

}  // namespace avlit
