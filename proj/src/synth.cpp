#include "avlit/synth.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "avlit/errors.hpp"

namespace avlit {

namespace {

template <typename T>
double mean_square(std::span<const T> x) {
  double acc = 0;
  for (T v : x) acc += static_cast<double>(v) * static_cast<double>(v);
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

template <typename T>
double snr_impl(std::span<const T> reference, std::span<const T> signal) {
  return 10.0 * std::log10(mean_square(reference) / mean_square(signal));
}

double draw(const SnrRange& r, std::mt19937_64& rng) {
  return r.fixed() ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

std::vector<double> lowpass_noise(std::uint64_t seed, std::size_t samples, std::size_t sample_rate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> white(0.0, 1.0);
  const double cutoff = std::min(1000.0, 0.45 * static_cast<double>(sample_rate));
  const double a = std::exp(-2.0 * M_PI * cutoff / static_cast<double>(sample_rate));
  std::vector<double> out(samples);
  double y = 0;
  for (auto& v : out) {
    y = a * y + (1.0 - a) * white(rng);
    v = y;
  }
  return out;
}

std::vector<float> to_float(const std::vector<double>& x) { return {x.begin(), x.end()}; }

}  // namespace

std::pair<double, double> f0_range(std::size_t speaker_id) {
  if (speaker_id >= kSpeakerPool) throw std::out_of_range("speaker id " + std::to_string(speaker_id));
  const double lo = kBaseF0 * std::pow(kF0Ratio, static_cast<double>(speaker_id));
  return {lo, lo * kF0Spread};
}

std::size_t ClipFormat::samples(double seconds) const {
  return static_cast<std::size_t>(std::llround(seconds * static_cast<double>(sample_rate)));
}

std::size_t ClipFormat::frames(std::size_t samples) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(samples) / static_cast<double>(sample_rate) * fps));
}

SnrRange parse_snr_range(const std::string& text) {
  auto number = [&](std::string_view s) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError("bad SNR value '" + std::string(s) + "' in '" + text + "'");
    }
    return v;
  };
  const auto colon = text.find(':');
  SnrRange r;
  if (colon == std::string::npos) {
    r.lo = r.hi = number(text);
  } else {
    r.lo = number(std::string_view(text).substr(0, colon));
    r.hi = number(std::string_view(text).substr(colon + 1));
  }
  if (r.lo > r.hi) throw ConfigError("SNR range '" + text + "' has lo > hi");
  return r;
}

std::string format_snr_range(const SnrRange& r) {
  auto num = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  return num(r.lo) + ":" + num(r.hi);
}

void MixSpec::validate() const {
  if (speakers < 1 || speakers > kSpeakerPool) {
    throw ConfigError("speakers must be in [1, " + std::to_string(kSpeakerPool) + "]");
  }
  if (!(duration >= 0.5)) throw ConfigError("duration must be at least 0.5 s");
  if (!(speech_snr.lo <= speech_snr.hi) || !(noise_snr.lo <= noise_snr.hi)) throw ConfigError("SNR range has lo > hi");
  if (format.sample_rate < 1000) throw ConfigError("sample_rate must be at least 1000");
  if (!(format.fps > 0)) throw ConfigError("fps must be > 0");
  if (format.frame_size < 8) throw ConfigError("frame size must be at least 8");
  if (format.frames(format.samples(duration)) == 0) throw ConfigError("duration yields zero video frames");
}

double snr_db(std::span<const double> reference, std::span<const double> signal) {
  return snr_impl(reference, signal);
}

double snr_db(std::span<const float> reference, std::span<const float> signal) { return snr_impl(reference, signal); }

double snr_gain(std::span<const double> signal, std::span<const double> reference, double target_db) {
  const double ps = mean_square(signal), pr = mean_square(reference);
  if (!(ps > 0) || !(pr > 0)) throw std::domain_error("scale_to_snr: zero-power input");
  return std::sqrt(pr / (ps * std::pow(10.0, target_db / 10.0)));
}

std::vector<double> scale_to_snr(std::span<const double> signal, std::span<const double> reference, double target_db) {
  const double g = snr_gain(signal, reference, target_db);
  std::vector<double> out(signal.begin(), signal.end());
  for (auto& v : out) v *= g;
  return out;
}

std::vector<double> random_envelope(std::uint64_t seed, std::size_t samples, std::size_t sample_rate) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> length(0.12, 0.35), amplitude(0.4, 1.0), unit(0.0, 1.0);
  struct Segment {
    std::size_t start, len;
    double amp;
  };
  std::vector<Segment> segments;
  for (std::size_t t = 0; t < samples;) {
    const auto len = std::max<std::size_t>(
        1, std::min(samples - t, static_cast<std::size_t>(length(rng) * static_cast<double>(sample_rate))));
    const bool voiced = unit(rng) < 0.75;
    const double amp = amplitude(rng);
    segments.push_back({t, len, voiced ? amp : 0.0});
    t += len;
  }
  if (std::none_of(segments.begin(), segments.end(), [](const Segment& s) { return s.amp > 0; })) {
    std::max_element(segments.begin(), segments.end(), [](auto& a, auto& b) { return a.len < b.len; })->amp = 1.0;
  }
  std::vector<double> env(samples, 0.0);
  for (const auto& s : segments) {
    if (s.amp == 0) continue;
    for (std::size_t i = 0; i < s.len; ++i) {
      const double u = std::sin(M_PI * (static_cast<double>(i) + 0.5) / static_cast<double>(s.len));
      env[s.start + i] = s.amp * u * u;
    }
  }
  return env;
}

void draw_mouth(std::span<std::uint8_t> frame, std::uint32_t size, double opening) {
  std::fill(frame.begin(), frame.end(), std::uint8_t{0});
  const std::uint32_t max_h = size * 3 / 4;
  const auto h = kMouthMinHeight +
                 static_cast<std::uint32_t>(std::lround(std::clamp(opening, 0.0, 1.0) * (max_h - kMouthMinHeight)));
  const std::uint32_t top = (size - h) / 2;
  for (std::uint32_t y = top; y < top + h; ++y) {
    std::fill_n(frame.begin() + y * size + size / 4, size / 2, kMouthLevel);
  }
}

std::uint32_t mouth_height(std::span<const std::uint8_t> frame, std::uint32_t size) {
  std::uint32_t h = 0;
  for (std::uint32_t y = 0; y < size; ++y) h += frame[y * size + size / 2] == kMouthLevel;
  return h;
}

SpeakerClip render_speaker(double f0, std::vector<double> envelope, const ClipFormat& format, std::uint64_t phase_seed) {
  SpeakerClip clip;
  clip.f0 = f0;
  const std::size_t samples = envelope.size();
  const double sr = static_cast<double>(format.sample_rate);

  std::mt19937_64 rng(phase_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::vector<double> phases, amps;
  double amp_sum = 0;
  for (std::size_t k = 1; k <= 12 && static_cast<double>(k) * f0 < 0.45 * sr; ++k) {
    phases.push_back(phase(rng));
    amps.push_back(1.0 / static_cast<double>(k));
    amp_sum += amps.back();
  }
  clip.audio.assign(samples, 0.0);
  for (std::size_t t = 0; t < samples; ++t) {
    if (envelope[t] == 0) continue;
    const double w = 2.0 * M_PI * f0 * static_cast<double>(t) / sr;
    double v = 0;
    for (std::size_t k = 0; k < amps.size(); ++k) v += amps[k] * std::sin(static_cast<double>(k + 1) * w + phases[k]);
    clip.audio[t] = 0.5 * envelope[t] * v / amp_sum;
  }

  const std::uint32_t size = format.frame_size;
  auto& fr = clip.frames;
  fr.frames = static_cast<std::uint32_t>(format.frames(samples));
  fr.height = fr.width = size;
  fr.pixels.resize(fr.frame_size() * fr.frames);
  for (std::uint32_t f = 0; f < fr.frames; ++f) {
    const auto at = static_cast<std::size_t>(std::llround(static_cast<double>(f) / format.fps * sr));
    const double opening = samples == 0 ? 0.0 : envelope[std::min(at, samples - 1)];
    draw_mouth(std::span(fr.pixels).subspan(f * fr.frame_size(), fr.frame_size()), size, opening);
  }
  clip.envelope = std::move(envelope);
  return clip;
}

SpeakerClip synth_speaker(std::uint64_t seed, double duration, std::size_t speaker_id, const ClipFormat& format) {
  if (!(duration >= 0.5)) throw ConfigError("speaker clips need at least 0.5 s");
  std::mt19937_64 rng(seed);
  const auto [lo, hi] = f0_range(speaker_id);
  const double f0 = std::uniform_real_distribution<double>(lo, hi)(rng);
  const std::size_t samples = format.samples(duration);
  const std::uint64_t env_seed = rng();
  const std::uint64_t phase_seed = rng();
  return render_speaker(f0, random_envelope(env_seed, samples, format.sample_rate), format, phase_seed);
}

MixedItem synth_mixture(const MixSpec& spec, std::size_t index) {
  spec.validate();
  MixedItem item;
  auto& meta = item.meta;
  meta.seed = spec.seed ^ static_cast<std::uint64_t>(index);
  meta.noise = spec.noise;
  std::mt19937_64 rng(meta.seed);

  std::vector<std::size_t> pool(kSpeakerPool);
  std::iota(pool.begin(), pool.end(), 0);
  std::shuffle(pool.begin(), pool.end(), rng);
  meta.speaker_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.speakers));

  std::vector<SpeakerClip> clips;
  for (auto id : meta.speaker_ids) clips.push_back(synth_speaker(rng(), spec.duration, id, spec.format));
  for (std::size_t i = 1; i < spec.speakers; ++i) meta.speech_snr_db.push_back(draw(spec.speech_snr, rng));
  meta.noise_snr_db = draw(spec.noise_snr, rng);
  const std::uint64_t noise_seed = rng();

  const std::size_t T = clips[0].audio.size();
  auto& ex = item.example;
  ex.speakers = spec.speakers;
  ex.samples = T;
  ex.frames = clips[0].frames.frames;
  ex.height = ex.width = spec.format.frame_size;
  ex.sources.reserve(spec.speakers * T);
  const auto& ref = clips[0].audio;
  for (std::size_t i = 0; i < spec.speakers; ++i) {
    const auto s = i == 0 ? ref : scale_to_snr(clips[i].audio, ref, meta.speech_snr_db[i - 1]);
    ex.sources.insert(ex.sources.end(), s.begin(), s.end());
    ex.video.insert(ex.video.end(), clips[i].frames.pixels.begin(), clips[i].frames.pixels.end());
  }
  if (spec.noise) {
    item.noise = to_float(scale_to_snr(lowpass_noise(noise_seed, T, spec.format.sample_rate), ref, meta.noise_snr_db));
  } else {
    item.noise.assign(T, 0.0f);
  }

  ex.mixture.assign(ex.sources.begin(), ex.sources.begin() + static_cast<std::ptrdiff_t>(T));
  for (std::size_t i = 1; i < spec.speakers; ++i) {
    for (std::size_t t = 0; t < T; ++t) ex.mixture[t] += ex.sources[i * T + t];
  }
  for (std::size_t t = 0; t < T; ++t) ex.mixture[t] += item.noise[t];
  return item;
}

std::vector<MixedItem> synth_corpus(const MixSpec& spec, std::size_t count, std::size_t first, std::size_t threads) {
  spec.validate();
  std::vector<MixedItem> items(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < count;) items[k] = synth_mixture(spec, first + k);
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return items;
}

std::vector<Example> examples_of(std::vector<MixedItem> items) {
  std::vector<Example> out;
  out.reserve(items.size());
  for (auto& it : items) out.push_back(std::move(it.example));
  return out;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("AVLIT_THREADS")) {
    std::size_t v = 0;
    const auto end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec == std::errc() && ptr == end && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace avlit
