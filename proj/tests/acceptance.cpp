// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "avlit/corpus.hpp"
#include "avlit/objectives.hpp"
#include "avlit/profiler.hpp"
#include "avlit/run_config.hpp"
#include "avlit/train.hpp"
#include "avlit/wav.hpp"
#include "gradcheck.hpp"
#include "micro_config.hpp"

using namespace avlit;
using avlit::testing::grad_check;
using avlit::testing::random_tensor;
using avlit::testing::T64;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "FAILED: " << what << "; ";
    }
  }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

// ---------------------------------------------------------------------------

void weight_sharing(Outcome& o) {
  const auto t0 = Clock::now();
  const auto p2 = count_params(preset("avlit-2")), p4 = count_params(preset("avlit-4")),
             p8 = count_params(preset("avlit-8"));
  const double dt = since(t0);
  o.check(p2 == p4 && p4 == p8, "parameter counts differ");
  o.check(dt < 1.0, "took longer than 1 s");
  o.detail << "AVLIT-2/4/8 = " << p2 << " / " << p4 << " / " << p8 << " in " << num(dt * 1e3, 2) << " ms";
}

void mac_linearity(Outcome& o) {
  const auto m2 = count_macs(preset("avlit-2"), 2.0), m4 = count_macs(preset("avlit-4"), 2.0),
             m8 = count_macs(preset("avlit-8"), 2.0);
  o.check(m8 - m4 == 2 * (m4 - m2), "MACs not affine in the iteration count");
  const double g4 = static_cast<double>(m4) / 1e9;
  o.check(std::abs(g4 - 19.03) <= 0.25 * 19.03, "AVLIT-4 MACs outside 19.03 G +-25%");
  o.detail << "MACs(8)-MACs(4) = " << m8 - m4 << " = 2 x " << m4 - m2 << "; AVLIT-4 @ 2 s/16 kHz = " << num(g4)
           << " G (ref 19.03, " << num(100 * (g4 / 19.03 - 1), 1) << "%)";
}

void parameter_budget(Outcome& o) {
  const auto c = preset("avlit-2");
  const double total = static_cast<double>(count_params(c));
  const double audio = static_cast<double>(block_param_count(c.audio_block));
  const double video = static_cast<double>(block_param_count(c.video_block));
  AvlitModel<float> model(c, 0);
  std::size_t encoder = 0;
  for (const auto& p : model.parameters()) {
    if (p.name.rfind("frame_encoder.", 0) == 0) encoder += p.value.size();
  }
  o.check(std::abs(total - 5.75e6) <= 0.2 * 5.75e6, "total outside 5.75 M +-20%");
  o.check(std::abs(audio - 4.9e6) <= 0.2 * 4.9e6, "audio block outside 4.9 M +-20%");
  o.check(std::abs(video - 0.35e6) <= 0.2 * 0.35e6, "video block outside 0.35 M +-20%");
  o.check(encoder == 4752, "frame encoder is not 4752 parameters");
  o.check(count_elements(model.parameters()) == count_params(c), "enumerated parameters differ from count_params");
  o.detail << "total " << num(total / 1e6, 4) << " M, audio block " << num(audio / 1e6, 4) << " M, video block "
           << num(video / 1e6, 4) << " M, frame encoder " << encoder;
}

// Random linear functional so every output coordinate reaches the loss.
T64 project(const T64& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng, -1, 1, false)));
}

void gradient_correctness(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(40);
  std::vector<std::pair<std::string, double>> errors;
  auto gc = [&](const std::string& name, std::vector<T64> leaves, std::function<T64(const std::vector<T64>&)> f,
                double h = 1e-5, std::size_t entries = 0) {
    errors.emplace_back(name, grad_check(std::move(leaves), f, h, entries).max_rel_error);
  };
  auto R = [&](Shape s, double lo = -1, double hi = 1) { return random_tensor(std::move(s), rng, lo, hi); };

  gc("conv1d", {R({3, 11}), R({4, 3, 3}), R({4})},
     [](auto& v) { return project(conv1d(v[0], v[1], v[2], {.stride = 1, .padding = 1}), 1); });
  gc("conv1d strided", {R({2, 12}), R({3, 2, 4}), R({3})},
     [](auto& v) { return project(conv1d(v[0], v[1], v[2], {.stride = 2, .padding = 1}), 2); });
  gc("conv1d depthwise", {R({4, 9}), R({4, 1, 5}), R({4})},
     [](auto& v) { return project(conv1d(v[0], v[1], v[2], {.stride = 2, .padding = 2, .groups = 4}), 3); });
  gc("conv_transpose1d", {R({3, 6}), R({3, 2, 5}), R({2})},
     [](auto& v) { return project(conv_transpose1d(v[0], v[1], v[2], 3, 1), 4); });
  gc("conv2d", {R({2, 6, 6}), R({3, 2, 2, 2}), R({3})}, [](auto& v) { return project(conv2d(v[0], v[1], v[2], 2), 5); });
  gc("conv_transpose2d", {R({3, 3, 3}), R({3, 2, 2, 2}), R({2})},
     [](auto& v) { return project(conv_transpose2d(v[0], v[1], v[2], 2), 6); });
  gc("nearest_interp1d", {R({3, 4})}, [](auto& v) { return project(nearest_interp1d(v[0], 11), 7); });
  gc("add (broadcast)", {R({3, 5}), R({3, 1})}, [](auto& v) { return project(add(v[0], v[1]), 8); });
  gc("sub", {R({3, 5}), R({3, 5})}, [](auto& v) { return project(sub(v[0], v[1]), 9); });
  gc("mul", {R({3, 5}), R({3, 5})}, [](auto& v) { return project(mul(v[0], v[1]), 10); });
  gc("scale", {R({4})}, [](auto& v) { return project(scale(v[0], 0.7), 11); });
  gc("relu", {R({3, 5})}, [](auto& v) { return project(relu(v[0]), 12); });
  gc("leaky_relu", {R({3, 5})}, [](auto& v) { return project(leaky_relu(v[0], 0.3), 13); });
  gc("prelu shared", {R({3, 5}), R({1}, 0.1, 0.4)}, [](auto& v) { return project(prelu(v[0], v[1]), 14); });
  gc("prelu per-channel", {R({3, 5}), R({3}, 0.1, 0.4)}, [](auto& v) { return project(prelu(v[0], v[1]), 15); });
  gc("sigmoid", {R({3, 5})}, [](auto& v) { return project(sigmoid(v[0]), 16); });
  gc("global_channel_norm", {R({4, 9}), R({4}, 0.5, 1.5), R({4})},
     [](auto& v) { return project(global_channel_norm(v[0], v[1], v[2]), 17); });
  gc("sum", {R({2, 3})}, [](auto& v) { return scale(sum(mul(v[0], v[0])), 0.5); });
  gc("mean", {R({2, 3})}, [](auto& v) { return mean(mul(v[0], v[0])); });
  gc("concat", {R({3, 4}), R({2, 4})}, [](auto& v) { return project(concat<double>({v[0], v[1]}, 0), 18); });
  gc("narrow", {R({3, 6})}, [](auto& v) { return project(narrow(v[0], 1, 2, 3), 19); });
  gc("reshape", {R({3, 4})}, [](auto& v) { return project(reshape(v[0], {2, 6}), 20); });
  auto refs = random_tensor({2, 40}, rng, -1, 1, false);
  gc("neg_si_sdr_loss", {R({2, 40})}, [&](auto& v) { return neg_si_sdr_loss(v[0], refs, {1, 0}); });

  const auto c = avlit::testing::micro_config();
  AvlitModel<double> model(c, 41);
  auto mix = R({1, 200});
  auto frames = random_tensor({2, 4, 16, 16}, rng, 0, 1, false);
  std::vector<T64> leaves{mix};
  for (const auto& p : model.trainable_parameters()) leaves.push_back(p.value);
  gc("micro AVLIT end-to-end", leaves,
     [&](auto& v) { return project(model.separate(v[0], frames), 21); }, 1e-5, 24);

  const double dt = since(t0);
  double worst = 0;
  std::string worst_name;
  for (const auto& [name, err] : errors) {
    o.check(err < 1e-4, name + " rel. error " + std::to_string(err));
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
  o.check(dt < 120.0, "suite took longer than 2 min");
  o.detail << errors.size() << " checks, worst " << worst_name << " " << std::scientific << std::setprecision(2) << worst
           << std::defaultfloat << " (< 1e-4), " << num(dt, 1) << " s";
}

// SI-SDR through <x,s>^2 / (|x|^2 |s|^2 - <x,s>^2), clamped like the loss.
double cosine_si_sdr(std::span<const double> x, std::span<const double> s) {
  long double xs = 0, xx = 0, ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs += static_cast<long double>(x[i]) * s[i];
    xx += static_cast<long double>(x[i]) * x[i];
    ss += static_cast<long double>(s[i]) * s[i];
  }
  const double v = static_cast<double>(10.0L * std::log10(xs * xs / (xx * ss - xs * xs)));
  return std::clamp(v, -kSdrClampDb, kSdrClampDb);
}

void all_permutations(std::vector<std::size_t>& cur, std::vector<bool>& used, std::size_t m,
                      std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() == m) {
    out.push_back(cur);
    return;
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (used[j]) continue;
    used[j] = true;
    cur.push_back(j);
    all_permutations(cur, used, m, out);
    cur.pop_back();
    used[j] = false;
  }
}

void sdr_and_pit(Outcome& o) {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> g(0, 1);
  std::size_t scale_checks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(300), x(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = g(rng);
      x[i] = 0.8 * s[i] + g(rng);
    }
    const double base = si_sdr<double>(x, s);
    for (int e = -7; e <= 10; e += 1) {
      auto y = x;
      for (auto& v : y) v = std::ldexp(v, e);
      o.check(si_sdr<double>(y, s) == base, "scale invariance broken at 2^" + std::to_string(e));
      ++scale_checks;
    }
  }
  const double hand1 = si_sdr<double>(std::vector<double>{1, 1}, std::vector<double>{1, 0});
  const double hand2 = si_sdr<double>(std::vector<double>{1, 0}, std::vector<double>{1, 1});
  o.check(hand1 == 0.0 && hand2 == 0.0, "hand case is not exactly 0 dB");

  std::size_t pit_cases = 0, agree = 0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + trial % 4, n = 64;
    auto est = random_tensor({m, n}, rng, -1, 1, false);
    auto ref = random_tensor({m, n}, rng, -1, 1, false);
    auto ed = est.data(), rd = ref.data();
    std::vector<std::vector<std::size_t>> perms;
    std::vector<std::size_t> cur;
    std::vector<bool> used(m, false);
    all_permutations(cur, used, m, perms);
    double best = 1e300;
    std::vector<std::size_t> best_perm;
    for (const auto& p : perms) {
      double total = 0;
      for (std::size_t i = 0; i < m; ++i) total -= cosine_si_sdr(ed.subspan(p[i] * n, n), rd.subspan(i * n, n));
      total /= static_cast<double>(m);
      if (total < best) {
        best = total;
        best_perm = p;
      }
    }
    const auto res = pit_loss(est, ref);
    worst = std::max(worst, std::abs(res.loss.item() - best));
    agree += res.perm == best_perm && std::abs(res.loss.item() - best) < 1e-9;
    ++pit_cases;
  }
  o.check(agree == pit_cases, "PIT disagrees with exhaustive search");
  o.detail << scale_checks << " power-of-two rescalings bit-exact; [1,1] vs [1,0] and [1,0] vs [1,1] = " << hand1 << " / "
           << hand2 << " dB; PIT = exhaustive search on " << agree << "/" << pit_cases << " cases (M<=4, max |dloss| "
           << std::scientific << std::setprecision(1) << worst << std::defaultfloat << ")";
}

void mixture_fidelity(Outcome& o) {
  std::size_t additive = 0;
  double worst = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    MixSpec spec;
    spec.speakers = 2 + k % 3;
    spec.duration = 0.5 + 0.25 * static_cast<double>(k % 7);
    spec.format.sample_rate = k % 2 ? 8000 : 16000;
    spec.seed = 1000 + k;
    const auto item = synth_mixture(spec, k);
    const auto& ex = item.example;
    additive += is_additive(ex, item.noise);
    const auto s = std::span<const float>(ex.sources);
    const auto s1 = s.subspan(0, ex.samples);
    for (std::size_t i = 1; i < ex.speakers; ++i) {
      worst = std::max(worst, std::abs(snr_db(s1, s.subspan(i * ex.samples, ex.samples)) - item.meta.speech_snr_db[i - 1]));
    }
    worst = std::max(worst, std::abs(snr_db(s1, std::span<const float>(item.noise)) - item.meta.noise_snr_db));
  }
  o.check(additive == 100, "mixture is not the bitwise sum of its components");
  o.check(worst <= 1e-6, "measured SNR deviates from metadata by more than 1e-6 dB");
  o.detail << additive << "/100 items bitwise additive; max |measured - recorded SNR| = " << std::scientific
           << std::setprecision(2) << worst << std::defaultfloat << " dB";
}

// ---------------------------------------------------------------------------
// Desk-scale training shared by criteria 7 and 8.

ModelConfig desk_config() {
  ModelConfig c;
  c.speakers = 2;
  c.audio_iters = 4;
  c.video_iters = 2;
  c.fusion_positions = {0};
  c.enc_channels = 64;
  c.audio_block = {.io_channels = 64, .bottleneck = 32, .stage_channels = 64, .stages = 3};
  c.video_block = {.io_channels = 32, .bottleneck = 32, .stage_channels = 32, .stages = 3};
  c.sample_rate = 8000;
  return c;
}

MixSpec desk_spec() {
  MixSpec spec;
  spec.speakers = 2;
  spec.duration = 2.0;
  spec.format.sample_rate = 8000;
  spec.seed = 2024;
  return spec;
}

struct DeskRun {
  AvlitModel<float> model;
  std::vector<Example> test;
  TrainResult result;
  double seconds = 0;
};

std::optional<DeskRun> desk;

DeskRun& desk_run() {
  if (desk) return *desk;
  const auto t0 = Clock::now();
  const auto spec = desk_spec();
  const auto train_set = examples_of(synth_corpus(spec, 200, 0, worker_threads()));
  const auto val_set = examples_of(synth_corpus(spec, 20, 500000, worker_threads()));
  auto test_set = examples_of(synth_corpus(spec, 50, 1000000, worker_threads()));
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 4;
  cfg.lr = 2e-3;
  cfg.seed = 7;
  AvlitModel<float> model(desk_config(), cfg.seed);
  std::cout << "  training desk-scale model (" << count_params(desk_config()) << " parameters, 200 items, 20 epochs)"
            << std::endl;
  auto result = train(model, train_set, val_set, cfg);
  desk = DeskRun{std::move(model), std::move(test_set), std::move(result), since(t0)};
  return *desk;
}

void desk_learning(Outcome& o) {
  auto& run = desk_run();
  const auto eval = evaluate(run.model, run.test, false);
  o.check(eval.si_sdri >= 5.0, "held-out SI-SDRi below 5 dB");
  o.check(run.seconds < 1800.0, "took longer than 30 min");
  const auto& log = run.result.log;
  o.detail << "held-out SI-SDRi " << num(eval.si_sdri, 2) << " dB on " << run.test.size() << " items (>= 5), first/last train loss "
           << num(log.front().loss, 2) << " / " << num(log[log.size() - 2].loss, 2) << ", best epoch " << run.result.best_epoch
           << ", " << num(run.seconds / 60, 1) << " min";
}

void visual_benefit(Outcome& o) {
  auto& run = desk_run();
  const auto with_video = evaluate(run.model, run.test, false);
  const auto zeroed = evaluate(run.model, run.test, false, true);
  const double gain = with_video.si_sdri - zeroed.si_sdri;
  o.check(gain >= 1.0, "true video is less than 1 dB better than zeroed video");

  // Outputs follow the order of the video streams.
  std::size_t followed = 0;
  NoGradGuard no_grad;
  for (const auto& ex : run.test) {
    auto swapped = ex;
    const std::size_t n = ex.frames * ex.height * ex.width;
    std::swap_ranges(swapped.video.begin(), swapped.video.begin() + static_cast<std::ptrdiff_t>(n),
                     swapped.video.begin() + static_cast<std::ptrdiff_t>(n));
    const auto est = run.model.separate(swapped.mixture_tensor(), swapped.frames_tensor());
    const auto e = est.data();
    const auto s = std::span<const float>(ex.sources);
    const std::size_t T = ex.samples;
    followed += si_sdr<float>(e.subspan(0, T), s.subspan(T, T)) > si_sdr<float>(e.subspan(0, T), s.subspan(0, T));
  }
  o.detail << "SI-SDRi true video " << num(with_video.si_sdri, 2) << " dB vs zeroed " << num(zeroed.si_sdri, 2)
           << " dB (+" << num(gain, 2) << " dB, >= 1); swapping video streams swaps outputs on " << followed << "/"
           << run.test.size() << " items";
}

// ---------------------------------------------------------------------------

bool bits_equal(const Tensor<float>& a, const Tensor<float>& b) { return a.shape() == b.shape() && same_bits(a.data(), b.data()); }

void fusion_contracts(Outcome& o) {
  auto c = avlit::testing::micro_config();
  c.audio_iters = 4;
  c.video_iters = 2;
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> mix_values(400);
  for (auto& v : mix_values) v = u(rng);
  const auto mix = Tensor<float>::from({1, 400}, mix_values);
  NoGradGuard no_grad;

  c.fusion_positions = {};
  AvlitModel<float> plain(c, 61);
  const auto audio = plain.encode_audio(mix);
  Tensor<float> r;
  for (std::size_t i = 0; i < c.audio_iters; ++i) r = plain.audio_block().forward(i == 0 ? audio : add(r, audio));
  o.check(bits_equal(plain.audio_branch(audio, Tensor<float>{}), r), "empty P differs from the plain iteration");

  const auto reference = plain.separate_with_video(mix, Tensor<float>::zeros(audio.shape()));
  std::size_t schedules = 0;
  for (const auto& p : std::vector<std::vector<std::size_t>>{{}, {0}, {2}, {3}, {0, 1, 2, 3}, {1, 3}}) {
    auto cp = c;
    cp.fusion_positions = p;
    AvlitModel<float> m(cp, 61);
    o.check(bits_equal(m.separate_with_video(mix, Tensor<float>::zeros(audio.shape())), reference),
            "zero video changes the output for some P");
    ++schedules;
  }

  MixSpec spec;
  spec.duration = 0.5;
  spec.format.sample_rate = 8000;
  spec.format.frame_size = 16;
  spec.seed = 62;
  const auto data = examples_of(synth_corpus(spec, 4));
  auto tc = c;
  tc.fps = 25;
  std::size_t trained = 0;
  for (const char* name : {"early", "middle", "late", "all"}) {
    tc.fusion_positions = fusion_schedule(name, tc.audio_iters);
    AvlitModel<float> m(tc, 63);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    try {
      const auto res = train(m, data, data, cfg);
      o.check(res.log.size() == 2 && std::isfinite(res.log[0].loss), std::string(name) + " produced no finite loss");
      ++trained;
    } catch (const std::exception& e) {
      o.check(false, std::string(name) + " threw: " + e.what());
    }
  }
  o.detail << "P = {} bit-equal to plain iteration; zero f'_V bit-equal across " << schedules
           << " schedules; early/middle/late/all ({0},{2},{3},{0,1,2,3}) trained 1 epoch: " << trained << "/4";
}

void determinism_and_formats(Outcome& o) {
  const auto root = fs::temp_directory_path() / "avlit_acceptance_formats";
  fs::remove_all(root);
  MixSpec spec;
  spec.duration = 0.5;
  spec.format.sample_rate = 8000;
  spec.seed = 70;
  write_corpus((root / "a").string(), synth_corpus(spec, 3, 0, 1), 8000);
  write_corpus((root / "b").string(), synth_corpus(spec, 3, 0, 3), 8000);
  std::size_t files = 0, identical = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    identical += read_file(e.path().string()) == read_file((root / "b" / fs::relative(e.path(), root / "a")).string());
  }
  o.check(files > 0 && identical == files, "synth rerun is not byte-identical");

  auto c = avlit::testing::micro_config();
  c.fps = 25;
  spec.format.frame_size = 16;
  const auto data = examples_of(synth_corpus(spec, 4));
  auto train_once = [&] {
    AvlitModel<float> m(c, 71);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 72;
    cfg.log_path = (root / "log.csv").string();
    fs::remove(cfg.log_path);
    train(m, data, data, cfg);
    return std::pair{checkpoint_bytes(m), read_file(cfg.log_path)};
  };
  const auto first = train_once(), second = train_once();
  o.check(first == second, "train rerun is not byte-identical");

  const auto corpus = load_corpus((root / "a" / kManifestName).string());
  const auto regenerated = synth_corpus(spec, 3, 0, 1);
  bool wav_ok = corpus.sample_rate == 8000, avfr_ok = true;
  for (std::size_t k = 0; k < 3; ++k) {
    wav_ok = wav_ok && same_bits(corpus.items[k].mixture, regenerated[k].example.mixture) &&
             same_bits(corpus.items[k].sources, regenerated[k].example.sources);
    avfr_ok = avfr_ok && corpus.items[k].video == synth_corpus(MixSpec{spec.speakers, spec.duration, spec.speech_snr,
                                                                        spec.noise_snr, spec.noise, spec.seed,
                                                                        {8000, 25.0, 64}},
                                                               1, k)[0]
                                                       .example.video;
  }
  o.check(wav_ok, "float32 WAV round trip is not exact");
  o.check(avfr_ok, "AVFR round trip is not exact");

  Wav pcm{16000, 1, {}};
  for (int t = 0; t < 16000; ++t) pcm.samples.push_back(static_cast<float>(std::sin(2 * M_PI * 220.0 * t / 16000.0)));
  const auto back = wav_from_bytes(wav_bytes(pcm, WavEncoding::pcm16));
  double pcm_err = 0;
  for (std::size_t i = 0; i < pcm.samples.size(); ++i) pcm_err = std::max(pcm_err, static_cast<double>(std::abs(back.samples[i] - pcm.samples[i])));
  o.check(pcm_err <= 1.0 / 32768, "16-bit WAV round trip exceeds one LSB");

  AvlitModel<float> model(preset("avlit-2"), 73);
  const auto bytes = checkpoint_bytes(model);
  o.check(checkpoint_bytes(checkpoint_from_bytes(bytes)) == bytes, "checkpoint round trip is not exact");

  RunConfig rc;
  rc.model = preset("avlit-8");
  rc.model.fusion_positions = {1, 5};
  rc.train.lr = 7.5e-4;
  rc.noise_snr = {-6, -6};
  const auto text = run_config_to_text(rc);
  o.check(run_config_from_text(text) == rc && run_config_to_text(run_config_from_text(text)) == text,
          "config round trip is not lossless");
  o.check(config_from_text(config_to_text(rc.model)) == rc.model, "model config round trip is not lossless");
  fs::remove_all(root);
  o.detail << "synth rerun " << identical << "/" << files << " files identical; train rerun checkpoint+log identical; WAV f32 exact, "
           << "PCM16 max err " << std::scientific << std::setprecision(2) << pcm_err << std::defaultfloat
           << "; AVFR, checkpoint (" << bytes.size() << " B) and config round-trip exactly";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::tuple<int, std::string, std::function<void(Outcome&)>>> criteria{
      {1, "weight sharing", weight_sharing},
      {2, "MAC linearity", mac_linearity},
      {3, "parameter budget", parameter_budget},
      {4, "gradient correctness", gradient_correctness},
      {5, "SI-SDR / PIT oracles", sdr_and_pit},
      {6, "mixture fidelity", mixture_fidelity},
      {7, "desk-scale learning", desk_learning},
      {8, "visual benefit", visual_benefit},
      {9, "fusion-schedule contracts", fusion_contracts},
      {10, "determinism and formats", determinism_and_formats},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0, ran = 0;
  for (const auto& [id, title, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    ++ran;
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << "criterion " << id << " (" << title << "): " << o.detail.str() << " ["
              << num(since(t0), 1) << " s]" << std::endl;
  }
  std::cout << ran - failed << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
