// avlit: corpus synthesis, training, separation, evaluation and profiling.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "avlit/corpus.hpp"
#include "avlit/errors.hpp"
#include "avlit/objectives.hpp"
#include "avlit/profiler.hpp"
#include "avlit/run_config.hpp"
#include "avlit/wav.hpp"

namespace fs = std::filesystem;
using namespace avlit;

namespace {

// Flags that map onto config keys. Collected in declaration order and applied
// after the config file, so flags win.
struct Overrides {
  struct Flag {
    CLI::Option* option;
    std::string key;
    std::string fixed_value;  // used for switches; empty means "take the option's value"
  };
  std::vector<Flag> flags;
  std::vector<std::string> sets;
  std::string config_path;

  template <typename V>
  void add(CLI::App* app, const std::string& name, const std::string& key, V& storage, const std::string& help) {
    flags.push_back({app->add_option(name, storage, help), key, ""});
  }

  void add_switch(CLI::App* app, const std::string& name, const std::string& key, const std::string& value,
                  const std::string& help) {
    flags.push_back({app->add_flag(name, help), key, value});
  }

  void add_common(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--set", sets, "extra KEY=VALUE overrides (repeatable)");
  }

  RunConfig resolve() const {
    std::vector<ConfigEntry> entries;
    if (!config_path.empty()) entries = parse_config_entries(read_file(config_path));
    for (const auto& f : flags) {
      if (f.option->count() == 0) continue;
      entries.push_back({f.key, f.fixed_value.empty() ? f.option->as<std::string>() : f.fixed_value, f.option->get_name()});
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      entries.push_back({s.substr(0, eq), s.substr(eq + 1), "--set " + s});
    }
    // A preset replaces the model section, so it goes before other model keys.
    std::stable_partition(entries.begin(), entries.end(), [](const ConfigEntry& e) { return e.key == "preset"; });
    RunConfig rc;
    apply_entries(rc, entries);
    return rc;
  }
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_synth(const Overrides& o, const std::string& out, std::size_t first) {
  const auto rc = o.resolve();
  rc.validate();
  const auto spec = rc.mix_spec();
  const auto items = synth_corpus(spec, rc.items, first, worker_threads());
  const auto manifest = write_corpus(out, items, static_cast<std::uint32_t>(spec.format.sample_rate), first);
  write_file((fs::path(out) / "synth.cfg").string(), run_config_to_text(rc));
  const double hours = static_cast<double>(rc.items) * spec.duration / 3600.0;
  std::cout << "wrote " << rc.items << " items (" << fixed(hours, 4) << " h, " << spec.speakers << " speakers, "
            << spec.format.sample_rate << " Hz) to " << manifest << "\n"
            << "speech SNR " << format_snr_range(spec.speech_snr) << " dB, noise SNR "
            << (spec.noise ? format_snr_range(spec.noise_snr) + " dB" : std::string("silent")) << ", seed "
            << spec.seed << "\n";
  return 0;
}

Corpus load_checked(const std::string& manifest, const ModelConfig& c) {
  auto corpus = load_corpus(manifest);
  if (corpus.items.empty()) throw ConfigError("manifest '" + manifest + "' lists no items");
  if (corpus.sample_rate != c.sample_rate) {
    throw ConfigError("corpus sample rate " + std::to_string(corpus.sample_rate) + " Hz does not match the model's " +
                      std::to_string(c.sample_rate) + " Hz");
  }
  for (const auto& ex : corpus.items) {
    if (ex.speakers != c.speakers) throw ConfigError("corpus has " + std::to_string(ex.speakers) + " speakers per item");
  }
  return corpus;
}

int cmd_train(const Overrides& o, const std::string& data, const std::string& val, const std::string& out) {
  const auto rc = o.resolve();
  rc.validate();
  const auto model_cfg = rc.effective_model();
  auto cfg = rc.effective_train();
  const auto train_set = load_checked(data, model_cfg);
  const auto val_set = val.empty() ? Corpus{} : load_checked(val, model_cfg);

  fs::create_directories(out);
  cfg.log_path = (fs::path(out) / "metrics.csv").string();
  cfg.checkpoint_path = (fs::path(out) / "model.avlt").string();
  fs::remove(cfg.log_path);
  write_file((fs::path(out) / "run.cfg").string(), run_config_to_text(rc));

  AvlitModel<float> model(model_cfg, cfg.seed);
  std::cout << "training " << count_params(model_cfg) << " parameters on " << train_set.items.size() << " items"
            << (val_set.items.empty() ? "" : ", validating on " + std::to_string(val_set.items.size())) << "\n";
  const auto result = train(model, train_set.items, val_set.items, cfg, &std::cout);
  std::cout << "best epoch " << result.best_epoch;
  if (!val_set.items.empty()) std::cout << ", val SI-SDRi " << fixed(result.best_val_si_sdri, 3) << " dB";
  std::cout << "\ncheckpoint " << cfg.checkpoint_path << "\nmetrics " << cfg.log_path << "\n";
  return 0;
}

int cmd_separate(const std::string& model_path, const std::string& mix_path, const std::vector<std::string>& videos,
                 const std::vector<std::string>& refs, const std::string& out) {
  const auto model = load_checkpoint(model_path);
  const auto& c = model.config();
  const auto wav = wav_read(mix_path);
  if (wav.channels != 1) throw ConfigError("mixture must be mono");
  if (wav.sample_rate != c.sample_rate) {
    throw ConfigError("mixture is " + std::to_string(wav.sample_rate) + " Hz, model expects " +
                      std::to_string(c.sample_rate) + " Hz");
  }
  if (videos.size() != c.speakers) {
    throw ConfigError("model separates " + std::to_string(c.speakers) + " speakers, got " +
                      std::to_string(videos.size()) + " --video files");
  }
  const std::size_t T = wav.samples.size(), F = c.expected_frames(T);
  std::vector<float> pixels;
  for (const auto& v : videos) {
    const auto fr = frames_read(v);
    if (fr.frames != F) {
      throw ConfigError("'" + v + "' has " + std::to_string(fr.frames) + " frames but the mixture duration implies " +
                        std::to_string(F));
    }
    if (fr.height != c.frame_height || fr.width != c.frame_width) throw ConfigError("'" + v + "' frame size mismatch");
    for (auto p : fr.pixels) pixels.push_back(static_cast<float>(p) / 255.0f);
  }
  NoGradGuard no_grad;
  const auto est = model.separate(Tensor<float>::from({1, T}, wav.samples),
                                  Tensor<float>::from({c.speakers, F, c.frame_height, c.frame_width}, std::move(pixels)));
  fs::create_directories(out);
  const auto data = est.data();
  for (std::size_t i = 0; i < c.speakers; ++i) {
    const auto path = (fs::path(out) / ("est" + std::to_string(i + 1) + ".wav")).string();
    wav_write(path, std::vector<float>(data.begin() + i * T, data.begin() + (i + 1) * T),
              static_cast<std::uint32_t>(c.sample_rate));
    std::cout << "wrote " << path << "\n";
  }
  if (!refs.empty()) {
    if (refs.size() != c.speakers) throw ConfigError("--refs needs one file per speaker");
    std::vector<float> ref_data;
    for (const auto& r : refs) {
      const auto w = wav_read(r);
      if (w.channels != 1 || w.samples.size() != T) throw ConfigError("'" + r + "' must be mono with the mixture's length");
      ref_data.insert(ref_data.end(), w.samples.begin(), w.samples.end());
    }
    std::vector<float> est_copy(data.begin(), data.end());
    const double sdri = si_sdr_improvement<float>(est_copy, ref_data, wav.samples, c.speakers);
    std::cout << "SI-SDRi " << fixed(sdri, 4) << " dB\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data, bool zero_video, bool pit) {
  const auto model = load_checkpoint(model_path);
  const auto corpus = load_checked(data, model.config());
  const auto res = evaluate(model, corpus.items, pit || model.config().fusion_positions.empty(), zero_video);
  std::cout << "items " << corpus.items.size() << (zero_video ? " (zeroed video)" : "") << "\n"
            << "loss " << fixed(res.loss, 4) << "\nSI-SDRi " << fixed(res.si_sdri, 4) << " dB\n";
  return 0;
}

int cmd_profile(const Overrides& o, double seconds, std::size_t trials, const std::string& csv_path) {
  const auto rc = o.resolve();
  const auto& c = rc.effective_model();
  const auto report = cost_report(c, seconds);
  std::cout << report.table();
  if (!csv_path.empty()) write_file(csv_path, report.csv());

  // Iteration sweep N_A = 2, 4, 8 with N_V = N_A / 2 on the same widths.
  std::uint64_t macs[3];
  const std::size_t iters[3] = {2, 4, 8};
  std::uint64_t params[3];
  for (int i = 0; i < 3; ++i) {
    auto v = c;
    v.audio_iters = iters[i];
    v.video_iters = iters[i] / 2;
    v.fusion_positions = c.fusion_positions.empty() ? std::vector<std::size_t>{} : std::vector<std::size_t>{0};
    macs[i] = count_macs(v, seconds);
    params[i] = count_params(v);
    std::cout << "N_A=" << iters[i] << " N_V=" << iters[i] / 2 << ": " << fixed(static_cast<double>(macs[i]) / 1e9, 3)
              << " G MACs, " << params[i] << " params\n";
  }
  const bool affine = macs[2] - macs[1] == 2 * (macs[1] - macs[0]);
  const bool shared = params[0] == params[1] && params[1] == params[2];
  std::cout << "MACs(8) - MACs(4) = " << macs[2] - macs[1] << ", 2 (MACs(4) - MACs(2)) = " << 2 * (macs[1] - macs[0])
            << (affine ? "  [affine]" : "  [NOT AFFINE]") << "\n"
            << "parameter count " << (shared ? "identical across iteration counts" : "DIFFERS across iteration counts")
            << "\n";
  if (trials > 0) {
    const AvlitModel<float> model(c, 0);
    const auto t = time_inference(model, seconds, trials);
    std::cout << "inference " << fixed(t.mean * 1e3, 2) << " ms +- " << fixed(t.stddev * 1e3, 2) << " ms over "
              << t.trials << " trials (" << fixed(seconds, 2) << " s at " << c.sample_rate << " Hz, 1 thread)\n";
  }
  return affine && shared ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech separation with iterated A-FRCNN blocks"};
  app.require_subcommand(1);

  // Storage for flag values; only read through Overrides::resolve.
  std::size_t items = 0, speakers = 0, epochs = 0, ca = 0, cv = 0, batch = 0, ae_epochs = 0, sample_rate = 0;
  double duration = 0, lr = 0, fps = 0;
  std::string speech_snr, noise_snr, preset_name, fusion, seed;

  Overrides synth_o, train_o, profile_o;
  std::string out, data, val, model_path, mix, csv;
  std::size_t first = 0, trials = 3;
  double seconds = 2.0;
  std::vector<std::string> videos, refs;
  bool zero_video = false, pit = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic audio-visual corpus");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--first", first, "index of the first item (items are seeded with seed ^ index)");
  synth_o.add_common(synth);
  synth_o.add(synth, "--items", "items", items, "number of mixtures");
  synth_o.add(synth, "--duration", "duration", duration, "seconds per mixture");
  synth_o.add(synth, "--speakers", "speakers", speakers, "speakers per mixture");
  synth_o.add(synth, "--speech-snr", "speech_snr", speech_snr, "lo:hi dB of speaker 1 over the others (default -5:5)");
  synth_o.add(synth, "--noise-snr", "noise_snr", noise_snr, "lo:hi dB of speaker 1 over the noise (default -6:3)");
  synth_o.add(synth, "--seed", "synth_seed", seed, "corpus seed");
  synth_o.add(synth, "--sample-rate", "sample_rate", sample_rate, "Hz");
  synth_o.add(synth, "--fps", "fps", fps, "video frame rate");
  synth_o.add_switch(synth, "--no-noise", "noise", "false", "silent noise track");

  auto* trn = app.add_subcommand("train", "train a model on a corpus manifest");
  trn->add_option("--data", data, "training manifest")->required();
  trn->add_option("--val", val, "validation manifest");
  trn->add_option("--out", out, "output directory")->required();
  train_o.add_common(trn);
  train_o.add(trn, "--preset", "preset", preset_name, "avlit-2, avlit-4 or avlit-8");
  train_o.add(trn, "--epochs", "epochs", epochs, "training epochs");
  train_o.add(trn, "--fusion", "fusion", fusion, "early, middle, late, all, none or a list like 0,2");
  train_o.add(trn, "--ca", "audio_channels", ca, "audio block channels C_A");
  train_o.add(trn, "--cv", "video_channels", cv, "video block channels C_V");
  train_o.add(trn, "--lr", "lr", lr, "learning rate");
  train_o.add(trn, "--batch-size", "batch_size", batch, "items per optimizer step");
  train_o.add(trn, "--ae-epochs", "ae_epochs", ae_epochs, "frame autoencoder pretraining epochs");
  train_o.add(trn, "--seed", "train_seed", seed, "initialisation and shuffling seed");
  train_o.add_switch(trn, "--audio-only", "audio_only", "true", "ignore video and train with PIT");

  auto* sep = app.add_subcommand("separate", "separate one mixture with a trained model");
  sep->add_option("--model", model_path, "checkpoint")->required();
  sep->add_option("--mix", mix, "mixture WAV")->required();
  sep->add_option("--video", videos, "one AVFR file per speaker; outputs follow this order")->required()->expected(1, -1);
  sep->add_option("--refs", refs, "reference WAVs, to print SI-SDRi")->expected(1, -1);
  sep->add_option("--out", out, "output directory")->required();

  auto* prof = app.add_subcommand("profile", "parameter, MAC and latency report");
  profile_o.add_common(prof);
  profile_o.add(prof, "--preset", "preset", preset_name, "avlit-2, avlit-4 or avlit-8");
  prof->add_option("--seconds", seconds, "input duration")->capture_default_str();
  prof->add_option("--trials", trials, "timed runs after one warm-up (0 skips timing)")->capture_default_str();
  prof->add_option("--csv", csv, "write the per-layer CSV here");

  auto* eval = app.add_subcommand("evaluate", "mean SI-SDRi of a checkpoint on a corpus");
  eval->add_option("--model", model_path, "checkpoint")->required();
  eval->add_option("--data", data, "manifest")->required();
  eval->add_flag("--zero-video", zero_video, "replace the fused video features by zeros");
  eval->add_flag("--pit", pit, "score with the best permutation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_o, out, first);
    if (*trn) return cmd_train(train_o, data, val, out);
    if (*sep) return cmd_separate(model_path, mix, videos, refs, out);
    if (*prof) return cmd_profile(profile_o, seconds, trials, csv);
    if (*eval) return cmd_evaluate(model_path, data, zero_video, pit);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
