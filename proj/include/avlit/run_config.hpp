#pragma once

// Run configuration for the command-line tool: model, training and corpus
// settings in one plain-text file of `key = value` lines (`#` starts a comment).

#include <string>
#include <vector>

#include "avlit/model.hpp"
#include "avlit/synth.hpp"
#include "avlit/train.hpp"

namespace avlit {

struct RunConfig {
  ModelConfig model = preset("avlit-4");
  TrainConfig train;
  bool audio_only = false;  // no video fusion, PIT loss

  // Corpus synthesis. Speaker count, sample rate, fps and frame size come from `model`.
  std::size_t items = 100;
  double duration = 2.0;
  SnrRange speech_snr{-5, 5};
  SnrRange noise_snr{-6, 3};
  bool noise = true;
  std::uint64_t synth_seed = 0;

  bool operator==(const RunConfig&) const = default;

  MixSpec mix_spec() const;
  /// Model config as trained: `audio_only` clears the fusion positions.
  ModelConfig effective_model() const;
  TrainConfig effective_train() const;
  void validate() const;
};

struct ConfigEntry {
  std::string key;
  std::string value;
  std::string where;  // "line N" or "--flag", for error messages
};

/// Splits config text into entries. Throws ConfigError naming the line.
std::vector<ConfigEntry> parse_config_entries(const std::string& text);

/// Applies entries in order (later entries win). `fusion` is resolved after
/// all other keys so it sees the final audio_iters; `preset` replaces the
/// whole model section. Unknown keys and bad values raise ConfigError with
/// the entry's location.
void apply_entries(RunConfig& config, const std::vector<ConfigEntry>& entries);

std::vector<std::pair<std::string, std::string>> run_config_entries(const RunConfig& config);
std::string run_config_to_text(const RunConfig& config);
RunConfig run_config_from_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace avlit
