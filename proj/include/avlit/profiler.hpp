#pragma once

// Analytical cost model of one separate() call, and wall-clock timing.
//
// MACs cover convolutions (K * Cin/groups * Cout * T_out, 2-D analogue for
// the frame encoder, transposed convolutions by input positions) and one
// multiply per element for each normalisation. Elementwise adds,
// activations, interpolation and the mask product are free.

#include <cstdint>
#include <string>
#include <vector>

#include "avlit/model.hpp"

namespace avlit {

struct CostRow {
  std::string layer;
  std::uint64_t macs = 0;       // summed over every call in one forward pass
  std::uint64_t params = 0;     // counted once (weights are shared)
  std::uint64_t act_elems = 0;  // output elements summed over every call
};

struct CostReport {
  std::vector<CostRow> rows;
  double seconds = 0;
  std::size_t samples = 0;
  std::size_t audio_iters = 0;
  std::size_t video_iters = 0;

  std::uint64_t total_macs() const;
  std::uint64_t total_params() const;
  std::uint64_t total_act_elems() const;

  /// `layer,macs,params,act_elems`, one row per layer then a "total" row.
  std::string csv() const;
  /// Aligned human-readable table with totals.
  std::string table() const;
};

/// Mixture length for `seconds` at the model's sample rate.
std::size_t input_samples(const ModelConfig& config, double seconds);

/// Throws ConfigError when seconds <= 0 or the input is too short for the model.
CostReport cost_report(const ModelConfig& config, double seconds);

std::uint64_t count_params(const ModelConfig& config);
std::uint64_t count_macs(const ModelConfig& config, double seconds);

struct Timing {
  double mean = 0;    // seconds
  double stddev = 0;  // population standard deviation
  std::size_t trials = 0;
};

/// Times separate() on seeded random input after one untimed warm-up run.
Timing time_inference(const AvlitModel<float>& model, double seconds, std::size_t trials);

}  // namespace avlit
