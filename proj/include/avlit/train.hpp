#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "avlit/example.hpp"
#include "avlit/model.hpp"

namespace avlit {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 1e-1;
  std::size_t schedule_period = 25;  // epochs per 1/3 step
  std::uint64_t seed = 0;
  /// Permutation-invariant loss. Forced on for audio-only models (empty P).
  bool pit = false;
  /// Global gradient-norm limit; 0 disables clipping.
  double grad_clip = 5.0;

  // Frame autoencoder pretraining; skipped when ae_epochs is 0.
  std::size_t ae_epochs = 0;
  double ae_lr = 1e-3;
  std::size_t ae_frames = 2000;  // frames sampled per epoch
  std::size_t ae_batch = 32;

  std::string log_path;         // CSV, appended; empty disables
  std::string checkpoint_path;  // best-validation checkpoint; empty disables

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// One row of the metric log.
struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0;
  double si_sdri = 0;
  double lr = 0;
};

inline constexpr const char* kLogHeader = "epoch,split,loss,si_sdri,lr";
std::string format_record(const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> log;
  std::vector<double> ae_losses;
  std::size_t best_epoch = 0;
  double best_val_si_sdri = 0;
};

/// Raised when a training loss is not finite. The message names the dump file.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss used for one item: video-ordered negative SI-SDR, or PIT.
Tensor<float> item_loss(const Tensor<float>& estimates, const Tensor<float>& references, bool pit);

/// Trains in place. The model ends holding the best-validation weights (or the
/// last weights when `val` is empty). Progress lines go to `progress` when set.
TrainResult train(AvlitModel<float>& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& config, std::ostream* progress = nullptr);

struct EvalResult {
  double loss = 0;
  double si_sdri = 0;
  std::vector<double> item_si_sdri;
};

/// Mean loss and per-utterance SI-SDRi. With `zero_video` the fused video
/// features are replaced by zeros.
EvalResult evaluate(const AvlitModel<float>& model, const std::vector<Example>& data, bool pit, bool zero_video = false);

/// Fits encoder + a mirrored decoder on single frames by mean squared error and
/// returns per-epoch mean losses. The encoder weights are updated in place.
std::vector<double> pretrain_frame_autoencoder(FrameEncoder<float>& encoder, const std::vector<Example>& data,
                                               const TrainConfig& config, std::ostream* progress = nullptr);

}  // namespace avlit
