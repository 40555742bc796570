#include "avlit/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "avlit/errors.hpp"
#include "avlit/objectives.hpp"
#include "avlit/optim.hpp"

namespace avlit {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void append_log(const std::string& path, const EpochRecord& r) {
  if (path.empty()) return;
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open log '" + path + "'");
  if (fresh) out << kLogHeader << '\n';
  out << format_record(r) << '\n';
}

double item_si_sdri(const Tensor<float>& estimates, const Example& ex) {
  return si_sdr_improvement<float>(estimates.data(), ex.sources, ex.mixture, ex.speakers);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (schedule_period < 1) throw ConfigError("schedule_period must be >= 1");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (ae_epochs > 0 && (!(ae_lr > 0.0) || ae_frames < 1 || ae_batch < 1)) {
    throw ConfigError("autoencoder pretraining needs ae_lr > 0, ae_frames >= 1 and ae_batch >= 1");
  }
}

std::string format_record(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + r.split + "," + shortest(r.loss) + "," + shortest(r.si_sdri) + "," +
         shortest(r.lr);
}

Tensor<float> item_loss(const Tensor<float>& estimates, const Tensor<float>& references, bool pit) {
  return pit ? pit_loss(estimates, references).loss : neg_si_sdr_loss(estimates, references);
}

EvalResult evaluate(const AvlitModel<float>& model, const std::vector<Example>& data, bool pit, bool zero_video) {
  NoGradGuard no_grad;
  EvalResult result;
  const auto& c = model.config();
  for (const auto& ex : data) {
    auto mix = ex.mixture_tensor();
    Tensor<float> est;
    if (zero_video) {
      est = model.separate_with_video(mix, Tensor<float>::zeros({c.enc_channels, c.latent_length(ex.samples)}));
    } else {
      est = model.separate(mix, ex.frames_tensor());
    }
    result.loss += item_loss(est, ex.sources_tensor(), pit).item();
    result.item_si_sdri.push_back(item_si_sdri(est, ex));
  }
  if (!data.empty()) {
    result.loss /= static_cast<double>(data.size());
    result.si_sdri = std::accumulate(result.item_si_sdri.begin(), result.item_si_sdri.end(), 0.0) /
                     static_cast<double>(data.size());
  }
  return result;
}

TrainResult train(AvlitModel<float>& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& config, std::ostream* progress) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  const bool pit = config.pit || model.config().fusion_positions.empty();

  TrainResult result;
  if (config.ae_epochs > 0) {
    result.ae_losses = pretrain_frame_autoencoder(model.frame_encoder(), train_set, config, progress);
  }

  const auto params = model.parameters();
  AdamW<float> opt(params, {.weight_decay = config.weight_decay});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  AvlitModel<float> best;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config.lr, config.schedule_period);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0, sdri_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const float inv = 1.0f / static_cast<float>(stop - start);
      opt.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& ex = train_set[order[k]];
        auto est = model.separate(ex.mixture_tensor(), ex.frames_tensor());
        auto loss = item_loss(est, ex.sources_tensor(), pit);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          const auto dump = (config.checkpoint_path.empty() ? std::string("avlit") : config.checkpoint_path) + ".diverged";
          save_checkpoint(dump, model);
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", item " +
                                 std::to_string(order[k]) + "; weights dumped to " + dump);
        }
        loss_sum += value;
        sdri_sum += item_si_sdri(est, ex);
        scale(loss, inv).backward();
      }
      clip_grad_norm(params, config.grad_clip);
      opt.step(lr);
    }
    const double n = static_cast<double>(train_set.size());
    EpochRecord train_row{epoch, "train", loss_sum / n, sdri_sum / n, lr};
    result.log.push_back(train_row);
    append_log(config.log_path, train_row);
    if (progress) *progress << "epoch " << epoch << " train loss " << train_row.loss << " si_sdri " << train_row.si_sdri;

    if (!val_set.empty()) {
      const auto eval = evaluate(model, val_set, pit);
      EpochRecord val_row{epoch, "val", eval.loss, eval.si_sdri, lr};
      result.log.push_back(val_row);
      append_log(config.log_path, val_row);
      if (progress) *progress << " | val loss " << eval.loss << " si_sdri " << eval.si_sdri;
      if (!have_best || eval.si_sdri > result.best_val_si_sdri) {
        have_best = true;
        result.best_epoch = epoch;
        result.best_val_si_sdri = eval.si_sdri;
        best = model.clone();
        if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model);
        if (progress) *progress << " *";
      }
    }
    if (progress) *progress << std::endl;
  }

  if (have_best) {
    auto dst = model.parameters();
    assign_values(best.parameters(), dst);
  } else {
    result.best_epoch = config.epochs - 1;
    if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model);
  }
  return result;
}

std::vector<double> pretrain_frame_autoencoder(FrameEncoder<float>& encoder, const std::vector<Example>& data,
                                               const TrainConfig& config, std::ostream* progress) {
  struct FrameRef {
    std::size_t item, index;
  };
  std::vector<FrameRef> pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t f = 0; f < data[i].speakers * data[i].frames; ++f) pool.push_back({i, f});
  }
  if (pool.empty()) throw ConfigError("no frames available for autoencoder pretraining");

  std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
  auto decoder = FrameDecoder<float>::create(rng);
  ParamList<float> params;
  encoder.collect("encoder", params, true);
  decoder.collect("decoder", params);
  AdamW<float> opt(params, {.weight_decay = 0.0});
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);

  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < config.ae_epochs; ++epoch) {
    double total = 0;
    for (std::size_t start = 0; start < config.ae_frames; start += config.ae_batch) {
      const std::size_t stop = std::min(config.ae_frames, start + config.ae_batch);
      const float inv = 1.0f / static_cast<float>(stop - start);
      opt.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const auto ref = pool[pick(rng)];
        const auto& ex = data[ref.item];
        const std::size_t pixels = ex.height * ex.width;
        std::vector<float> px(pixels);
        for (std::size_t p = 0; p < pixels; ++p) px[p] = static_cast<float>(ex.video[ref.index * pixels + p]) / 255.0f;
        auto frame = Tensor<float>::from({1, ex.height, ex.width}, std::move(px));
        auto diff = sub(decoder(encoder(frame)), frame);
        auto loss = mean(mul(diff, diff));
        total += loss.item();
        scale(loss, inv).backward();
      }
      opt.step(config.ae_lr);
    }
    losses.push_back(total / static_cast<double>(config.ae_frames));
    if (progress) *progress << "ae epoch " << epoch << " mse " << losses.back() << std::endl;
  }
  return losses;
}

}  // namespace avlit
