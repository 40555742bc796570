#pragma once

// AdamW with decoupled weight decay, step learning-rate schedule and global
// gradient-norm clipping.

#include <cstdint>
#include <vector>

#include "avlit/layers.hpp"

namespace avlit {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

template <typename T>
class AdamW {
 public:
  /// Non-trainable entries of `params` are ignored.
  AdamW(const ParamList<T>& params, AdamWOptions options = {});

  /// One update at learning rate `lr`:
  ///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
  ///   w = w (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
  /// Parameters without a gradient buffer are skipped entirely.
  void step(double lr);

  std::uint64_t steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }

  /// Clears gradient buffers of all managed parameters.
  void zero_grad();

 private:
  AdamWOptions options_;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

/// lr * (1/3)^floor(epoch / period).
double lr_at(std::size_t epoch, double base_lr, std::size_t period);

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping. A non-positive max_norm only measures.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

}  // namespace avlit
