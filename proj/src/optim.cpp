#include "avlit/optim.hpp"

#include <cmath>

namespace avlit {

template <typename T>
AdamW<T>::AdamW(const ParamList<T>& params, AdamWOptions options) : options_(options) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    params_.push_back(p.value);
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const T decay = static_cast<T>(1.0 - lr * options_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      w[i] = w[i] * decay - static_cast<T>(update);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double lr_at(std::size_t epoch, double base_lr, std::size_t period) {
  const auto k = epoch / (period == 0 ? 1 : period);
  return base_lr / std::pow(3.0, static_cast<double>(k));
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.trainable || !p.value.has_grad()) continue;
    for (T g : p.value.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto p : params) {
      if (!p.trainable || !p.value.has_grad()) continue;
      for (auto& g : p.value.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(const ParamList<float>&, double);
template double clip_grad_norm<double>(const ParamList<double>&, double);

}  // namespace avlit
