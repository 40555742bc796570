#pragma once

// Parameter-owning wrappers around the primitive ops. Each layer can report
// its tensors under a dotted name for checkpoints, counting and optimization.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "avlit/errors.hpp"
#include "avlit/ops.hpp"

namespace avlit {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
std::size_t count_elements(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <typename T>
struct Conv1dLayer {
  Tensor<T> weight;  // [Cout, Cin/groups, K]
  Tensor<T> bias;    // [Cout], may be undefined
  Conv1dOptions options;

  static Conv1dLayer create(std::size_t cin, std::size_t cout, std::size_t kernel, Conv1dOptions opt,
                            std::mt19937_64& rng, bool with_bias = true) {
    const std::size_t fan_in = cin / opt.groups * kernel;
    Conv1dLayer layer;
    layer.weight = uniform_init<T>({cout, cin / opt.groups, kernel}, fan_in, rng);
    if (with_bias) layer.bias = uniform_init<T>({cout}, fan_in, rng);
    layer.options = opt;
    return layer;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv1d(x, weight, bias, options); }

  void collect(const std::string& prefix, ParamList<T>& out, bool trainable = true) const {
    out.push_back({prefix + ".weight", weight, trainable});
    if (bias.defined()) out.push_back({prefix + ".bias", bias, trainable});
  }
};

template <typename T>
struct NormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;

  static NormLayer create(std::size_t channels) {
    return {Tensor<T>::full({channels}, T(1), true), Tensor<T>::zeros({channels}, true)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return global_channel_norm(x, gamma, beta); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma, true});
    out.push_back({prefix + ".beta", beta, true});
  }
};

/// Single learned negative slope, initialized at 0.25.
template <typename T>
struct PReluLayer {
  Tensor<T> slope;

  static PReluLayer create() { return {Tensor<T>::full({1}, T(0.25), true)}; }

  Tensor<T> operator()(const Tensor<T>& x) const { return prelu(x, slope); }

  void collect(const std::string& prefix, ParamList<T>& out) const { out.push_back({prefix + ".slope", slope, true}); }
};

/// Overwrites the values behind `to` with those of `from`, entry by entry.
template <typename T, typename U>
void assign_values(const ParamList<U>& from, ParamList<T>& to) {
  if (from.size() != to.size()) throw DimensionError("assign_values", "params", "parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].value.shape() != to[i].value.shape()) {
      throw DimensionError("assign_values", to[i].name,
                           to_string(from[i].value.shape()) + " vs " + to_string(to[i].value.shape()));
    }
    auto src = from[i].value.data();
    auto dst = to[i].value.mutable_data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<T>(src[k]);
  }
}

}  // namespace avlit
