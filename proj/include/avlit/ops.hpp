#pragma once

// Differentiable primitives. All layouts are channel-major without a batch
// axis: 1-D signals are [C, T], images are [C, H, W].

#include <cstddef>
#include <cstdint>
#include <vector>

#include "avlit/tensor.hpp"

namespace avlit {

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// x [Cin, T], weight [Cout, Cin/groups, K], bias [Cout] or undefined.
/// Output length floor((T + 2*padding - K) / stride) + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv1dOptions opt = {});

/// x [Cin, T'], weight [Cin, Cout, K], bias [Cout] or undefined.
/// Output length (T' - 1) * stride + K - 2 * padding. Adjoint of conv1d.
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride = 1, std::size_t padding = 0);

/// x [Cin, H, W], weight [Cout, Cin, K, K], square kernel, no padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride = 1);

/// x [Cin, H, W], weight [Cin, Cout, K, K]. Output (H - 1) * stride + K.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride = 1);

/// out[c][t] = x[c][floor(t * F / target_len)] for x [C, F].
template <typename T>
Tensor<T> nearest_interp1d(const Tensor<T>& x, std::size_t target_len);

// Elementwise with trailing matching-or-1 broadcasting.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
/// slope has shape [1] (shared) or [C] (per leading-axis channel).
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

inline constexpr double kNormEpsilon = 1e-8;

/// Per-channel normalization of x [C, T] over the temporal axis, followed by
/// a learned affine map: (x - mean) / sqrt(var + eps) * gamma + beta.
template <typename T>
Tensor<T> global_channel_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              double eps = kNormEpsilon);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Result shape of broadcasting a against b, or DimensionError.
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op);

// Multiply-accumulate instrumentation. Convolutions and normalizations add the
// multiplies they perform in the forward pass to a per-thread counter.
namespace instrument {
std::uint64_t macs();
void reset_macs();
void add_macs(std::uint64_t count);
}  // namespace instrument

}  // namespace avlit
