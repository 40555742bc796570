#pragma once

// Scale-invariant SDR, its differentiable negative as a training loss, and
// permutation-invariant assignment.

#include <cstddef>
#include <span>
#include <vector>

#include "avlit/tensor.hpp"

namespace avlit {

inline constexpr double kSdrClampDb = 60.0;
inline constexpr std::size_t kMaxPitSpeakers = 6;

/// 10 log10(|a s|^2 / |x - a s|^2) with a = <x, s> / |s|^2, clamped to +/-60 dB.
/// Accumulates in double. Throws DimensionError on length mismatch and
/// std::domain_error when the reference is all zeros.
template <typename T>
double si_sdr(std::span<const T> estimate, std::span<const T> reference);

/// Mean over speakers of si_sdr(est_i, ref_i) - si_sdr(mixture, ref_i).
/// estimates/references are [M, T] row-major, mixture is [T].
template <typename T>
double si_sdr_improvement(std::span<const T> estimates, std::span<const T> references, std::span<const T> mixture,
                          std::size_t speakers);

/// Mean over i of -si_sdr(estimates[perm[i]], references[i]); estimates [M, T]
/// is differentiable, references [M, T] are constants. An empty `perm` is the
/// identity. The gradient of a clamped term is zero.
template <typename T>
Tensor<T> neg_si_sdr_loss(const Tensor<T>& estimates, const Tensor<T>& references,
                          const std::vector<std::size_t>& perm = {});

template <typename T>
struct PitResult {
  Tensor<T> loss;
  std::vector<std::size_t> perm;  // perm[i] = estimate paired with reference i
};

/// Minimum of neg_si_sdr_loss over all M! assignments; ties go to the
/// lexicographically smallest permutation. Throws std::invalid_argument for M > 6.
template <typename T>
PitResult<T> pit_loss(const Tensor<T>& estimates, const Tensor<T>& references);

}  // namespace avlit
