#include "avlit/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "avlit/errors.hpp"

namespace avlit {

namespace {

struct SdrTerms {
  double alpha = 0;
  double target = 0;    // |a s|^2
  double residual = 0;  // |x - a s|^2
  double db = 0;
  bool clamped = false;
};

template <typename T>
SdrTerms sdr_terms(const T* x, const T* s, std::size_t n) {
  double xs = 0, ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    xs += static_cast<double>(x[i]) * s[i];
    ss += static_cast<double>(s[i]) * s[i];
  }
  if (ss == 0.0) throw std::domain_error("si_sdr: reference is all zeros");
  SdrTerms t;
  t.alpha = xs / ss;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = t.alpha * s[i];
    const double r = x[i] - e;
    t.target += e * e;
    t.residual += r * r;
  }
  if (t.target == 0.0) {
    t.db = -kSdrClampDb;
    t.clamped = true;
  } else if (t.residual == 0.0) {
    t.db = kSdrClampDb;
    t.clamped = true;
  } else {
    t.db = 10.0 * std::log10(t.target / t.residual);
    if (t.db >= kSdrClampDb || t.db <= -kSdrClampDb) {
      t.db = std::clamp(t.db, -kSdrClampDb, kSdrClampDb);
      t.clamped = true;
    }
  }
  return t;
}

void require_pair(const Shape& est, const Shape& ref, const char* op) {
  if (est.size() != 2 || ref.size() != 2) {
    throw DimensionError(op, "rank", "expected [M, T] tensors, got " + to_string(est) + " and " + to_string(ref));
  }
  if (est != ref) throw DimensionError(op, "time", "estimates " + to_string(est) + " vs references " + to_string(ref));
}

}  // namespace

template <typename T>
double si_sdr(std::span<const T> estimate, std::span<const T> reference) {
  if (estimate.size() != reference.size()) {
    throw DimensionError("si_sdr", "time",
                         std::to_string(estimate.size()) + " vs " + std::to_string(reference.size()) + " samples");
  }
  return sdr_terms(estimate.data(), reference.data(), estimate.size()).db;
}

template <typename T>
double si_sdr_improvement(std::span<const T> estimates, std::span<const T> references, std::span<const T> mixture,
                          std::size_t speakers) {
  const std::size_t n = mixture.size();
  if (estimates.size() != speakers * n || references.size() != speakers * n) {
    throw DimensionError("si_sdr_improvement", "time", "estimates/references must be [M, T] with T = mixture length");
  }
  double total = 0;
  for (std::size_t i = 0; i < speakers; ++i) {
    auto ref = references.subspan(i * n, n);
    total += si_sdr(estimates.subspan(i * n, n), ref) - si_sdr(mixture, ref);
  }
  return total / static_cast<double>(speakers);
}

template <typename T>
Tensor<T> neg_si_sdr_loss(const Tensor<T>& estimates, const Tensor<T>& references, const std::vector<std::size_t>& perm) {
  require_pair(estimates.shape(), references.shape(), "neg_si_sdr_loss");
  const std::size_t m = estimates.dim(0), n = estimates.dim(1);
  std::vector<std::size_t> assign = perm;
  if (assign.empty()) {
    assign.resize(m);
    std::iota(assign.begin(), assign.end(), 0);
  }
  if (assign.size() != m) throw DimensionError("neg_si_sdr_loss", "perm", "permutation size differs from M");

  std::vector<SdrTerms> terms(m);
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    terms[i] = sdr_terms(estimates.data().data() + assign[i] * n, references.data().data() + i * n, n);
    total -= terms[i].db;
  }
  const double loss = total / static_cast<double>(m);
  const auto ref_data = references.data();
  std::vector<T> refs(ref_data.begin(), ref_data.end());

  return detail::make_result<T>(
      "neg_si_sdr", {}, {static_cast<T>(loss)}, {estimates},
      [terms, refs = std::move(refs), assign, m, n](const detail::TensorImpl<T>& out,
                                                    std::span<const detail::ImplPtr<T>> in) {
        T* gx = detail::grad_of(in[0]);
        if (!gx) return;
        const double upstream = out.grad[0];
        const double k = -upstream * 10.0 / std::log(10.0) / static_cast<double>(m);
        const T* x = in[0]->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          const auto& t = terms[i];
          if (t.clamped) continue;
          const T* xi = x + assign[i] * n;
          const T* si = refs.data() + i * n;
          T* gi = gx + assign[i] * n;
          for (std::size_t j = 0; j < n; ++j) {
            const double e = t.alpha * si[j];
            const double r = xi[j] - e;
            gi[j] += static_cast<T>(k * (2.0 * e / t.target - 2.0 * r / t.residual));
          }
        }
      });
}

template <typename T>
PitResult<T> pit_loss(const Tensor<T>& estimates, const Tensor<T>& references) {
  require_pair(estimates.shape(), references.shape(), "pit_loss");
  const std::size_t m = estimates.dim(0), n = estimates.dim(1);
  if (m > kMaxPitSpeakers) {
    throw std::invalid_argument("pit_loss: " + std::to_string(m) + " speakers exceeds the supported maximum of " +
                                std::to_string(kMaxPitSpeakers));
  }
  // scores[i][j] = si_sdr(estimate j, reference i)
  std::vector<double> scores(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      scores[i * m + j] = sdr_terms(estimates.data().data() + j * n, references.data().data() + i * n, n).db;
    }
  }
  std::vector<std::size_t> perm(m), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_score = -std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < m; ++i) s += scores[i * m + perm[i]];
    if (s > best_score) {
      best_score = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {neg_si_sdr_loss(estimates, references, best), best};
}

#define AVLIT_INSTANTIATE(T)                                                                                  \
  template double si_sdr<T>(std::span<const T>, std::span<const T>);                                          \
  template double si_sdr_improvement<T>(std::span<const T>, std::span<const T>, std::span<const T>,           \
                                        std::size_t);                                                         \
  template Tensor<T> neg_si_sdr_loss<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<std::size_t>&); \
  template PitResult<T> pit_loss<T>(const Tensor<T>&, const Tensor<T>&);

AVLIT_INSTANTIATE(float)
AVLIT_INSTANTIATE(double)
#undef AVLIT_INSTANTIATE

}  // namespace avlit
