#include "avlit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "avlit/errors.hpp"

namespace avlit {

namespace instrument {
namespace {
thread_local std::uint64_t t_macs = 0;
}
std::uint64_t macs() { return t_macs; }
void reset_macs() { t_macs = 0; }
void add_macs(std::uint64_t count) { t_macs += count; }
}  // namespace instrument

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

using detail::grad_of;
using detail::ImplPtr;
using detail::make_result;
using detail::TensorImpl;

std::string sz(std::size_t v) { return std::to_string(v); }

template <typename T>
void require_rank(const char* op, const char* name, const Tensor<T>& t, std::size_t rank) {
  if (!t.defined()) throw DimensionError(op, name, "tensor is undefined");
  if (t.rank() != rank) {
    throw DimensionError(op, name, "expected rank " + sz(rank) + ", got shape " + to_string(t.shape()));
  }
}

template <typename T>
void require_bias(const char* op, const Tensor<T>& bias, std::size_t channels) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw DimensionError(op, "bias", "expected [" + sz(channels) + "], got " + to_string(bias.shape()));
  }
}

template <typename T>
void add_bias_rows(T* out, const Tensor<T>& bias, std::size_t rows, std::size_t cols) {
  if (!bias.defined()) return;
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out + r * cols;
    const T v = b[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += v;
  }
}

template <typename T>
void accumulate_row_sums(T* dst, const T* src, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    const T* row = src + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c];
    dst[r] += acc;
  }
}

// ---------------------------------------------------------------------------
// conv1d

struct Conv1dGeom {
  std::size_t cin, len, cout, cin_g, cout_g, kernel, groups, stride, padding, out_len;
  bool pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
  bool depthwise() const { return cin_g == 1 && cout_g == 1; }
};

// col[(ci * K + k) * out_len + t] = x[ci][t * stride + k - padding]
template <typename T>
void im2col_1d(const T* x, std::size_t channels, std::size_t len, std::size_t kernel, std::size_t stride,
               std::size_t padding, std::size_t out_len, T* col) {
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T* xrow = x + ci * len;
    for (std::size_t k = 0; k < kernel; ++k) {
      T* crow = col + (ci * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
        crow[t] = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len)) ? xrow[idx] : T(0);
      }
    }
  }
}

template <typename T>
void col2im_1d(const T* col, std::size_t channels, std::size_t len, std::size_t kernel, std::size_t stride,
               std::size_t padding, std::size_t out_len, T* x) {
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T* xrow = x + ci * len;
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* crow = col + (ci * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len)) xrow[idx] += crow[t];
      }
    }
  }
}

// Valid output range [lo, hi) for which t*stride + k - padding stays inside [0, len).
inline void tap_range(std::size_t k, const Conv1dGeom& g, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.padding);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(g.stride);
  std::ptrdiff_t first = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(g.len) - 1 - off);
  last = last < 0 ? -1 : last / s;
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(last + 1, 0, static_cast<std::ptrdiff_t>(g.out_len)));
  if (hi < lo) hi = lo;
}

template <typename T>
void conv1d_forward(const Conv1dGeom& g, const T* x, const T* w, T* y) {
  if (g.depthwise()) {
    for (std::size_t c = 0; c < g.cout; ++c) {
      const T* xrow = x + c * g.len;
      T* yrow = y + c * g.out_len;
      for (std::size_t k = 0; k < g.kernel; ++k) {
        const T wk = w[c * g.kernel + k];
        std::size_t lo, hi;
        tap_range(k, g, lo, hi);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.padding);
        for (std::size_t t = lo; t < hi; ++t) yrow[t] += wk * xrow[static_cast<std::ptrdiff_t>(t * g.stride) + off];
      }
    }
    return;
  }
  std::vector<T> col;
  for (std::size_t gi = 0; gi < g.groups; ++gi) {
    const T* xg = x + gi * g.cin_g * g.len;
    CMapR<T> wg(w + gi * g.cout_g * g.cin_g * g.kernel, g.cout_g, g.cin_g * g.kernel);
    MapR<T> yg(y + gi * g.cout_g * g.out_len, g.cout_g, g.out_len);
    if (g.pointwise()) {
      yg.noalias() += wg * CMapR<T>(xg, g.cin_g, g.len);
    } else {
      col.resize(g.cin_g * g.kernel * g.out_len);
      im2col_1d(xg, g.cin_g, g.len, g.kernel, g.stride, g.padding, g.out_len, col.data());
      yg.noalias() += wg * CMapR<T>(col.data(), g.cin_g * g.kernel, g.out_len);
    }
  }
}

template <typename T>
void conv1d_backward(const Conv1dGeom& g, const T* x, const T* w, const T* gy, T* gx, T* gw) {
  if (g.depthwise()) {
    for (std::size_t c = 0; c < g.cout; ++c) {
      const T* xrow = x + c * g.len;
      const T* grow = gy + c * g.out_len;
      for (std::size_t k = 0; k < g.kernel; ++k) {
        std::size_t lo, hi;
        tap_range(k, g, lo, hi);
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.padding);
        if (gw) {
          T acc = 0;
          for (std::size_t t = lo; t < hi; ++t) acc += grow[t] * xrow[static_cast<std::ptrdiff_t>(t * g.stride) + off];
          gw[c * g.kernel + k] += acc;
        }
        if (gx) {
          const T wk = w[c * g.kernel + k];
          T* gxrow = gx + c * g.len;
          for (std::size_t t = lo; t < hi; ++t) gxrow[static_cast<std::ptrdiff_t>(t * g.stride) + off] += wk * grow[t];
        }
      }
    }
    return;
  }
  std::vector<T> col;
  for (std::size_t gi = 0; gi < g.groups; ++gi) {
    const T* xg = x + gi * g.cin_g * g.len;
    CMapR<T> wg(w + gi * g.cout_g * g.cin_g * g.kernel, g.cout_g, g.cin_g * g.kernel);
    CMapR<T> gyg(gy + gi * g.cout_g * g.out_len, g.cout_g, g.out_len);
    if (g.pointwise()) {
      if (gw) MapR<T>(gw + gi * g.cout_g * g.cin_g, g.cout_g, g.cin_g).noalias() += gyg * CMapR<T>(xg, g.cin_g, g.len).transpose();
      if (gx) MapR<T>(gx + gi * g.cin_g * g.len, g.cin_g, g.len).noalias() += wg.transpose() * gyg;
      continue;
    }
    const std::size_t rows = g.cin_g * g.kernel;
    if (gw) {
      col.resize(rows * g.out_len);
      im2col_1d(xg, g.cin_g, g.len, g.kernel, g.stride, g.padding, g.out_len, col.data());
      MapR<T>(gw + gi * g.cout_g * rows, g.cout_g, rows).noalias() += gyg * CMapR<T>(col.data(), rows, g.out_len).transpose();
    }
    if (gx) {
      MatR<T> dcol = wg.transpose() * gyg;
      col2im_1d(dcol.data(), g.cin_g, g.len, g.kernel, g.stride, g.padding, g.out_len, gx + gi * g.cin_g * g.len);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv1dOptions opt) {
  require_rank("conv1d", "input", x, 2);
  require_rank("conv1d", "weight", weight, 3);
  Conv1dGeom g{};
  g.cin = x.dim(0);
  g.len = x.dim(1);
  g.cout = weight.dim(0);
  g.cin_g = weight.dim(1);
  g.kernel = weight.dim(2);
  g.groups = opt.groups;
  g.stride = opt.stride;
  g.padding = opt.padding;
  if (g.groups == 0 || g.cin % g.groups != 0) {
    throw DimensionError("conv1d", "input.channels", sz(g.cin) + " channels not divisible by groups=" + sz(g.groups));
  }
  if (g.cin_g != g.cin / g.groups) {
    throw DimensionError("conv1d", "weight.in_channels",
                         "expected " + sz(g.cin / g.groups) + ", got " + sz(g.cin_g));
  }
  if (g.cout % g.groups != 0) {
    throw DimensionError("conv1d", "weight.out_channels", sz(g.cout) + " not divisible by groups=" + sz(g.groups));
  }
  if (g.stride == 0) throw DimensionError("conv1d", "stride", "stride must be positive");
  if (g.kernel == 0 || g.kernel > g.len + 2 * g.padding) {
    throw DimensionError("conv1d", "time", "kernel " + sz(g.kernel) + " exceeds padded length " + sz(g.len + 2 * g.padding));
  }
  require_bias("conv1d", bias, g.cout);
  g.cout_g = g.cout / g.groups;
  g.out_len = (g.len + 2 * g.padding - g.kernel) / g.stride + 1;
  instrument::add_macs(static_cast<std::uint64_t>(g.cout) * g.cin_g * g.kernel * g.out_len);

  std::vector<T> out(g.cout * g.out_len, T(0));
  conv1d_forward(g, x.data().data(), weight.data().data(), out.data());
  add_bias_rows(out.data(), bias, g.cout, g.out_len);

  return make_result<T>(
      "conv1d", {g.cout, g.out_len}, std::move(out), {x, weight, bias},
      [g](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
        const T* gy = res.grad.data();
        if (T* gb = grad_of(in[2])) accumulate_row_sums(gb, gy, g.cout, g.out_len);
        T* gx = grad_of(in[0]);
        T* gw = grad_of(in[1]);
        if (gx || gw) conv1d_backward(g, in[0]->data.data(), in[1]->data.data(), gy, gx, gw);
      });
}

template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                           std::size_t padding) {
  require_rank("conv_transpose1d", "input", x, 2);
  require_rank("conv_transpose1d", "weight", weight, 3);
  const std::size_t cin = x.dim(0), len = x.dim(1);
  if (weight.dim(0) != cin) {
    throw DimensionError("conv_transpose1d", "weight.in_channels", "expected " + sz(cin) + ", got " + sz(weight.dim(0)));
  }
  const std::size_t cout = weight.dim(1), kernel = weight.dim(2);
  if (stride == 0) throw DimensionError("conv_transpose1d", "stride", "stride must be positive");
  if (kernel == 0 || (len - 1) * stride + kernel <= 2 * padding) {
    throw DimensionError("conv_transpose1d", "time", "padding " + sz(padding) + " consumes the whole output");
  }
  require_bias("conv_transpose1d", bias, cout);
  const std::size_t out_len = (len - 1) * stride + kernel - 2 * padding;
  instrument::add_macs(static_cast<std::uint64_t>(cin) * cout * kernel * len);

  // Same geometry as the conv1d whose adjoint this is: that conv maps
  // [cout, out_len] -> [cin, len].
  Conv1dGeom g{cout, out_len, cin, cout, cin, kernel, 1, stride, padding, len};
  const std::size_t rows = cout * kernel;
  MatR<T> col = CMapR<T>(weight.data().data(), cin, rows).transpose() * CMapR<T>(x.data().data(), cin, len);
  std::vector<T> out(cout * out_len, T(0));
  col2im_1d(col.data(), cout, out_len, kernel, stride, padding, len, out.data());
  add_bias_rows(out.data(), bias, cout, out_len);

  return make_result<T>(
      "conv_transpose1d", {cout, out_len}, std::move(out), {x, weight, bias},
      [g, rows](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
        const T* gy = res.grad.data();
        if (T* gb = grad_of(in[2])) accumulate_row_sums(gb, gy, g.cin, g.len);
        T* gx = grad_of(in[0]);
        T* gw = grad_of(in[1]);
        if (!gx && !gw) return;
        std::vector<T> dcol(rows * g.out_len);
        im2col_1d(gy, g.cin, g.len, g.kernel, g.stride, g.padding, g.out_len, dcol.data());
        CMapR<T> dc(dcol.data(), rows, g.out_len);
        if (gx) MapR<T>(gx, g.cout, g.out_len).noalias() += CMapR<T>(in[1]->data.data(), g.cout, rows) * dc;
        if (gw) MapR<T>(gw, g.cout, rows).noalias() += CMapR<T>(in[0]->data.data(), g.cout, g.out_len) * dc.transpose();
      });
}

// ---------------------------------------------------------------------------
// 2-D convolutions (square kernels, no padding)

namespace {

struct Conv2dGeom {
  std::size_t cin, h, w, cout, kernel, stride, out_h, out_w;
};

// col[((ci*K + ky)*K + kx)][oy*out_w + ox] = x[ci][oy*s + ky][ox*s + kx]
template <typename T>
void im2col_2d(const T* x, const Conv2dGeom& g, T* col) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* crow = col + ((ci * g.kernel + ky) * g.kernel + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const T* xrow = x + (ci * g.h + oy * g.stride + ky) * g.w + kx;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) crow[oy * g.out_w + ox] = xrow[ox * g.stride];
        }
      }
}

template <typename T>
void col2im_2d(const T* col, const Conv2dGeom& g, T* x) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* crow = col + ((ci * g.kernel + ky) * g.kernel + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          T* xrow = x + (ci * g.h + oy * g.stride + ky) * g.w + kx;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) xrow[ox * g.stride] += crow[oy * g.out_w + ox];
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride) {
  require_rank("conv2d", "input", x, 3);
  require_rank("conv2d", "weight", weight, 4);
  Conv2dGeom g{x.dim(0), x.dim(1), x.dim(2), weight.dim(0), weight.dim(2), stride, 0, 0};
  if (weight.dim(1) != g.cin) {
    throw DimensionError("conv2d", "weight.in_channels", "expected " + sz(g.cin) + ", got " + sz(weight.dim(1)));
  }
  if (weight.dim(3) != g.kernel) throw DimensionError("conv2d", "weight.kernel", "kernel must be square");
  if (stride == 0) throw DimensionError("conv2d", "stride", "stride must be positive");
  if (g.kernel == 0 || g.kernel > g.h) throw DimensionError("conv2d", "height", "kernel exceeds input height " + sz(g.h));
  if (g.kernel > g.w) throw DimensionError("conv2d", "width", "kernel exceeds input width " + sz(g.w));
  require_bias("conv2d", bias, g.cout);
  g.out_h = (g.h - g.kernel) / stride + 1;
  g.out_w = (g.w - g.kernel) / stride + 1;
  const std::size_t rows = g.cin * g.kernel * g.kernel, plane = g.out_h * g.out_w;
  instrument::add_macs(static_cast<std::uint64_t>(g.cout) * rows * plane);

  std::vector<T> col(rows * plane);
  im2col_2d(x.data().data(), g, col.data());
  std::vector<T> out(g.cout * plane, T(0));
  MapR<T>(out.data(), g.cout, plane).noalias() =
      CMapR<T>(weight.data().data(), g.cout, rows) * CMapR<T>(col.data(), rows, plane);
  add_bias_rows(out.data(), bias, g.cout, plane);

  return make_result<T>(
      "conv2d", {g.cout, g.out_h, g.out_w}, std::move(out), {x, weight, bias},
      [g, rows, plane](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
        const T* gy = res.grad.data();
        if (T* gb = grad_of(in[2])) accumulate_row_sums(gb, gy, g.cout, plane);
        CMapR<T> gym(gy, g.cout, plane);
        if (T* gw = grad_of(in[1])) {
          std::vector<T> col(rows * plane);
          im2col_2d(in[0]->data.data(), g, col.data());
          MapR<T>(gw, g.cout, rows).noalias() += gym * CMapR<T>(col.data(), rows, plane).transpose();
        }
        if (T* gx = grad_of(in[0])) {
          MatR<T> dcol = CMapR<T>(in[1]->data.data(), g.cout, rows).transpose() * gym;
          col2im_2d(dcol.data(), g, gx);
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride) {
  require_rank("conv_transpose2d", "input", x, 3);
  require_rank("conv_transpose2d", "weight", weight, 4);
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (weight.dim(0) != cin) {
    throw DimensionError("conv_transpose2d", "weight.in_channels", "expected " + sz(cin) + ", got " + sz(weight.dim(0)));
  }
  const std::size_t cout = weight.dim(1), kernel = weight.dim(2);
  if (weight.dim(3) != kernel) throw DimensionError("conv_transpose2d", "weight.kernel", "kernel must be square");
  if (stride == 0 || kernel == 0) throw DimensionError("conv_transpose2d", "stride", "stride and kernel must be positive");
  require_bias("conv_transpose2d", bias, cout);
  const std::size_t out_h = (h - 1) * stride + kernel, out_w = (w - 1) * stride + kernel;
  // Adjoint geometry: a conv2d from [cout, out_h, out_w] to [cin, h, w].
  Conv2dGeom g{cout, out_h, out_w, cin, kernel, stride, h, w};
  const std::size_t rows = cout * kernel * kernel, plane = h * w;
  instrument::add_macs(static_cast<std::uint64_t>(cin) * rows * plane);

  MatR<T> col = CMapR<T>(weight.data().data(), cin, rows).transpose() * CMapR<T>(x.data().data(), cin, plane);
  std::vector<T> out(cout * out_h * out_w, T(0));
  col2im_2d(col.data(), g, out.data());
  add_bias_rows(out.data(), bias, cout, out_h * out_w);

  return make_result<T>(
      "conv_transpose2d", {cout, out_h, out_w}, std::move(out), {x, weight, bias},
      [g, rows, plane](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
        const T* gy = res.grad.data();
        if (T* gb = grad_of(in[2])) accumulate_row_sums(gb, gy, g.cin, g.h * g.w);
        T* gx = grad_of(in[0]);
        T* gw = grad_of(in[1]);
        if (!gx && !gw) return;
        std::vector<T> dcol(rows * plane);
        im2col_2d(gy, g, dcol.data());
        CMapR<T> dc(dcol.data(), rows, plane);
        if (gx) MapR<T>(gx, g.cout, plane).noalias() += CMapR<T>(in[1]->data.data(), g.cout, rows) * dc;
        if (gw) MapR<T>(gw, g.cout, rows).noalias() += CMapR<T>(in[0]->data.data(), g.cout, plane) * dc.transpose();
      });
}

// ---------------------------------------------------------------------------
// Resampling

template <typename T>
Tensor<T> nearest_interp1d(const Tensor<T>& x, std::size_t target_len) {
  require_rank("nearest_interp1d", "input", x, 2);
  const std::size_t channels = x.dim(0), src_len = x.dim(1);
  if (src_len == 0) throw DimensionError("nearest_interp1d", "time", "source length must be >= 1");
  if (target_len == 0) throw DimensionError("nearest_interp1d", "time", "target length must be >= 1");
  std::vector<std::size_t> index(target_len);
  for (std::size_t t = 0; t < target_len; ++t) index[t] = t * src_len / target_len;

  const auto src = x.data();
  std::vector<T> out(channels * target_len);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < target_len; ++t) out[c * target_len + t] = src[c * src_len + index[t]];

  return make_result<T>("nearest_interp1d", {channels, target_len}, std::move(out), {x},
                        [index = std::move(index), channels, src_len](const TensorImpl<T>& res,
                                                                      std::span<const ImplPtr<T>> in) {
                          T* gx = grad_of(in[0]);
                          if (!gx) return;
                          const std::size_t target = index.size();
                          for (std::size_t c = 0; c < channels; ++c)
                            for (std::size_t t = 0; t < target; ++t)
                              gx[c * src_len + index[t]] += res.grad[c * target + t];
                        });
}

// ---------------------------------------------------------------------------
// Elementwise

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(op, "dim " + std::to_string(i),
                           "cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

namespace {

// For each flat output index, the flat index into an operand broadcast to `out`.
std::vector<std::size_t> broadcast_index(const Shape& operand, const Shape& out) {
  const std::size_t rank = out.size(), n = numel(out);
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    const std::size_t pos = i + operand.size();
    if (pos >= rank) {
      const std::size_t extent = operand[pos - rank];
      strides[i] = extent == 1 ? 0 : stride;
      stride *= extent;
    }
  }
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    map[flat] = offset;
    for (std::size_t i = rank; i-- > 0;) {
      ++counter[i];
      offset += strides[i];
      if (counter[i] < out[i]) break;
      offset -= strides[i] * counter[i];
      counter[i] = 0;
    }
  }
  return map;
}

enum class Binary { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
  if (!a.defined() || !b.defined()) throw DimensionError(name, "all", "undefined operand");
  const auto da = a.data(), db = b.data();
  if (a.shape() == b.shape()) {
    const std::size_t n = a.size();
    std::vector<T> out(n);
    switch (kind) {
      case Binary::kAdd: for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[i]; break;
      case Binary::kSub: for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[i]; break;
      case Binary::kMul: for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[i]; break;
    }
    return make_result<T>(name, a.shape(), std::move(out), {a, b},
                          [kind, n](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
                            const T* gy = res.grad.data();
                            if (T* ga = grad_of(in[0])) {
                              if (kind == Binary::kMul) {
                                const T* vb = in[1]->data.data();
                                for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * vb[i];
                              } else {
                                for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i];
                              }
                            }
                            if (T* gb = grad_of(in[1])) {
                              if (kind == Binary::kMul) {
                                const T* va = in[0]->data.data();
                                for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i] * va[i];
                              } else if (kind == Binary::kSub) {
                                for (std::size_t i = 0; i < n; ++i) gb[i] -= gy[i];
                              } else {
                                for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i];
                              }
                            }
                          });
  }

  Shape shape = broadcast_shapes(a.shape(), b.shape(), name);
  auto ia = broadcast_index(a.shape(), shape);
  auto ib = broadcast_index(b.shape(), shape);
  const std::size_t n = numel(shape);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = da[ia[i]], y = db[ib[i]];
    out[i] = kind == Binary::kAdd ? x + y : kind == Binary::kSub ? x - y : x * y;
  }
  return make_result<T>(name, std::move(shape), std::move(out), {a, b},
                        [kind, ia = std::move(ia), ib = std::move(ib)](const TensorImpl<T>& res,
                                                                       std::span<const ImplPtr<T>> in) {
                          const T* gy = res.grad.data();
                          const std::size_t n = ia.size();
                          if (T* ga = grad_of(in[0])) {
                            const T* vb = in[1]->data.data();
                            for (std::size_t i = 0; i < n; ++i) ga[ia[i]] += kind == Binary::kMul ? gy[i] * vb[ib[i]] : gy[i];
                          }
                          if (T* gb = grad_of(in[1])) {
                            const T* va = in[0]->data.data();
                            for (std::size_t i = 0; i < n; ++i) {
                              gb[ib[i]] += kind == Binary::kMul ? gy[i] * va[ia[i]] : kind == Binary::kSub ? -gy[i] : gy[i];
                            }
                          }
                        });
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, const char* name, Fwd fwd, Deriv deriv) {
  const auto src = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = fwd(src[i]);
  // deriv(input, output) -> local derivative
  return make_result<T>(name, x.shape(), std::move(out), {x},
                        [deriv](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
                          T* gx = grad_of(in[0]);
                          if (!gx) return;
                          const auto& xin = in[0]->data;
                          for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += res.grad[i] * deriv(xin[i], res.data[i]);
                        });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, Binary::kAdd, "add"); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, Binary::kSub, "sub"); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, Binary::kMul, "mul"); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary(x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
               [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
               [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  require_rank("prelu", "slope", slope, 1);
  if (x.rank() == 0) throw DimensionError("prelu", "input", "rank must be >= 1");
  const std::size_t channels = x.dim(0), inner = x.size() / std::max<std::size_t>(channels, 1);
  const std::size_t ns = slope.dim(0);
  if (ns != 1 && ns != channels) {
    throw DimensionError("prelu", "slope", "expected [1] or [" + sz(channels) + "], got " + to_string(slope.shape()));
  }
  const auto src = x.data();
  const auto a = slope.data();
  std::vector<T> out(src.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const T ac = a[ns == 1 ? 0 : c];
    for (std::size_t i = c * inner; i < (c + 1) * inner; ++i) out[i] = src[i] > T(0) ? src[i] : ac * src[i];
  }
  return make_result<T>("prelu", x.shape(), std::move(out), {x, slope},
                        [channels, inner, ns](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
                          const auto& xin = in[0]->data;
                          const auto& a = in[1]->data;
                          T* gx = grad_of(in[0]);
                          T* ga = grad_of(in[1]);
                          for (std::size_t c = 0; c < channels; ++c) {
                            const T ac = a[ns == 1 ? 0 : c];
                            T acc = 0;
                            for (std::size_t i = c * inner; i < (c + 1) * inner; ++i) {
                              const bool pos = xin[i] > T(0);
                              if (gx) gx[i] += pos ? res.grad[i] : ac * res.grad[i];
                              if (!pos) acc += xin[i] * res.grad[i];
                            }
                            if (ga) ga[ns == 1 ? 0 : c] += acc;
                          }
                        });
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
Tensor<T> global_channel_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  require_rank("global_channel_norm", "input", x, 2);
  const std::size_t channels = x.dim(0), len = x.dim(1);
  require_rank("global_channel_norm", "gamma", gamma, 1);
  require_rank("global_channel_norm", "beta", beta, 1);
  if (gamma.dim(0) != channels || beta.dim(0) != channels) {
    throw DimensionError("global_channel_norm", "channels", "affine parameters must have " + sz(channels) + " entries");
  }
  if (len == 0) throw DimensionError("global_channel_norm", "time", "empty temporal axis");
  instrument::add_macs(static_cast<std::uint64_t>(channels) * len);

  const auto src = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<T> mean(channels), inv_std(channels);
  std::vector<T> out(src.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const T* row = src.data() + c * len;
    double s = 0;
    for (std::size_t t = 0; t < len; ++t) s += row[t];
    const double m = s / static_cast<double>(len);
    double v = 0;
    for (std::size_t t = 0; t < len; ++t) v += (row[t] - m) * (row[t] - m);
    v /= static_cast<double>(len);
    const double inv = 1.0 / std::sqrt(v + eps);
    mean[c] = static_cast<T>(m);
    inv_std[c] = static_cast<T>(inv);
    for (std::size_t t = 0; t < len; ++t) out[c * len + t] = (row[t] - mean[c]) * inv_std[c] * g[c] + b[c];
  }

  return make_result<T>(
      "global_channel_norm", x.shape(), std::move(out), {x, gamma, beta},
      [channels, len, mean = std::move(mean), inv_std = std::move(inv_std)](const TensorImpl<T>& res,
                                                                            std::span<const ImplPtr<T>> in) {
        const auto& xin = in[0]->data;
        const auto& g = in[1]->data;
        T* gx = grad_of(in[0]);
        T* gg = grad_of(in[1]);
        T* gb = grad_of(in[2]);
        const T n = static_cast<T>(len);
        for (std::size_t c = 0; c < channels; ++c) {
          const T* row = xin.data() + c * len;
          const T* gy = res.grad.data() + c * len;
          T sum_gy = 0, sum_gy_xhat = 0;
          for (std::size_t t = 0; t < len; ++t) {
            const T xhat = (row[t] - mean[c]) * inv_std[c];
            sum_gy += gy[t];
            sum_gy_xhat += gy[t] * xhat;
          }
          if (gg) gg[c] += sum_gy_xhat;
          if (gb) gb[c] += sum_gy;
          if (!gx) continue;
          // dx = inv/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)), dxhat = gy*gamma
          const T k = g[c] * inv_std[c] / n;
          for (std::size_t t = 0; t < len; ++t) {
            const T xhat = (row[t] - mean[c]) * inv_std[c];
            gx[c * len + t] += k * (n * gy[t] - sum_gy - xhat * sum_gy_xhat);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and layout

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>("sum", {}, {acc}, {x}, [](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
    T* gx = grad_of(in[0]);
    if (!gx) return;
    const T g = res.grad[0];
    for (std::size_t i = 0; i < in[0]->data.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw DimensionError("mean", "all", "empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

namespace {
void outer_inner(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}
}  // namespace

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat", "all", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat", "axis", "axis " + sz(axis) + " out of range");
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw DimensionError("concat", "dim " + sz(axis), "incompatible part " + to_string(s) + " vs " + to_string(first));
    extents.push_back(s[axis]);
    shape[axis] += s[axis];
  }
  std::size_t outer, inner;
  outer_inner(shape, axis, outer, inner);
  const std::size_t row = shape[axis] * inner;
  std::vector<T> out(numel(shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    const std::size_t chunk = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src.data() + o * chunk, chunk, out.data() + o * row + offset);
    offset += chunk;
  }
  return make_result<T>("concat", std::move(shape), std::move(out), parts,
                        [extents, outer, inner, row](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
                          std::size_t offset = 0;
                          for (std::size_t p = 0; p < in.size(); ++p) {
                            const std::size_t chunk = extents[p] * inner;
                            if (T* g = grad_of(in[p])) {
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += res.grad[o * row + offset + i];
                            }
                            offset += chunk;
                          }
                        });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank()) throw DimensionError("narrow", "axis", "axis " + sz(axis) + " out of range");
  if (start + length > x.dim(axis)) {
    throw DimensionError("narrow", "dim " + sz(axis),
                         "range [" + sz(start) + ", " + sz(start + length) + ") exceeds extent " + sz(x.dim(axis)));
  }
  Shape shape = x.shape();
  std::size_t outer, inner;
  outer_inner(shape, axis, outer, inner);
  const std::size_t src_row = shape[axis] * inner, chunk = length * inner, offset = start * inner;
  shape[axis] = length;
  const auto src = x.data();
  std::vector<T> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(src.data() + o * src_row + offset, chunk, out.data() + o * chunk);
  return make_result<T>("narrow", std::move(shape), std::move(out), {x},
                        [outer, src_row, chunk, offset](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
                          T* g = grad_of(in[0]);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < chunk; ++i) g[o * src_row + offset + i] += res.grad[o * chunk + i];
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape", "all", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x},
                        [](const TensorImpl<T>& res, std::span<const ImplPtr<T>> in) {
                          T* g = grad_of(in[0]);
                          if (!g) return;
                          for (std::size_t i = 0; i < res.grad.size(); ++i) g[i] += res.grad[i];
                        });
}

#define AVLIT_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv1dOptions);         \
  template Tensor<T> conv_transpose1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                                      std::size_t);                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);           \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> nearest_interp1d(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                              \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                     \
  template Tensor<T> prelu(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                           \
  template Tensor<T> global_channel_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template Tensor<T> sum(const Tensor<T>&);                                                               \
  template Tensor<T> mean(const Tensor<T>&);                                                              \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                  \
  template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

AVLIT_INSTANTIATE_OPS(float)
AVLIT_INSTANTIATE_OPS(double)

}  // namespace avlit
