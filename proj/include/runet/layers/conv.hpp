#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "runet/layers/common.hpp"
#include "runet/rng.hpp"
#include "runet/tensor.hpp"

namespace runet {

enum class Padding { same, valid };

/// Weights and bias of a 2-D convolution.
///
/// For conv2d the weight layout is (Cout, Cin, Kh, Kw). For the transposed
/// convolution it is (Cin, Cout, Kh, Kw), so one tensor serves both a
/// transposed convolution and its adjoint strided convolution.
template <typename T>
struct ConvParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
  std::size_t stride = 1;
  Padding padding = Padding::same;
};

/// Fan-in scaled normal weights (std = sqrt(2 / fan_in)), zero bias.
template <typename T>
ConvParams<T> make_conv(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng,
                        std::size_t stride = 1, Padding padding = Padding::same) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  return {BasicTensor<T>::randn({cout, cin, k, k}, rng, stddev), BasicTensor<T>({cout}), stride, padding};
}

template <typename T>
ConvParams<T> make_upconv(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  return {BasicTensor<T>::randn({cin, cout, k, k}, rng, stddev), BasicTensor<T>({cout}), 2, Padding::same};
}

namespace detail {

struct ConvGeometry {
  std::ptrdiff_t n, cin, h, w, cout, kh, kw, stride, ho, wo, pad_top, pad_left;

  // Output columns ow with 0 <= ow*stride + kw_off - pad_left < w.
  std::pair<std::ptrdiff_t, std::ptrdiff_t> col_range(std::ptrdiff_t k) const {
    const std::ptrdiff_t shift = k - pad_left;
    std::ptrdiff_t lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    const std::ptrdiff_t last = w - 1 - shift;
    std::ptrdiff_t hi = last < 0 ? 0 : std::min(wo, last / stride + 1);
    return {lo, std::max(lo, hi)};
  }
};

inline std::pair<std::ptrdiff_t, std::ptrdiff_t> same_geometry(std::ptrdiff_t in, std::ptrdiff_t k,
                                                               std::ptrdiff_t s) {
  const std::ptrdiff_t out = (in + s - 1) / s;
  const std::ptrdiff_t total = std::max<std::ptrdiff_t>((out - 1) * s + k - in, 0);
  return {out, total / 2};
}

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& x, const ConvParams<T>& p) {
  require_rank4(x, "conv2d");
  if (p.weights.rank() != 4) throw ShapeError("conv2d: weights must be (Cout,Cin,Kh,Kw)");
  if (p.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  ConvGeometry g{};
  g.n = static_cast<std::ptrdiff_t>(x.dim(0));
  g.cin = static_cast<std::ptrdiff_t>(x.dim(1));
  g.h = static_cast<std::ptrdiff_t>(x.dim(2));
  g.w = static_cast<std::ptrdiff_t>(x.dim(3));
  g.cout = static_cast<std::ptrdiff_t>(p.weights.dim(0));
  g.kh = static_cast<std::ptrdiff_t>(p.weights.dim(2));
  g.kw = static_cast<std::ptrdiff_t>(p.weights.dim(3));
  g.stride = static_cast<std::ptrdiff_t>(p.stride);
  if (static_cast<std::ptrdiff_t>(p.weights.dim(1)) != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels but weights " +
                     to_string(p.weights.shape()) + " expect " + std::to_string(p.weights.dim(1)));
  }
  if (p.bias.numel() != p.weights.dim(0)) {
    throw ShapeError("conv2d: bias " + to_string(p.bias.shape()) + " does not match Cout " +
                     std::to_string(g.cout));
  }
  if (p.padding == Padding::same) {
    std::tie(g.ho, g.pad_top) = same_geometry(g.h, g.kh, g.stride);
    std::tie(g.wo, g.pad_left) = same_geometry(g.w, g.kw, g.stride);
  } else {
    if (g.h < g.kh || g.w < g.kw) {
      throw ShapeError("conv2d: valid padding needs input " + to_string(x.shape()) +
                       " at least as large as the kernel");
    }
    g.ho = (g.h - g.kh) / g.stride + 1;
    g.wo = (g.w - g.kw) / g.stride + 1;
    g.pad_top = g.pad_left = 0;
  }
  return g;
}

// C(MxN) += A(MxK) * B(KxN), row-major with leading dimensions. Each C
// element receives its K terms in ascending k order.
template <typename T>
void gemm_acc(std::ptrdiff_t M, std::ptrdiff_t N, std::ptrdiff_t K, const T* A, std::ptrdiff_t lda, const T* B,
              std::ptrdiff_t ldb, T* C, std::ptrdiff_t ldc) {
  constexpr std::ptrdiff_t kc = 256;
  for (std::ptrdiff_t k0 = 0; k0 < K; k0 += kc) {
    const std::ptrdiff_t k1 = std::min(K, k0 + kc);
    std::ptrdiff_t i = 0;
    for (; i + 4 <= M; i += 4) {
      T* __restrict c0 = C + i * ldc;
      T* __restrict c1 = c0 + ldc;
      T* __restrict c2 = c1 + ldc;
      T* __restrict c3 = c2 + ldc;
      for (std::ptrdiff_t k = k0; k < k1; ++k) {
        const T a0 = A[i * lda + k], a1 = A[(i + 1) * lda + k], a2 = A[(i + 2) * lda + k],
                a3 = A[(i + 3) * lda + k];
        const T* __restrict b = B + k * ldb;
        for (std::ptrdiff_t j = 0; j < N; ++j) {
          const T bj = b[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    }
    for (; i < M; ++i) {
      T* __restrict c = C + i * ldc;
      for (std::ptrdiff_t k = k0; k < k1; ++k) {
        const T a = A[i * lda + k];
        const T* __restrict b = B + k * ldb;
        for (std::ptrdiff_t j = 0; j < N; ++j) c[j] += a * b[j];
      }
    }
  }
}

// Work is split into blocks of whole output rows; a block covers global rows
// [r0, r1) of the flattened (n, oh) index and (r1-r0)*wo columns.
inline std::ptrdiff_t rows_per_block(const ConvGeometry& g) {
  constexpr std::ptrdiff_t target_cols = 256;
  return std::max<std::ptrdiff_t>(1, target_cols / std::max<std::ptrdiff_t>(g.wo, 1));
}

inline std::ptrdiff_t patch_size(const ConvGeometry& g) { return g.cin * g.kh * g.kw; }

// col[(ci,kh,kw)][col] for output rows [r0, r1); zero where the tap falls in padding.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::ptrdiff_t r0, std::ptrdiff_t r1, T* col) {
  const std::ptrdiff_t ncols = (r1 - r0) * g.wo;
  std::fill_n(col, patch_size(g) * ncols, T{0});
  std::ptrdiff_t row = 0;
  for (std::ptrdiff_t ci = 0; ci < g.cin; ++ci) {
    for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
      for (std::ptrdiff_t kw = 0; kw < g.kw; ++kw, ++row) {
        const auto [lo, hi] = g.col_range(kw);
        const std::ptrdiff_t shift = kw - g.pad_left;
        T* dst = col + row * ncols;
        for (std::ptrdiff_t r = r0; r < r1; ++r) {
          const std::ptrdiff_t n = r / g.ho, oh = r % g.ho;
          const std::ptrdiff_t ih = oh * g.stride + kh - g.pad_top;
          if (ih < 0 || ih >= g.h) continue;
          const T* xr = x + ((n * g.cin + ci) * g.h + ih) * g.w;
          T* d = dst + (r - r0) * g.wo;
          for (std::ptrdiff_t ow = lo; ow < hi; ++ow) d[ow] = xr[ow * g.stride + shift];
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col back into dx in (ci,kh,kw,row,ow) order.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, std::ptrdiff_t r0, std::ptrdiff_t r1, T* dx) {
  const std::ptrdiff_t ncols = (r1 - r0) * g.wo;
  std::ptrdiff_t row = 0;
  for (std::ptrdiff_t ci = 0; ci < g.cin; ++ci) {
    for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
      for (std::ptrdiff_t kw = 0; kw < g.kw; ++kw, ++row) {
        const auto [lo, hi] = g.col_range(kw);
        const std::ptrdiff_t shift = kw - g.pad_left;
        const T* src = col + row * ncols;
        for (std::ptrdiff_t r = r0; r < r1; ++r) {
          const std::ptrdiff_t n = r / g.ho, oh = r % g.ho;
          const std::ptrdiff_t ih = oh * g.stride + kh - g.pad_top;
          if (ih < 0 || ih >= g.h) continue;
          T* dr = dx + ((n * g.cin + ci) * g.h + ih) * g.w;
          const T* s = src + (r - r0) * g.wo;
          for (std::ptrdiff_t ow = lo; ow < hi; ++ow) dr[ow * g.stride + shift] += s[ow];
        }
      }
    }
  }
}

// Copies output rows [r0, r1) of an (N, C, ho, wo) tensor into a (C, cols)
// matrix, or back.
template <typename T>
void gather_rows(const T* y, std::ptrdiff_t c, const ConvGeometry& g, std::ptrdiff_t r0, std::ptrdiff_t r1, T* m) {
  const std::ptrdiff_t ncols = (r1 - r0) * g.wo;
  for (std::ptrdiff_t ch = 0; ch < c; ++ch)
    for (std::ptrdiff_t r = r0; r < r1; ++r) {
      const std::ptrdiff_t n = r / g.ho, oh = r % g.ho;
      std::copy_n(y + ((n * c + ch) * g.ho + oh) * g.wo, g.wo, m + ch * ncols + (r - r0) * g.wo);
    }
}

template <typename T>
void scatter_rows(const T* m, std::ptrdiff_t c, const ConvGeometry& g, std::ptrdiff_t r0, std::ptrdiff_t r1, T* y) {
  const std::ptrdiff_t ncols = (r1 - r0) * g.wo;
  for (std::ptrdiff_t ch = 0; ch < c; ++ch)
    for (std::ptrdiff_t r = r0; r < r1; ++r) {
      const std::ptrdiff_t n = r / g.ho, oh = r % g.ho;
      std::copy_n(m + ch * ncols + (r - r0) * g.wo, g.wo, y + ((n * c + ch) * g.ho + oh) * g.wo);
    }
}

// y = W * x (+ bias), W viewed as (cout, cin*kh*kw).
template <typename T>
void conv_forward_raw(const T* x, const T* w, const T* bias, const ConvGeometry& g, T* y) {
  const std::ptrdiff_t kdim = patch_size(g);
  const std::ptrdiff_t rows = g.n * g.ho, step = rows_per_block(g);
  std::vector<T> col(static_cast<std::size_t>(kdim * step * g.wo));
  std::vector<T> out(static_cast<std::size_t>(g.cout * step * g.wo));
  for (std::ptrdiff_t r0 = 0; r0 < rows; r0 += step) {
    const std::ptrdiff_t r1 = std::min(rows, r0 + step), ncols = (r1 - r0) * g.wo;
    im2col(x, g, r0, r1, col.data());
    for (std::ptrdiff_t co = 0; co < g.cout; ++co)
      std::fill_n(out.data() + co * ncols, ncols, bias ? bias[co] : T{0});
    gemm_acc(g.cout, ncols, kdim, w, kdim, col.data(), ncols, out.data(), ncols);
    scatter_rows(out.data(), g.cout, g, r0, r1, y);
  }
}

// dx += W^T * dy, scattered back through col2im.
template <typename T>
void conv_backward_data_raw(const T* dy, const T* w, const ConvGeometry& g, T* dx) {
  const std::ptrdiff_t kdim = patch_size(g);
  const std::ptrdiff_t rows = g.n * g.ho, step = rows_per_block(g);
  std::vector<T> wt(static_cast<std::size_t>(kdim * g.cout));
  for (std::ptrdiff_t co = 0; co < g.cout; ++co)
    for (std::ptrdiff_t k = 0; k < kdim; ++k) wt[k * g.cout + co] = w[co * kdim + k];
  std::vector<T> dcol(static_cast<std::size_t>(kdim * step * g.wo));
  std::vector<T> dym(static_cast<std::size_t>(g.cout * step * g.wo));
  for (std::ptrdiff_t r0 = 0; r0 < rows; r0 += step) {
    const std::ptrdiff_t r1 = std::min(rows, r0 + step), ncols = (r1 - r0) * g.wo;
    gather_rows(dy, g.cout, g, r0, r1, dym.data());
    std::fill_n(dcol.data(), kdim * ncols, T{0});
    gemm_acc(kdim, ncols, g.cout, wt.data(), g.cout, dym.data(), ncols, dcol.data(), ncols);
    col2im(dcol.data(), g, r0, r1, dx);
  }
}

// dW = dy * col^T, summed per block in T and across blocks in double.
template <typename T>
void conv_backward_weight_raw(const T* x, const T* dy, const ConvGeometry& g, T* dw) {
  const std::ptrdiff_t kdim = patch_size(g);
  const std::ptrdiff_t rows = g.n * g.ho, step = rows_per_block(g);
  std::vector<T> col(static_cast<std::size_t>(kdim * step * g.wo));
  std::vector<T> colt(col.size());
  std::vector<T> dym(static_cast<std::size_t>(g.cout * step * g.wo));
  std::vector<T> part(static_cast<std::size_t>(g.cout * kdim));
  std::vector<double> acc(part.size(), 0.0);
  for (std::ptrdiff_t r0 = 0; r0 < rows; r0 += step) {
    const std::ptrdiff_t r1 = std::min(rows, r0 + step), ncols = (r1 - r0) * g.wo;
    im2col(x, g, r0, r1, col.data());
    for (std::ptrdiff_t k = 0; k < kdim; ++k)
      for (std::ptrdiff_t j = 0; j < ncols; ++j) colt[j * kdim + k] = col[k * ncols + j];
    gather_rows(dy, g.cout, g, r0, r1, dym.data());
    std::fill(part.begin(), part.end(), T{0});
    gemm_acc(g.cout, kdim, ncols, dym.data(), ncols, colt.data(), kdim, part.data(), kdim);
    for (std::size_t i = 0; i < part.size(); ++i) acc[i] += static_cast<double>(part[i]);
  }
  for (std::size_t i = 0; i < acc.size(); ++i) dw[i] = static_cast<T>(acc[i]);
}

template <typename T>
void channel_sums(const BasicTensor<T>& dy, BasicTensor<T>& db) {
  const std::size_t n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* p = dy.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) s += static_cast<double>(p[k]);
    }
    db[ch] = static_cast<T>(s);
  }
}

}  // namespace detail

template <typename T>
struct ConvCtx {
  BasicTensor<T> x;
  const ConvParams<T>* params = nullptr;
  detail::ConvGeometry geom{};
  SingleUse use;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  BasicTensor<T> db;
};

/// Cross-correlation (no kernel flip):
///   y[n,co,oh,ow] = b[co] + sum_{ci,kh,kw} W[co,ci,kh,kw] * x[n,ci,oh*s+kh-pt,ow*s+kw-pl]
/// Each output accumulates bias first, then terms in (ci, kh, kw) order.
/// Same padding follows the TensorFlow rule: output = ceil(in/stride),
/// with the odd padding pixel placed after the input.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p) {
  const auto g = detail::conv_geometry(x, p);
  BasicTensor<T> y({x.dim(0), p.weights.dim(0), static_cast<std::size_t>(g.ho), static_cast<std::size_t>(g.wo)});
  detail::conv_forward_raw(x.raw(), p.weights.raw(), p.bias.raw(), g, y.raw());
  check_finite(y, "conv2d");
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, ConvCtx<T>> conv2d_fwd(const BasicTensor<T>& x, const ConvParams<T>& p) {
  ConvCtx<T> ctx;
  ctx.geom = detail::conv_geometry(x, p);
  ctx.params = &p;
  auto y = conv2d(x, p);
  ctx.x = x;
  return {std::move(y), std::move(ctx)};
}

template <typename T>
ConvGrads<T> conv2d_bwd(ConvCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("conv2d_bwd");
  const auto& g = ctx.geom;
  const auto& p = *ctx.params;
  const Shape expect{static_cast<std::size_t>(g.n), static_cast<std::size_t>(g.cout),
                     static_cast<std::size_t>(g.ho), static_cast<std::size_t>(g.wo)};
  if (dy.shape() != expect) {
    throw ShapeError("conv2d_bwd: dy " + to_string(dy.shape()) + " expected " + to_string(expect));
  }
  ConvGrads<T> out{BasicTensor<T>(ctx.x.shape()), BasicTensor<T>(p.weights.shape()), BasicTensor<T>(p.bias.shape())};
  detail::channel_sums(dy, out.db);
  detail::conv_backward_weight_raw(ctx.x.raw(), dy.raw(), g, out.dw.raw());
  detail::conv_backward_data_raw(dy.raw(), p.weights.raw(), g, out.dx.raw());
  return out;
}

// ---------------------------------------------------------------------------
// Transposed convolution ("up-conv"), stride 2.
//
//   y[n,co,2*ih+kh,2*iw+kw] += W[ci,co,kh,kw] * x[n,ci,ih,iw]
//
// Output spatial size is exactly twice the input. With a 2x2 kernel every
// output pixel receives one tap per input channel; with a 3x3 kernel the taps
// that fall past the last row/column are cropped, which makes it the adjoint
// of a stride-2 3x3 convolution with TensorFlow-style same padding. The
// kernels below run that adjoint convolution.

namespace detail {

// Geometry of the stride-2 convolution whose adjoint is the up-conv:
// input (N, Cout, 2H, 2W), output (N, Cin, H, W), no leading padding.
template <typename T>
ConvGeometry upconv_geometry(const BasicTensor<T>& x, const ConvParams<T>& p) {
  require_rank4(x, "upconv");
  if (p.weights.rank() != 4) throw ShapeError("upconv: weights must be (Cin,Cout,K,K)");
  const std::size_t k = p.weights.dim(2);
  if (p.stride != 2 || p.weights.dim(3) != k || (k != 2 && k != 3)) {
    throw std::invalid_argument("upconv: requires stride 2 and a 2x2 or 3x3 kernel, got stride " +
                                std::to_string(p.stride) + " weights " + to_string(p.weights.shape()));
  }
  if (p.weights.dim(0) != x.dim(1)) {
    throw ShapeError("upconv: input has " + std::to_string(x.dim(1)) + " channels but weights " +
                     to_string(p.weights.shape()) + " expect " + std::to_string(p.weights.dim(0)));
  }
  if (p.bias.numel() != p.weights.dim(1)) throw ShapeError("upconv: bias does not match Cout");
  ConvGeometry g{};
  g.n = static_cast<std::ptrdiff_t>(x.dim(0));
  g.cout = static_cast<std::ptrdiff_t>(x.dim(1));
  g.ho = static_cast<std::ptrdiff_t>(x.dim(2));
  g.wo = static_cast<std::ptrdiff_t>(x.dim(3));
  g.cin = static_cast<std::ptrdiff_t>(p.weights.dim(1));
  g.h = 2 * g.ho;
  g.w = 2 * g.wo;
  g.kh = g.kw = static_cast<std::ptrdiff_t>(k);
  g.stride = 2;
  g.pad_top = g.pad_left = 0;
  return g;
}

}  // namespace detail

template <typename T>
BasicTensor<T> upconv(const BasicTensor<T>& x, const ConvParams<T>& p) {
  const auto g = detail::upconv_geometry(x, p);
  BasicTensor<T> y({x.dim(0), static_cast<std::size_t>(g.cin), static_cast<std::size_t>(g.h),
                    static_cast<std::size_t>(g.w)});
  for (std::ptrdiff_t n = 0; n < g.n; ++n)
    for (std::ptrdiff_t c = 0; c < g.cin; ++c) std::fill_n(y.plane(n, c), g.h * g.w, p.bias[c]);
  detail::conv_backward_data_raw(x.raw(), p.weights.raw(), g, y.raw());
  check_finite(y, "upconv");
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, ConvCtx<T>> upconv_fwd(const BasicTensor<T>& x, const ConvParams<T>& p) {
  ConvCtx<T> ctx;
  ctx.geom = detail::upconv_geometry(x, p);
  ctx.params = &p;
  auto y = upconv(x, p);
  ctx.x = x;
  return {std::move(y), std::move(ctx)};
}

template <typename T>
ConvGrads<T> upconv_bwd(ConvCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("upconv_bwd");
  const auto& g = ctx.geom;
  const auto& p = *ctx.params;
  const Shape expect{static_cast<std::size_t>(g.n), static_cast<std::size_t>(g.cin), static_cast<std::size_t>(g.h),
                     static_cast<std::size_t>(g.w)};
  if (dy.shape() != expect) {
    throw ShapeError("upconv_bwd: dy " + to_string(dy.shape()) + " expected " + to_string(expect));
  }
  ConvGrads<T> out{BasicTensor<T>(ctx.x.shape()), BasicTensor<T>(p.weights.shape()), BasicTensor<T>(p.bias.shape())};
  detail::channel_sums(dy, out.db);
  detail::conv_backward_weight_raw(dy.raw(), ctx.x.raw(), g, out.dw.raw());
  detail::conv_forward_raw<T>(dy.raw(), p.weights.raw(), nullptr, g, out.dx.raw());
  return out;
}

}  // namespace runet
