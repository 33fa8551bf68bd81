#pragma once

#include <cmath>
#include <vector>

#include "runet/layers/common.hpp"
#include "runet/tensor.hpp"

namespace runet {

template <typename T>
struct BnParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

template <typename T>
BnParams<T> make_bn(std::size_t channels, double momentum = 0.9, double eps = 1e-5) {
  if (!(momentum > 0.0 && momentum < 1.0)) throw std::invalid_argument("batchnorm: momentum must be in (0,1)");
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm: eps must be positive");
  return {BasicTensor<T>::full({channels}, T{1}), BasicTensor<T>({channels}), BasicTensor<T>({channels}),
          BasicTensor<T>::full({channels}, T{1}), momentum, eps};
}

template <typename T>
struct BnCtx {
  BasicTensor<T> xhat;
  std::vector<double> inv_std;
  const BnParams<T>* params = nullptr;
  Mode mode = Mode::train;
  SingleUse use;
};

template <typename T>
struct BnGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dgamma;
  BasicTensor<T> dbeta;
};

/// Batch normalization over N,H,W per channel.
///
/// Train mode normalizes with the biased batch variance and folds the batch
/// statistics into the running estimates. Infer mode is a fixed affine map
/// built from the running estimates.
template <typename T>
std::pair<BasicTensor<T>, BnCtx<T>> batchnorm_fwd(const BasicTensor<T>& x, BnParams<T>& p, Mode mode) {
  require_rank4(x, "batchnorm");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (p.gamma.numel() != c || p.beta.numel() != c || p.running_mean.numel() != c ||
      p.running_var.numel() != c) {
    throw ShapeError("batchnorm: input has " + std::to_string(c) + " channels but parameters have " +
                     std::to_string(p.gamma.numel()));
  }
  const double m = static_cast<double>(n * hw);
  BnCtx<T> ctx;
  ctx.params = &p;
  ctx.mode = mode;
  ctx.xhat = BasicTensor<T>(x.shape());
  ctx.inv_std.resize(c);
  BasicTensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* xp = x.plane(i, ch);
        for (std::size_t k = 0; k < hw; ++k) s += static_cast<double>(xp[k]);
      }
      mean = s / m;
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* xp = x.plane(i, ch);
        for (std::size_t k = 0; k < hw; ++k) {
          const double d = static_cast<double>(xp[k]) - mean;
          ss += d * d;
        }
      }
      var = ss / m;
      p.running_mean[ch] = static_cast<T>(p.momentum * static_cast<double>(p.running_mean[ch]) +
                                          (1.0 - p.momentum) * mean);
      p.running_var[ch] = static_cast<T>(p.momentum * static_cast<double>(p.running_var[ch]) +
                                         (1.0 - p.momentum) * var);
    } else {
      mean = static_cast<double>(p.running_mean[ch]);
      var = static_cast<double>(p.running_var[ch]);
    }
    const double inv = 1.0 / std::sqrt(var + p.eps);
    ctx.inv_std[ch] = inv;
    const double g = static_cast<double>(p.gamma[ch]);
    const double b = static_cast<double>(p.beta[ch]);
    for (std::size_t i = 0; i < n; ++i) {
      const T* xp = x.plane(i, ch);
      T* hp = ctx.xhat.plane(i, ch);
      T* yp = y.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) {
        const double xh = (static_cast<double>(xp[k]) - mean) * inv;
        hp[k] = static_cast<T>(xh);
        yp[k] = static_cast<T>(g * xh + b);
      }
    }
  }
  return {std::move(y), std::move(ctx)};
}

template <typename T>
BnGrads<T> batchnorm_bwd(BnCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("batchnorm_bwd");
  require_same_shape(ctx.xhat, dy, "batchnorm_bwd");
  const auto& p = *ctx.params;
  const std::size_t n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  const double m = static_cast<double>(n * hw);
  BnGrads<T> out{BasicTensor<T>(dy.shape()), BasicTensor<T>({c}), BasicTensor<T>({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* dyp = dy.plane(i, ch);
      const T* hp = ctx.xhat.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) {
        sum_dy += static_cast<double>(dyp[k]);
        sum_dy_xhat += static_cast<double>(dyp[k]) * static_cast<double>(hp[k]);
      }
    }
    out.dbeta[ch] = static_cast<T>(sum_dy);
    out.dgamma[ch] = static_cast<T>(sum_dy_xhat);
    const double scale = static_cast<double>(p.gamma[ch]) * ctx.inv_std[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const T* dyp = dy.plane(i, ch);
      const T* hp = ctx.xhat.plane(i, ch);
      T* dxp = out.dx.plane(i, ch);
      for (std::size_t k = 0; k < hw; ++k) {
        const double d = static_cast<double>(dyp[k]);
        if (ctx.mode == Mode::train) {
          dxp[k] = static_cast<T>(scale * (d - sum_dy / m - static_cast<double>(hp[k]) * sum_dy_xhat / m));
        } else {
          dxp[k] = static_cast<T>(scale * d);
        }
      }
    }
  }
  return out;
}

}  // namespace runet
