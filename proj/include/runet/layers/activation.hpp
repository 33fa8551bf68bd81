#pragma once

#include <cmath>

#include "runet/layers/common.hpp"
#include "runet/tensor.hpp"

namespace runet {

template <typename T>
struct ReluCtx {
  BasicTensor<T> x;
  SingleUse use;
};

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, ReluCtx<T>> relu_fwd(const BasicTensor<T>& x) {
  return {relu(x), ReluCtx<T>{x, {}}};
}

/// Subgradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_bwd(ReluCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("relu_bwd");
  require_same_shape(ctx.x, dy, "relu_bwd");
  BasicTensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = ctx.x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
struct SigmoidCtx {
  BasicTensor<T> y;
  SingleUse use;
};

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = T{1} / (T{1} + std::exp(-x[i]));
  return y;
}

template <typename T>
std::pair<BasicTensor<T>, SigmoidCtx<T>> sigmoid_fwd(const BasicTensor<T>& x) {
  auto y = sigmoid(x);
  SigmoidCtx<T> ctx{y, {}};
  return {std::move(y), std::move(ctx)};
}

template <typename T>
BasicTensor<T> sigmoid_bwd(SigmoidCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("sigmoid_bwd");
  require_same_shape(ctx.y, dy, "sigmoid_bwd");
  BasicTensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * ctx.y[i] * (T{1} - ctx.y[i]);
  return dx;
}

}  // namespace runet
