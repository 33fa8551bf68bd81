#pragma once

#include <stdexcept>
#include <vector>

#include "runet/layers/common.hpp"
#include "runet/rng.hpp"
#include "runet/tensor.hpp"

namespace runet {

template <typename T>
struct DropoutCtx {
  std::vector<T> scale;  // empty when the pass was the identity
  Shape shape;
  SingleUse use;
};

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` (one uniform draw per element, row-major) and survivors are scaled
/// by 1/(1-rate). Infer mode and rate 0 are the identity and draw nothing.
template <typename T>
std::pair<BasicTensor<T>, DropoutCtx<T>> dropout_fwd(const BasicTensor<T>& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  DropoutCtx<T> ctx;
  ctx.shape = x.shape();
  if (mode == Mode::infer || rate == 0.0) return {x, std::move(ctx)};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  ctx.scale.resize(x.numel());
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    ctx.scale[i] = rng.uniform() < rate ? T{0} : keep_scale;
    y[i] = x[i] * ctx.scale[i];
  }
  return {std::move(y), std::move(ctx)};
}

template <typename T>
BasicTensor<T> dropout_bwd(DropoutCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("dropout_bwd");
  if (dy.shape() != ctx.shape) throw ShapeError("dropout_bwd: dy shape mismatch");
  if (ctx.scale.empty()) return dy;
  BasicTensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * ctx.scale[i];
  return dx;
}

}  // namespace runet
