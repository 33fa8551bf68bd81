#pragma once

#include <cstdint>
#include <vector>

#include "runet/layers/common.hpp"
#include "runet/tensor.hpp"

namespace runet {

template <typename T>
struct MaxPoolCtx {
  Shape input_shape;
  std::vector<std::uint8_t> argmax;  // window offset 0..3 per output element
  SingleUse use;
};

/// 2x2 max pooling, stride 2. Ties go to the first window element in
/// row-major order.
template <typename T>
std::pair<BasicTensor<T>, MaxPoolCtx<T>> maxpool2x2_fwd(const BasicTensor<T>& x) {
  require_rank4(x, "maxpool2x2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial dims must be even, got " + to_string(x.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  BasicTensor<T> y({n, c, ho, wo});
  MaxPoolCtx<T> ctx;
  ctx.input_shape = x.shape();
  ctx.argmax.resize(y.numel());
  std::size_t o = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* xp = x.plane(i, ch);
      for (std::size_t oh = 0; oh < ho; ++oh) {
        const T* r0 = xp + (2 * oh) * w;
        const T* r1 = r0 + w;
        for (std::size_t ow = 0; ow < wo; ++ow, ++o) {
          const T v[4] = {r0[2 * ow], r0[2 * ow + 1], r1[2 * ow], r1[2 * ow + 1]};
          std::uint8_t best = 0;
          for (std::uint8_t k = 1; k < 4; ++k)
            if (v[k] > v[best]) best = k;
          y[o] = v[best];
          ctx.argmax[o] = best;
        }
      }
    }
  }
  return {std::move(y), std::move(ctx)};
}

template <typename T>
BasicTensor<T> maxpool2x2_bwd(MaxPoolCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("maxpool2x2_bwd");
  if (dy.numel() != ctx.argmax.size()) throw ShapeError("maxpool2x2_bwd: dy size mismatch");
  BasicTensor<T> dx(ctx.input_shape);
  const std::size_t n = ctx.input_shape[0], c = ctx.input_shape[1], w = ctx.input_shape[3];
  const std::size_t ho = ctx.input_shape[2] / 2, wo = w / 2;
  std::size_t o = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* dxp = dx.plane(i, ch);
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow, ++o) {
          const std::uint8_t k = ctx.argmax[o];
          dxp[(2 * oh + k / 2) * w + 2 * ow + k % 2] = dy[o];
        }
      }
    }
  }
  return dx;
}

}  // namespace runet
