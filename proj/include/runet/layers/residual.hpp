#pragma once

#include <optional>

#include "runet/layers/activation.hpp"
#include "runet/layers/batchnorm.hpp"
#include "runet/layers/conv.hpp"

namespace runet {

/// Pre-activation residual unit:
///
///   F(x) = conv2(relu(bn2(conv1(relu(bn1(x))))))      both convs 3x3, same padding
///   H(x) = x                   when Cin == Cout
///   H(x) = shortcut(x)         1x1 convolution otherwise (no BN/ReLU)
///   y    = H(x) + F(x)
template <typename T>
struct ResidualUnitParams {
  BnParams<T> bn1;
  ConvParams<T> conv1;
  BnParams<T> bn2;
  ConvParams<T> conv2;
  std::optional<ConvParams<T>> shortcut;

  std::size_t in_channels() const { return conv1.weights.dim(1); }
  std::size_t out_channels() const { return conv2.weights.dim(0); }
};

template <typename T>
ResidualUnitParams<T> make_residual_unit(std::size_t cin, std::size_t cout, Rng& rng, double bn_momentum = 0.9,
                                         double bn_eps = 1e-5) {
  ResidualUnitParams<T> u;
  u.bn1 = make_bn<T>(cin, bn_momentum, bn_eps);
  u.conv1 = make_conv<T>(cin, cout, 3, rng);
  u.bn2 = make_bn<T>(cout, bn_momentum, bn_eps);
  u.conv2 = make_conv<T>(cout, cout, 3, rng);
  if (cin != cout) {
    // The shortcut input is not rectified: unit gain instead of He scaling,
    // otherwise every projection doubles the activation variance.
    u.shortcut = make_conv<T>(cin, cout, 1, rng);
    for (auto& w : u.shortcut->weights.data()) w = static_cast<T>(w * std::sqrt(0.5));
  }
  return u;
}

template <typename T>
struct ResidualUnitCtx {
  BnCtx<T> bn1;
  ReluCtx<T> relu1;
  ConvCtx<T> conv1;
  BnCtx<T> bn2;
  ReluCtx<T> relu2;
  ConvCtx<T> conv2;
  std::optional<ConvCtx<T>> shortcut;
  SingleUse use;
};

/// Gradients use the parameter struct itself; the BN running statistics of
/// `dparams` are left untouched.
template <typename T>
struct ResidualUnitGrads {
  BasicTensor<T> dx;
  ResidualUnitParams<T> dparams;
};

template <typename T>
std::pair<BasicTensor<T>, ResidualUnitCtx<T>> residual_unit_fwd(const BasicTensor<T>& x, ResidualUnitParams<T>& p,
                                                                Mode mode) {
  require_rank4(x, "residual_unit");
  if (x.dim(1) != p.in_channels()) {
    throw ShapeError("residual_unit: input " + to_string(x.shape()) + " but unit expects " +
                     std::to_string(p.in_channels()) + " channels");
  }
  if (!p.shortcut && p.in_channels() != p.out_channels()) {
    throw ShapeError("residual_unit: channel change requires a projection shortcut");
  }
  ResidualUnitCtx<T> ctx;
  auto [a1, bn1] = batchnorm_fwd(x, p.bn1, mode);
  auto [r1, relu1] = relu_fwd(a1);
  auto [c1, conv1] = conv2d_fwd(r1, p.conv1);
  auto [a2, bn2] = batchnorm_fwd(c1, p.bn2, mode);
  auto [r2, relu2] = relu_fwd(a2);
  auto [f, conv2] = conv2d_fwd(r2, p.conv2);
  ctx.bn1 = std::move(bn1);
  ctx.relu1 = std::move(relu1);
  ctx.conv1 = std::move(conv1);
  ctx.bn2 = std::move(bn2);
  ctx.relu2 = std::move(relu2);
  ctx.conv2 = std::move(conv2);
  if (p.shortcut) {
    auto [h, sc] = conv2d_fwd(x, *p.shortcut);
    ctx.shortcut = std::move(sc);
    return {add(h, f), std::move(ctx)};
  }
  return {add(x, f), std::move(ctx)};
}

template <typename T>
ResidualUnitGrads<T> residual_unit_bwd(ResidualUnitCtx<T>& ctx, const BasicTensor<T>& dy) {
  ctx.use.consume("residual_unit_bwd");
  ResidualUnitGrads<T> g;
  auto gc2 = conv2d_bwd(ctx.conv2, dy);
  auto dr2 = relu_bwd(ctx.relu2, gc2.dx);
  auto gb2 = batchnorm_bwd(ctx.bn2, dr2);
  auto gc1 = conv2d_bwd(ctx.conv1, gb2.dx);
  auto dr1 = relu_bwd(ctx.relu1, gc1.dx);
  auto gb1 = batchnorm_bwd(ctx.bn1, dr1);

  g.dparams.bn1.gamma = std::move(gb1.dgamma);
  g.dparams.bn1.beta = std::move(gb1.dbeta);
  g.dparams.conv1 = {std::move(gc1.dw), std::move(gc1.db), ctx.conv1.params->stride, ctx.conv1.params->padding};
  g.dparams.bn2.gamma = std::move(gb2.dgamma);
  g.dparams.bn2.beta = std::move(gb2.dbeta);
  g.dparams.conv2 = {std::move(gc2.dw), std::move(gc2.db), ctx.conv2.params->stride, ctx.conv2.params->padding};
  if (ctx.shortcut) {
    auto gs = conv2d_bwd(*ctx.shortcut, dy);
    g.dparams.shortcut = ConvParams<T>{std::move(gs.dw), std::move(gs.db), 1, Padding::same};
    g.dx = add(gb1.dx, gs.dx);
  } else {
    g.dx = add(gb1.dx, dy);
  }
  return g;
}

}  // namespace runet
