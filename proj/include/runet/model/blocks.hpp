#pragma once

#include <optional>
#include <variant>

#include "runet/layers.hpp"

namespace runet {

/// Two plain 3x3 convolutions, each followed by optional BN and a ReLU:
///   conv -> [BN] -> ReLU -> conv -> [BN] -> ReLU
template <typename T>
struct ConvBlockParams {
  ConvParams<T> conv1;
  std::optional<BnParams<T>> bn1;
  ConvParams<T> conv2;
  std::optional<BnParams<T>> bn2;
};

template <typename T>
ConvBlockParams<T> make_conv_block(std::size_t cin, std::size_t cout, bool with_bn, Rng& rng, double bn_momentum,
                                   double bn_eps) {
  ConvBlockParams<T> b;
  b.conv1 = make_conv<T>(cin, cout, 3, rng);
  b.conv2 = make_conv<T>(cout, cout, 3, rng);
  if (with_bn) {
    b.bn1 = make_bn<T>(cout, bn_momentum, bn_eps);
    b.bn2 = make_bn<T>(cout, bn_momentum, bn_eps);
  }
  return b;
}

template <typename T>
struct ConvBlockCtx {
  ConvCtx<T> conv1;
  std::optional<BnCtx<T>> bn1;
  ReluCtx<T> relu1;
  ConvCtx<T> conv2;
  std::optional<BnCtx<T>> bn2;
  ReluCtx<T> relu2;
};

template <typename T>
std::pair<BasicTensor<T>, ConvBlockCtx<T>> conv_block_fwd(const BasicTensor<T>& x, ConvBlockParams<T>& p, Mode mode) {
  ConvBlockCtx<T> ctx;
  auto [c1, cc1] = conv2d_fwd(x, p.conv1);
  ctx.conv1 = std::move(cc1);
  if (p.bn1) {
    auto [a1, b1] = batchnorm_fwd(c1, *p.bn1, mode);
    ctx.bn1 = std::move(b1);
    c1 = std::move(a1);
  }
  auto [r1, rc1] = relu_fwd(c1);
  ctx.relu1 = std::move(rc1);
  auto [c2, cc2] = conv2d_fwd(r1, p.conv2);
  ctx.conv2 = std::move(cc2);
  if (p.bn2) {
    auto [a2, b2] = batchnorm_fwd(c2, *p.bn2, mode);
    ctx.bn2 = std::move(b2);
    c2 = std::move(a2);
  }
  auto [r2, rc2] = relu_fwd(c2);
  ctx.relu2 = std::move(rc2);
  return {std::move(r2), std::move(ctx)};
}

template <typename T>
std::pair<BasicTensor<T>, ConvBlockParams<T>> conv_block_bwd(ConvBlockCtx<T>& ctx, const BasicTensor<T>& dy) {
  ConvBlockParams<T> g;
  auto d = relu_bwd(ctx.relu2, dy);
  if (ctx.bn2) {
    auto gb = batchnorm_bwd(*ctx.bn2, d);
    g.bn2 = BnParams<T>{std::move(gb.dgamma), std::move(gb.dbeta), {}, {}};
    d = std::move(gb.dx);
  }
  auto gc2 = conv2d_bwd(ctx.conv2, d);
  g.conv2 = {std::move(gc2.dw), std::move(gc2.db), 1, Padding::same};
  d = relu_bwd(ctx.relu1, gc2.dx);
  if (ctx.bn1) {
    auto gb = batchnorm_bwd(*ctx.bn1, d);
    g.bn1 = BnParams<T>{std::move(gb.dgamma), std::move(gb.dbeta), {}, {}};
    d = std::move(gb.dx);
  }
  auto gc1 = conv2d_bwd(ctx.conv1, d);
  g.conv1 = {std::move(gc1.dw), std::move(gc1.db), 1, Padding::same};
  return {std::move(gc1.dx), std::move(g)};
}

template <typename T, typename F>
void visit_params(ConvBlockParams<T>& b, std::string_view prefix, F&& f) {
  visit_params(b.conv1, join_name(prefix, "conv1"), f);
  if (b.bn1) visit_params(*b.bn1, join_name(prefix, "bn1"), f);
  visit_params(b.conv2, join_name(prefix, "conv2"), f);
  if (b.bn2) visit_params(*b.bn2, join_name(prefix, "bn2"), f);
}

template <typename T, typename F>
void visit_buffers(ConvBlockParams<T>& b, std::string_view prefix, F&& f) {
  if (b.bn1) visit_buffers(*b.bn1, join_name(prefix, "bn1"), f);
  if (b.bn2) visit_buffers(*b.bn2, join_name(prefix, "bn2"), f);
}

// ---------------------------------------------------------------------------
// A network stage body is either a residual unit or a plain conv pair.

template <typename T>
using Block = std::variant<ResidualUnitParams<T>, ConvBlockParams<T>>;

template <typename T>
using BlockCtx = std::variant<ResidualUnitCtx<T>, ConvBlockCtx<T>>;

template <typename T>
std::pair<BasicTensor<T>, BlockCtx<T>> block_fwd(const BasicTensor<T>& x, Block<T>& b, Mode mode) {
  if (auto* u = std::get_if<ResidualUnitParams<T>>(&b)) {
    auto [y, ctx] = residual_unit_fwd(x, *u, mode);
    return {std::move(y), BlockCtx<T>(std::move(ctx))};
  }
  auto [y, ctx] = conv_block_fwd(x, std::get<ConvBlockParams<T>>(b), mode);
  return {std::move(y), BlockCtx<T>(std::move(ctx))};
}

template <typename T>
std::pair<BasicTensor<T>, Block<T>> block_bwd(BlockCtx<T>& ctx, const BasicTensor<T>& dy) {
  if (auto* u = std::get_if<ResidualUnitCtx<T>>(&ctx)) {
    auto g = residual_unit_bwd(*u, dy);
    return {std::move(g.dx), Block<T>(std::move(g.dparams))};
  }
  auto [dx, g] = conv_block_bwd(std::get<ConvBlockCtx<T>>(ctx), dy);
  return {std::move(dx), Block<T>(std::move(g))};
}

template <typename T, typename F>
void visit_params(Block<T>& b, std::string_view prefix, F&& f) {
  std::visit([&](auto& inner) { visit_params(inner, prefix, f); }, b);
}

template <typename T, typename F>
void visit_buffers(Block<T>& b, std::string_view prefix, F&& f) {
  std::visit([&](auto& inner) { visit_buffers(inner, prefix, f); }, b);
}

}  // namespace runet
