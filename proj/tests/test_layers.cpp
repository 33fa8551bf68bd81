#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "runet/gradcheck.hpp"
#include "runet/layers.hpp"
#include "support/oracles.hpp"

using namespace runet;
using D = BasicTensor<double>;

namespace {

constexpr double kTol = 1e-3;
constexpr int kSeeds = 20;

double max_abs(const D& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

D randn(Shape s, Rng& rng, double sd = 1.0) { return D::randn(std::move(s), rng, sd); }

// Values at least `gap` away from zero so kinks are not straddled.
D away_from_zero(Shape s, Rng& rng, double gap = 1e-3) {
  D x = randn(std::move(s), rng);
  for (auto& v : x.data())
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  return x;
}

// Max relative error of the analytic gradient of L = <r, f(p)> w.r.t. p.
double check(const std::function<D(const D&)>& f, const D& p, const D& r, const D& analytic) {
  return finite_diff_check([&](const D& q) { return dot(r, f(q)); }, p, analytic);
}

}  // namespace

// ---------------------------------------------------------------- conv2d

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(0);
  auto x = Tensor::randn({2, 3, 5, 6}, rng);
  ConvParams<float> p{Tensor({3, 3, 3, 3}), Tensor({3}), 1, Padding::same};
  for (std::size_t c = 0; c < 3; ++c) p.weights.at(c, c, 1, 1) = 1.0f;
  EXPECT_EQ(conv2d(x, p), x);
}

TEST(Conv2d, ZeroWeightsGiveBias) {
  Rng rng(1);
  auto x = Tensor::randn({1, 2, 4, 4}, rng);
  ConvParams<float> p{Tensor({3, 2, 3, 3}), Tensor({3}, std::vector<float>{1.5f, -2.0f, 0.25f}), 1, Padding::same};
  auto y = conv2d(x, p);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y.plane(0, c)[i], p.bias[c]);
}

TEST(Conv2d, MatchesNestedLoopsExactly) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto x = Tensor::randn({1, 1, 4, 4}, rng);
    auto p = make_conv<float>(1, 1, 3, rng);
    p.bias[0] = 0.3f;
    auto y = conv2d(x, p);
    // Same summation order as documented: bias, then (ci, kh, kw).
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        float acc = p.bias[0];
        for (std::size_t kr = 0; kr < 3; ++kr)
          for (std::size_t kc = 0; kc < 3; ++kc) {
            const long sr = static_cast<long>(r + kr) - 1, sc = static_cast<long>(c + kc) - 1;
            if (sr < 0 || sr >= 4 || sc < 0 || sc >= 4) continue;
            acc += p.weights.at(0, 0, kr, kc) * x.at(0, 0, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
          }
        EXPECT_EQ(y.at(0, 0, r, c), acc) << "seed " << seed << " at " << r << "," << c;
      }
  }
}

TEST(Conv2d, MatchesDoubleOracleOnLargerShapes) {
  struct Case {
    Shape x;
    std::size_t cout, k, stride;
  };
  for (const auto& cs : {Case{{2, 3, 9, 7}, 4, 3, 1}, Case{{1, 5, 8, 8}, 3, 1, 1}, Case{{2, 2, 9, 10}, 3, 3, 2},
                         Case{{1, 3, 40, 33}, 6, 3, 1}}) {
    Rng rng(7);
    auto x = randn(cs.x, rng);
    auto p = make_conv<double>(cs.x[1], cs.cout, cs.k, rng, cs.stride);
    p.bias = randn({cs.cout}, rng);
    auto want = oracle::conv2d(x, p.weights, p.bias, cs.stride);
    auto got = conv2d(x, p);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, SamePaddingPreservesSpatialSize) {
  Rng rng(2);
  for (std::size_t k : {1, 3}) {
    auto p = make_conv<float>(2, 3, k, rng);
    EXPECT_EQ(conv2d(Tensor({1, 2, 7, 5}), p).shape(), (Shape{1, 3, 7, 5}));
  }
}

TEST(Conv2d, ChannelMismatchThrows) {
  Rng rng(3);
  auto p = make_conv<float>(2, 3, 3, rng);
  EXPECT_THROW(conv2d(Tensor({1, 4, 5, 5}), p), ShapeError);
}

TEST(Conv2d, ContextIsSingleUse) {
  Rng rng(4);
  auto p = make_conv<float>(1, 1, 3, rng);
  auto [y, ctx] = conv2d_fwd(Tensor({1, 1, 4, 4}, 1.0f), p);
  conv2d_bwd(ctx, y);
  EXPECT_THROW(conv2d_bwd(ctx, y), std::logic_error);
}

TEST(GradientSuite, Conv2d) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    auto x = randn({2, 3, 8, 8}, rng);
    auto p = make_conv<double>(3, 4, 3, rng);
    p.bias = randn({4}, rng);
    auto r = randn({2, 4, 8, 8}, rng);
    auto [y, ctx] = conv2d_fwd(x, p);
    auto g = conv2d_bwd(ctx, r);
    EXPECT_LT(check([&](const D& q) { return conv2d(q, p); }, x, r, g.dx), kTol);
    EXPECT_LT(check([&](const D& w) { return conv2d(x, ConvParams<double>{w, p.bias, 1, Padding::same}); },
                    p.weights, r, g.dw),
              kTol);
    EXPECT_LT(check([&](const D& b) { return conv2d(x, ConvParams<double>{p.weights, b, 1, Padding::same}); },
                    p.bias, r, g.db),
              kTol);
  }
}

// --------------------------------------------------------------- maxpool

TEST(MaxPool, TwoByTwo) {
  Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto [y, ctx] = maxpool2x2_fwd(x);
  EXPECT_EQ(y.vec(), (std::vector<float>{4}));
}

TEST(MaxPool, TiesRouteToFirstElement) {
  Tensor x({1, 1, 4, 4}, 3.0f);
  auto [y, ctx] = maxpool2x2_fwd(x);
  EXPECT_EQ(y, Tensor({1, 1, 2, 2}, 3.0f));
  auto dx = maxpool2x2_bwd(ctx, Tensor({1, 1, 2, 2}, 1.0f));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(dx.at(0, 0, r, c), (r % 2 == 0 && c % 2 == 0) ? 1.0f : 0.0f);
}

TEST(MaxPool, OddSizeThrows) { EXPECT_THROW(maxpool2x2_fwd(Tensor({1, 1, 3, 4})), ShapeError); }

TEST(GradientSuite, MaxPool) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    auto x = randn({2, 3, 8, 8}, rng);
    auto r = randn({2, 3, 4, 4}, rng);
    auto [y, ctx] = maxpool2x2_fwd(x);
    auto dx = maxpool2x2_bwd(ctx, r);
    EXPECT_LT(check([](const D& q) { return maxpool2x2_fwd(q).first; }, x, r, dx), kTol);
  }
}

// ---------------------------------------------------------------- upconv

TEST(Upconv, DoublesSpatialSize) {
  Rng rng(0);
  for (std::size_t k : {2, 3}) {
    auto p = make_upconv<float>(1, 4, k, rng);
    EXPECT_EQ(upconv(Tensor({1, 1, 2, 2}), p).shape(), (Shape{1, 4, 4, 4}));
  }
}

TEST(Upconv, ImpulseResponse) {
  ConvParams<float> p{Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}), 2, Padding::same};
  Tensor x({1, 1, 2, 2});
  x.at(0, 0, 0, 0) = 1.0f;
  auto y = upconv(x, p);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y.at(0, 0, r, c), (r < 2 && c < 2) ? 1.0f : 0.0f);
}

TEST(Upconv, IsAdjointOfStridedConv) {
  for (std::size_t k : {2, 3}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      auto w = randn({3, 2, k, k}, rng);  // (Cin_up, Cout_up, K, K)
      auto z = randn({2, 2, 10, 12}, rng);
      auto y = randn({2, 3, 5, 6}, rng);
      ConvParams<double> down{w, D({3}), 2, Padding::same};
      ConvParams<double> up{w, D({2}), 2, Padding::same};
      const double lhs = dot(conv2d(z, down), y);
      const double rhs = dot(z, upconv(y, up));
      EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs))) << "k=" << k;
    }
  }
}

TEST(Upconv, MatchesScatterOracle) {
  for (std::size_t k : {2, 3}) {
    Rng rng(11);
    auto x = randn({2, 3, 5, 4}, rng);
    auto p = make_upconv<double>(3, 2, k, rng);
    p.bias = randn({2}, rng);
    auto want = oracle::upconv(x, p.weights, p.bias);
    auto got = upconv(x, p);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Upconv, RejectsWrongKernelOrStride) {
  Rng rng(1);
  ConvParams<float> p = make_upconv<float>(2, 2, 2, rng);
  p.stride = 1;
  EXPECT_THROW(upconv(Tensor({1, 2, 2, 2}), p), std::invalid_argument);
  ConvParams<float> q{Tensor({2, 2, 4, 4}), Tensor({2}), 2, Padding::same};
  EXPECT_THROW(upconv(Tensor({1, 2, 2, 2}), q), std::invalid_argument);
}

TEST(Upconv, RestoresPooledSize) {
  Rng rng(2);
  auto x = Tensor::randn({1, 4, 8, 6}, rng);
  auto [pooled, ctx] = maxpool2x2_fwd(x);
  auto p = make_upconv<float>(4, 4, 3, rng);
  auto y = upconv(pooled, p);
  EXPECT_EQ(y.dim(2), x.dim(2));
  EXPECT_EQ(y.dim(3), x.dim(3));
}

TEST(GradientSuite, Upconv) {
  for (std::size_t k : {2, 3}) {
    for (int seed = 0; seed < kSeeds; ++seed) {
      Rng rng(static_cast<std::uint64_t>(seed));
      auto x = randn({2, 3, 8, 8}, rng);
      auto p = make_upconv<double>(3, 2, k, rng);
      p.bias = randn({2}, rng);
      auto r = randn({2, 2, 16, 16}, rng);
      auto [y, ctx] = upconv_fwd(x, p);
      auto g = upconv_bwd(ctx, r);
      EXPECT_LT(check([&](const D& q) { return upconv(q, p); }, x, r, g.dx), kTol);
      EXPECT_LT(check([&](const D& w) { return upconv(x, ConvParams<double>{w, p.bias, 2, Padding::same}); },
                      p.weights, r, g.dw),
                kTol);
      EXPECT_LT(check([&](const D& b) { return upconv(x, ConvParams<double>{p.weights, b, 2, Padding::same}); },
                      p.bias, r, g.db),
                kTol);
    }
  }
}

// ----------------------------------------------------------- activations

TEST(Activation, ReluValues) {
  Tensor x({3}, std::vector<float>{-1, 2, 0});
  EXPECT_EQ(relu(x).vec(), (std::vector<float>{0, 2, 0}));
  auto [y, ctx] = relu_fwd(x);
  EXPECT_EQ(relu_bwd(ctx, Tensor({3}, 1.0f)).vec(), (std::vector<float>{0, 1, 0}));
}

TEST(Activation, SigmoidAtZero) { EXPECT_EQ(sigmoid(Tensor({1}, 0.0f))[0], 0.5f); }

TEST(GradientSuite, Relu) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    auto x = away_from_zero({2, 3, 8, 8}, rng);
    auto r = randn({2, 3, 8, 8}, rng);
    auto [y, ctx] = relu_fwd(x);
    EXPECT_LT(check([](const D& q) { return relu(q); }, x, r, relu_bwd(ctx, r)), kTol);
  }
}

TEST(GradientSuite, Sigmoid) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    auto x = randn({2, 3, 8, 8}, rng, 2.0);
    auto r = randn({2, 3, 8, 8}, rng);
    auto [y, ctx] = sigmoid_fwd(x);
    EXPECT_LT(check([](const D& q) { return sigmoid(q); }, x, r, sigmoid_bwd(ctx, r)), kTol);
  }
}

// ------------------------------------------------------------- batchnorm

TEST(BatchNorm, TrainModeNormalizes) {
  Rng rng(0);
  auto x = Tensor::randn({4, 3, 6, 6}, rng, 3.0, 2.0);
  auto p = make_bn<float>(3);
  auto [y, ctx] = batchnorm_fwd(x, p, Mode::train);
  auto mean = reduce(ReduceOp::mean, y, {0, 2, 3});
  auto sq = reduce(ReduceOp::mean, mul(y, y), {0, 2, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(mean[c], 0.0, 1e-4);
    EXPECT_NEAR(sq[c] - mean[c] * mean[c], 1.0, 1e-4);
  }
}

TEST(BatchNorm, ConstantInputGivesBeta) {
  auto p = make_bn<float>(2);
  p.beta.fill(5.0f);
  auto [y, ctx] = batchnorm_fwd(Tensor({2, 2, 3, 3}, 7.0f), p, Mode::train);
  for (float v : y.data()) EXPECT_NEAR(v, 5.0f, 1e-6);
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  auto p = make_bn<double>(1, 0.9);
  D x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  batchnorm_fwd(x, p, Mode::train);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(p.running_var[0], 0.9 * 1.0 + 0.1 * 1.25, 1e-15);
  EXPECT_GE(p.running_var[0], 0.0);
}

TEST(BatchNorm, InferModeIsDeterministicAffine) {
  Rng rng(1);
  auto p = make_bn<float>(3);
  p.running_mean = Tensor::randn({3}, rng);
  p.running_var = Tensor::uniform({3}, rng, 0.5, 2.0);
  p.gamma = Tensor::randn({3}, rng);
  auto x = Tensor::randn({2, 3, 4, 4}, rng);
  auto a = batchnorm_fwd(x, p, Mode::infer).first;
  auto b = batchnorm_fwd(x, p, Mode::infer).first;
  EXPECT_EQ(a, b);
  const double want = p.gamma[1] * (x.at(1, 1, 2, 3) - p.running_mean[1]) / std::sqrt(p.running_var[1] + 1e-5);
  EXPECT_NEAR(a.at(1, 1, 2, 3), want, 1e-5);
}

TEST(BatchNorm, ChannelMismatchThrows) {
  auto p = make_bn<float>(2);
  EXPECT_THROW(batchnorm_fwd(Tensor({1, 3, 2, 2}), p, Mode::train), ShapeError);
}

TEST(GradientSuite, BatchNorm) {
  for (Mode mode : {Mode::train, Mode::infer}) {
    for (int seed = 0; seed < kSeeds; ++seed) {
      Rng rng(static_cast<std::uint64_t>(seed));
      auto x = randn({2, 3, 8, 8}, rng, 2.0);
      auto p = make_bn<double>(3);
      p.gamma = randn({3}, rng);
      p.beta = randn({3}, rng);
      p.running_mean = randn({3}, rng);
      p.running_var = D::uniform({3}, rng, 0.5, 2.0);
      auto r = randn({2, 3, 8, 8}, rng);
      auto run = [&](const D& q, BnParams<double> bp) { return batchnorm_fwd(q, bp, mode).first; };
      auto fwd_p = p;
      auto [y, ctx] = batchnorm_fwd(x, fwd_p, mode);
      auto g = batchnorm_bwd(ctx, r);
      EXPECT_LT(check([&](const D& q) { return run(q, p); }, x, r, g.dx), kTol);
      EXPECT_LT(check([&](const D& gm) { auto bp = p; bp.gamma = gm; return run(x, bp); }, p.gamma, r, g.dgamma),
                kTol);
      EXPECT_LT(check([&](const D& bt) { auto bp = p; bp.beta = bt; return run(x, bp); }, p.beta, r, g.dbeta),
                kTol);
    }
  }
}

// --------------------------------------------------------------- dropout

TEST(Dropout, RateZeroIsIdentity) {
  Rng rng(0), d(1);
  auto x = Tensor::randn({2, 3, 4, 4}, rng);
  EXPECT_EQ(dropout_fwd(x, 0.0, Mode::train, d).first, x);
}

TEST(Dropout, InferModeIsIdentity) {
  Rng rng(0), d(1);
  auto x = Tensor::randn({2, 3, 4, 4}, rng);
  EXPECT_EQ(dropout_fwd(x, 0.7, Mode::infer, d).first, x);
  EXPECT_EQ(d.state(), Rng(1).state());
}

TEST(Dropout, ZeroFractionAndSurvivorScale) {
  Rng rng(0), d(5);
  auto x = Tensor::uniform({100000}, rng, 0.5, 1.5);
  auto [y, ctx] = dropout_fwd(x, 0.2, Mode::train, d);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (y[i] == 0.0f) {
      ++zeros;
    } else {
      EXPECT_FLOAT_EQ(y[i], x[i] / 0.8f);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.2, 0.01);
}

TEST(Dropout, ExpectationMatchesInput) {
  Rng rng(3), d(4);
  auto x = Tensor::uniform({16}, rng, 0.5, 2.0);
  std::vector<double> acc(16, 0.0);
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    auto y = dropout_fwd(x, 0.2, Mode::train, d).first;
    for (std::size_t i = 0; i < 16; ++i) acc[i] += y[i];
  }
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(acc[i] / draws, x[i], 0.01 * x[i]);
}

TEST(Dropout, RateOneThrows) {
  Rng d(0);
  EXPECT_THROW(dropout_fwd(Tensor({2}), 1.0, Mode::train, d), std::invalid_argument);
}

TEST(GradientSuite, DropoutWithFixedMask) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    auto x = randn({2, 3, 8, 8}, rng);
    auto r = randn({2, 3, 8, 8}, rng);
    const std::uint64_t mask_seed = 1000 + static_cast<std::uint64_t>(seed);
    auto f = [&](const D& q) {
      Rng d(mask_seed);
      return dropout_fwd(q, 0.2, Mode::train, d).first;
    };
    Rng d(mask_seed);
    auto [y, ctx] = dropout_fwd(x, 0.2, Mode::train, d);
    EXPECT_LT(check(f, x, r, dropout_bwd(ctx, r)), kTol);
  }
}

// --------------------------------------------------------- residual unit

TEST(ResidualUnit, ZeroBranchIsExactIdentity) {
  for (std::size_t width : {8, 32}) {
    Rng rng(width);
    auto u = make_residual_unit<float>(width, width, rng);
    u.conv1.weights.fill(0.0f);
    u.conv2.weights.fill(0.0f);
    auto x = Tensor::randn({2, width, 8, 8}, rng);
    for (Mode mode : {Mode::train, Mode::infer}) {
      auto [y, ctx] = residual_unit_fwd(x, u, mode);
      EXPECT_EQ(y, x) << "width " << width;
    }
  }
}

TEST(ResidualUnit, MatchesComposedOps) {
  for (std::size_t cout : {3, 5}) {
    Rng rng(cout);
    auto u = make_residual_unit<float>(3, cout, rng);
    u.bn1.gamma = Tensor::randn({3}, rng);
    u.bn2.beta = Tensor::randn({cout}, rng);
    auto x = Tensor::randn({2, 3, 8, 8}, rng);
    auto manual_u = u;
    auto [y, ctx] = residual_unit_fwd(x, u, Mode::train);

    auto a1 = batchnorm_fwd(x, manual_u.bn1, Mode::train).first;
    auto c1 = conv2d(relu(a1), manual_u.conv1);
    auto a2 = batchnorm_fwd(c1, manual_u.bn2, Mode::train).first;
    auto f = conv2d(relu(a2), manual_u.conv2);
    auto h = manual_u.shortcut ? conv2d(x, *manual_u.shortcut) : x;
    EXPECT_EQ(y, add(h, f));
    EXPECT_EQ(u.bn1.running_mean, manual_u.bn1.running_mean);
    EXPECT_EQ(u.shortcut.has_value(), cout != 3);
  }
}

TEST(GradientSuite, ResidualUnit) {
  for (std::size_t cout : {3, 4}) {
    for (int seed = 0; seed < kSeeds; ++seed) {
      Rng rng(static_cast<std::uint64_t>(seed));
      auto x = randn({2, 3, 8, 8}, rng);
      auto u = make_residual_unit<double>(3, cout, rng);
      u.conv1.bias = randn({cout}, rng, 0.1);
      u.bn1.gamma = D::uniform({3}, rng, 0.5, 1.5);
      u.bn2.beta = randn({cout}, rng, 0.1);
      auto r = randn({2, cout, 8, 8}, rng);
      auto run = [&](const D& q, ResidualUnitParams<double> p) { return residual_unit_fwd(q, p, Mode::train).first; };
      auto fwd_u = u;
      auto [y, ctx] = residual_unit_fwd(x, fwd_u, Mode::train);
      auto g = residual_unit_bwd(ctx, r);
      EXPECT_LT(check([&](const D& q) { return run(q, u); }, x, r, g.dx), kTol) << "seed " << seed;

      // Every learnable tensor of the unit.
      std::vector<std::pair<std::string, D*>> params, grads;
      visit_params(u, "u", [&](const std::string& n, D& t) { params.emplace_back(n, &t); });
      visit_params(g.dparams, "u", [&](const std::string& n, D& t) { grads.emplace_back(n, &t); });
      ASSERT_EQ(params.size(), grads.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        ASSERT_EQ(params[i].first, grads[i].first);
        auto f = [&](const D& v) {
          auto p = u;
          std::size_t j = 0;
          visit_params(p, "u", [&](const std::string&, D& t) {
            if (j++ == i) t = v;
          });
          return run(x, p);
        };
        if (params[i].first == "u.conv1.bias") {
          // Train-mode BN follows, so the true gradient is exactly zero.
          auto rep = finite_diff_report([&](const D& v) { return dot(r, f(v)); }, *params[i].second, *grads[i].second);
          EXPECT_LT(std::abs(rep.analytic - rep.numeric), 1e-8) << "seed " << seed;
          EXPECT_LT(max_abs(*grads[i].second), 1e-10) << "seed " << seed;
          continue;
        }
        EXPECT_LT(check(f, *params[i].second, r, *grads[i].second), kTol) << params[i].first << " seed " << seed;
      }
    }
  }
}
