// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "runet/cli/commands.hpp"
#include "runet/gradcheck.hpp"
#include "runet/layers.hpp"
#include "support/oracles.hpp"

using namespace runet;
namespace fs = std::filesystem;
using D = BasicTensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ------------------------------------------------------------- gradients

constexpr double kTol = 1e-3;
constexpr int kSeeds = 20;

D randn(Shape s, Rng& rng, double sd = 1.0) { return D::randn(std::move(s), rng, sd); }

double grad_err(const std::function<D(const D&)>& f, const D& p, const D& r, const D& analytic) {
  return finite_diff_check([&](const D& q) { return dot(r, f(q)); }, p, analytic);
}

void gradient_suite(Outcome& out) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto note = [&](const std::string& name, double err) {
    ++checks;
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    if (!(err < kTol)) out.require(false, name + " rel err " + fmt("%.3g", err));
  };

  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const Shape s{2, 3, 8, 8};

    auto x = randn(s, rng);
    auto cp = make_conv<double>(3, 4, 3, rng);
    cp.bias = randn({4}, rng);
    auto r4 = randn({2, 4, 8, 8}, rng);
    {
      auto fwd = conv2d_fwd(x, cp);
      auto g = conv2d_bwd(fwd.second, r4);
      note("conv2d.dx", grad_err([&](const D& q) { return conv2d(q, cp); }, x, r4, g.dx));
      note("conv2d.dw", grad_err([&](const D& w) { return conv2d(x, ConvParams<double>{w, cp.bias, 1, Padding::same}); },
                                 cp.weights, r4, g.dw));
      note("conv2d.db", grad_err([&](const D& b) { return conv2d(x, ConvParams<double>{cp.weights, b, 1, Padding::same}); },
                                 cp.bias, r4, g.db));
    }

    auto r = randn(s, rng);
    {
      auto rp = randn({2, 3, 4, 4}, rng);
      auto fwd = maxpool2x2_fwd(x);
      note("maxpool.dx", grad_err([](const D& q) { return maxpool2x2_fwd(q).first; }, x, rp, maxpool2x2_bwd(fwd.second, rp)));
    }

    for (std::size_t k : {2, 3}) {
      auto up = make_upconv<double>(3, 2, k, rng);
      up.bias = randn({2}, rng);
      auto ru = randn({2, 2, 16, 16}, rng);
      auto fwd = upconv_fwd(x, up);
      auto g = upconv_bwd(fwd.second, ru);
      const std::string n = "upconv" + std::to_string(k);
      note(n + ".dx", grad_err([&](const D& q) { return upconv(q, up); }, x, ru, g.dx));
      note(n + ".dw", grad_err([&](const D& w) { return upconv(x, ConvParams<double>{w, up.bias, 2, Padding::same}); },
                               up.weights, ru, g.dw));
      note(n + ".db", grad_err([&](const D& b) { return upconv(x, ConvParams<double>{up.weights, b, 2, Padding::same}); },
                               up.bias, ru, g.db));
    }

    {
      D xr = x;
      for (auto& v : xr.data())
        if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
      auto fwd = relu_fwd(xr);
      note("relu.dx", grad_err([](const D& q) { return relu(q); }, xr, r, relu_bwd(fwd.second, r)));
      auto sf = sigmoid_fwd(x);
      note("sigmoid.dx", grad_err([](const D& q) { return sigmoid(q); }, x, r, sigmoid_bwd(sf.second, r)));
    }

    for (Mode mode : {Mode::train, Mode::infer}) {
      auto bp = make_bn<double>(3);
      bp.gamma = randn({3}, rng);
      bp.beta = randn({3}, rng);
      bp.running_mean = randn({3}, rng);
      bp.running_var = D::uniform({3}, rng, 0.5, 2.0);
      auto run = [&](const D& q, BnParams<double> p) { return batchnorm_fwd(q, p, mode).first; };
      auto fp = bp;
      auto fwd = batchnorm_fwd(x, fp, mode);
      auto g = batchnorm_bwd(fwd.second, r);
      const std::string n = mode == Mode::train ? "batchnorm.train" : "batchnorm.infer";
      note(n + ".dx", grad_err([&](const D& q) { return run(q, bp); }, x, r, g.dx));
      note(n + ".dgamma", grad_err([&](const D& v) { auto p = bp; p.gamma = v; return run(x, p); }, bp.gamma, r, g.dgamma));
      note(n + ".dbeta", grad_err([&](const D& v) { auto p = bp; p.beta = v; return run(x, p); }, bp.beta, r, g.dbeta));
    }

    {
      // Fixed mask: the gradient of one draw.
      const std::uint64_t mask_seed = 1000 + static_cast<std::uint64_t>(seed);
      Rng d(mask_seed);
      auto fwd = dropout_fwd(x, 0.2, Mode::train, d);
      note("dropout.dx", grad_err([&](const D& q) {
             Rng dd(mask_seed);
             return dropout_fwd(q, 0.2, Mode::train, dd).first;
           },
           x, r, dropout_bwd(fwd.second, r)));
    }

    for (std::size_t cout : {3, 4}) {
      auto u = make_residual_unit<double>(3, cout, rng);
      u.conv1.bias = randn({cout}, rng, 0.1);
      u.bn1.gamma = D::uniform({3}, rng, 0.5, 1.5);
      u.bn2.beta = randn({cout}, rng, 0.1);
      auto ru = randn({2, cout, 8, 8}, rng);
      auto run = [&](const D& q, ResidualUnitParams<double> p) { return residual_unit_fwd(q, p, Mode::train).first; };
      auto fu = u;
      auto fwd = residual_unit_fwd(x, fu, Mode::train);
      auto g = residual_unit_bwd(fwd.second, ru);
      const std::string n = "residual" + std::to_string(cout);
      note(n + ".dx", grad_err([&](const D& q) { return run(q, u); }, x, ru, g.dx));
      std::vector<std::pair<std::string, D*>> ps, gs;
      visit_params(u, n, [&](const std::string& name, D& t) { ps.emplace_back(name, &t); });
      visit_params(g.dparams, n, [&](const std::string& name, D& t) { gs.emplace_back(name, &t); });
      for (std::size_t i = 0; i < ps.size(); ++i) {
        auto f = [&](const D& v) {
          auto p = u;
          std::size_t j = 0;
          visit_params(p, "", [&](const std::string&, D& t) {
            if (j++ == i) t = v;
          });
          return run(x, p);
        };
        if (ps[i].first == n + ".conv1.bias") {
          // Feeds train-mode BN: the true gradient is exactly zero.
          auto rep = finite_diff_report([&](const D& v) { return dot(ru, f(v)); }, *ps[i].second, *gs[i].second);
          double m = 0.0;
          for (double v : gs[i].second->data()) m = std::max(m, std::abs(v));
          out.require(std::abs(rep.analytic - rep.numeric) < 1e-8 && m < 1e-10, ps[i].first + " not zero");
          ++checks;
          continue;
        }
        note(ps[i].first, grad_err(f, *ps[i].second, ru, *gs[i].second));
      }
    }

    for (const Shape& ds : {Shape{2, 1, 8, 8}, Shape{2, 3, 8, 8}}) {
      auto p = D::uniform(ds, rng, 0.01, 0.99);
      D t(ds);
      for (auto& v : t.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
      for (double smooth : {1.0, 0.0}) {
        auto l = dice_loss(p, t, smooth);
        const double err = finite_diff_check([&](const D& q) { return dice_loss(q, t, smooth).loss; }, p, l.grad);
        note("dice_loss", err);
      }
    }
  }

  {
    // Dropout in expectation: the mean over masks of the forward output and
    // of the backward map both equal the identity.
    Rng rng(77), d(78);
    auto x = D::uniform({64}, rng, 0.5, 2.0);
    D ones({64}, 1.0);
    std::vector<double> fy(64, 0.0), gy(64, 0.0);
    const int draws = 200000;
    for (int k = 0; k < draws; ++k) {
      auto fwd = dropout_fwd(x, 0.2, Mode::train, d);
      auto g = dropout_bwd(fwd.second, ones);
      for (std::size_t i = 0; i < 64; ++i) {
        fy[i] += fwd.first[i];
        gy[i] += g[i];
      }
    }
    double worst_mean = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      worst_mean = std::max(worst_mean, std::abs(fy[i] / draws - x[i]) / x[i]);
      worst_mean = std::max(worst_mean, std::abs(gy[i] / draws - 1.0));
    }
    // Standard error of one mean is sqrt(0.25/200000) ~ 1.1e-3; 6 sigma.
    out.require(worst_mean < 7e-3, "dropout expectation off by " + fmt("%.3g", worst_mean));
    ++checks;
  }

  const double secs = seconds_since(t0);
  out.require(secs < 120.0, "runtime " + fmt("%.1f", secs) + " s >= 120 s");
  out.detail << (out.pass ? "" : "; ") << checks << " checks, worst rel err " << fmt("%.2e", worst) << " ("
             << worst_name << "), " << fmt("%.1f", secs) << " s";
}

// ------------------------------------------------------ residual identity

void residual_identity(Outcome& out) {
  for (std::size_t width : {8, 32}) {
    Rng rng(width);
    auto u = make_residual_unit<float>(width, width, rng);
    u.conv1.weights.fill(0.0f);
    u.conv1.bias.fill(0.0f);
    u.conv2.weights.fill(0.0f);
    u.conv2.bias.fill(0.0f);
    auto x = Tensor::randn({2, width, 8, 8}, rng);
    for (Mode mode : {Mode::train, Mode::infer}) {
      auto y = residual_unit_fwd(x, u, mode).first;
      out.require(y == x, "width " + std::to_string(width) + " not identity");
    }
  }
  out.detail << (out.pass ? "" : "; ") << "widths 8, 32, train and infer, exact";
}

// ------------------------------------------------------------------ Adam

std::vector<double> library_adam_quadratic(double theta0, const AdamHyper& hyper, int steps) {
  D theta({1}, theta0);
  std::vector<std::pair<std::string, D*>> params{{"theta", &theta}};
  AdamState<double> state;
  std::vector<double> traj{theta0};
  for (int t = 0; t < steps; ++t) {
    Registry<double> grads{{"theta", D({1}, 2.0 * theta[0])}};
    adam_step(params, grads, state, hyper);
    traj.push_back(theta[0]);
  }
  return traj;
}

void adam_oracle(Outcome& out) {
  AdamHyper h;
  h.eta = 0.1;
  const auto got = library_adam_quadratic(1.0, h, 100);
  const auto want = oracle::adam_quadratic(1.0, 0.1, 100);
  double err = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(got[i] - want[i]));
  out.require(got.size() == 101 && err < 1e-6, "max deviation " + fmt("%.3g", err));
  h.literal_first_moment_in_v = true;
  const auto literal = library_adam_quadratic(1.0, h, 100);
  double diff = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) diff = std::max(diff, std::abs(literal[i] - want[i]));
  out.require(diff > 1e-3, "literal variant indistinguishable");
  out.detail << (out.pass ? "" : "; ") << "100 steps, max deviation " << fmt("%.2e", err)
             << "; literal variant differs by up to " << fmt("%.3g", diff);
}

// ------------------------------------------------------------------ dice

void dice_oracle(Outcome& out) {
  Rng rng(0);
  int exact = 0;
  for (int t = 0; t < 100; ++t) {
    Tensor p({1, 1, 16, 16}), q({1, 1, 16, 16});
    std::vector<bool> a(256), b(256);
    for (std::size_t i = 0; i < 256; ++i) {
      a[i] = rng.uniform() < 0.4;
      b[i] = rng.uniform() < 0.4;
      p[i] = a[i] ? 1.0f : 0.0f;
      q[i] = b[i] ? 1.0f : 0.0f;
    }
    if (soft_dice(p, q, 0.0) == oracle::set_dice(a, b)) ++exact;
  }
  out.require(exact == 100, std::to_string(100 - exact) + " of 100 pairs differ");
  Tensor p({1, 1, 1, 3}, std::vector<float>{1, 1, 0});
  Tensor t({1, 1, 1, 3}, std::vector<float>{0, 1, 1});
  const double hand = soft_dice(p, t, 0.0);
  out.require(hand == 0.5, "hand case gives " + fmt("%.17g", hand));
  out.detail << (out.pass ? "" : "; ") << exact << "/100 pairs exact; {a,b} vs {b,c} = " << fmt("%g", hand);
}

// ------------------------------------------------------------ shape law

void shape_law(Outcome& out) {
  for (ArchKind kind : {ArchKind::unet, ArchKind::run, ArchKind::dual_path}) {
    ArchSpec spec;
    spec.kind = kind;
    spec.base_channels = 8;
    spec.input_h = spec.input_w = 64;
    Rng rng(1), data(2), drop(3);
    Network<float> net(spec, rng);
    const auto x = Tensor::randn({2, 1, 64, 64}, data);
    const auto y = net.forward(x, Mode::train, &drop);
    const std::string name(to_string(kind));
    out.require(y.shape() == Shape({2, 1, 64, 64}), name + " output " + to_string(y.shape()));
    bool open = true;
    for (float v : y.data()) open = open && v > 0.0f && v < 1.0f;
    out.require(open, name + " output leaves (0,1)");
    out.require(net.forward(x, Mode::infer).shape() == Shape({2, 1, 64, 64}), name + " infer shape");

    // Encoder alone: the last stage is the bottleneck.
    auto parts = net.parts();
    Tensor h = x;
    for (std::size_t i = 0; i < spec.depth; ++i) {
      h = block_fwd(h, parts.encoder[i], Mode::infer).first;
      if (i + 1 < spec.depth) h = maxpool2x2_fwd(h).first;
    }
    out.require(h.shape() == Shape({2, 16 * spec.base_channels, 4, 4}), name + " bottleneck " + to_string(h.shape()));
  }
  out.detail << (out.pass ? "" : "; ") << "unet, run, dual_path: (2,1,64,64) in (0,1), bottleneck (2,128,4,4)";
}

// ------------------------------------------------------- parameter counts

void param_counts(Outcome& out) {
  const auto t0 = Clock::now();
  std::size_t counts[3];
  int i = 0;
  for (ArchKind kind : {ArchKind::unet, ArchKind::run, ArchKind::dual_path}) {
    ArchSpec spec;
    spec.kind = kind;
    const auto r = reconcile_param_count(spec);
    counts[i++] = r.counted;
    const std::string name(to_string(kind));
    out.require(std::abs(r.relative_deviation) <= 0.05, name + " deviates " + fmt("%+.2f%%", 100 * r.relative_deviation));
    out.require(r.table.find("total ") != std::string::npos && r.table.find("enc0.conv1.weight") != std::string::npos,
                name + " table incomplete");
    out.detail << name << " " << r.counted << " (" << fmt("%+.3f%%", 100 * r.relative_deviation) << ") ";
  }
  out.require(counts[0] < counts[1] && counts[1] < counts[2], "ordering unet < run < dual_path broken");
  const double secs = seconds_since(t0);
  out.require(secs < 10.0, "runtime " + fmt("%.2f", secs) + " s");
  out.detail << fmt("%.3f", secs) << " s";
}

// ------------------------------------------------------------- overfit

double overfit_one(const fs::path& work, ArchKind kind, double& secs) {
  const auto t0 = Clock::now();
  RunConfig c;
  c.arch = kind;
  c.base_channels = 8;
  c.input_size = 64;
  c.count = 16;
  c.batch_size = 2;
  c.epochs = 150;
  c.checkpoint_every = 0;
  c.seed = 0;
  c.data_dir = (work / "overfit_data").string();
  std::ostringstream log;
  const std::string name(to_string(kind));
  c.out_dir = (work / ("overfit_" + name)).string();
  cmd_train(c, log);
  c.checkpoint = (work / ("overfit_" + name) / kLastCheckpoint).string();
  c.out_dir = (work / ("overfit_" + name + "_pred")).string();
  const double dice = cmd_predict(c, log).value();
  secs = seconds_since(t0);
  return dice;
}

void overfit(Outcome& out, const fs::path& work) {
  RunConfig g;
  g.input_size = 64;
  g.count = 16;
  g.seed = 0;
  g.out_dir = (work / "overfit_data").string();
  std::ostringstream log;
  cmd_gen_synthetic(g, log);
  double t_run = 0, t_unet = 0;
  const double run = overfit_one(work, ArchKind::run, t_run);
  const double unet = overfit_one(work, ArchKind::unet, t_unet);
  out.require(run >= 0.95, "RUN dice " + fmt("%.4f", run) + " < 0.95");
  out.require(run >= unet - 0.02, "RUN " + fmt("%.4f", run) + " < U-Net " + fmt("%.4f", unet) + " - 0.02");
  out.require(t_run < 600.0, "RUN took " + fmt("%.0f", t_run) + " s");
  out.require(t_unet < 600.0, "U-Net took " + fmt("%.0f", t_unet) + " s");
  out.detail << (out.pass ? "" : "; ") << "RUN dice " << fmt("%.4f", run) << " in " << fmt("%.0f", t_run)
             << " s, U-Net dice " << fmt("%.4f", unet) << " in " << fmt("%.0f", t_unet) << " s (150 epochs, batch 2)";
}

// ---------------------------------------------------------------- FROC

std::vector<std::size_t> square(std::size_t w, std::size_t r0, std::size_t c0, std::size_t side) {
  std::vector<std::size_t> px;
  for (std::size_t r = r0; r < std::min(r0 + side, w); ++r)
    for (std::size_t c = c0; c < std::min(c0 + side, w); ++c) px.push_back(r * w + c);
  return px;
}

GtNodule nodule(std::size_t w, std::vector<std::size_t> px) {
  GtNodule g;
  for (auto p : px) {
    g.row += static_cast<double>(p / w);
    g.col += static_cast<double>(p % w);
  }
  g.row /= static_cast<double>(px.size());
  g.col /= static_cast<double>(px.size());
  g.pixels = std::move(px);
  return g;
}

void froc_oracle(Outcome& out) {
  constexpr std::size_t w = 24;
  Rng rng(2024);
  std::vector<ScanResult> scans(10);
  std::vector<oracle::NaiveScan> naive(10);
  for (std::size_t s = 0; s < 10; ++s) {
    scans[s].scan_id = "scan" + std::to_string(s);
    scans[s].width = w;
    const std::size_t n_nod = s == 0 ? 2 : rng.below(3);
    for (std::size_t i = 0; i < n_nod; ++i)
      scans[s].nodules.push_back(nodule(w, square(w, rng.below(20), rng.below(20), 2 + rng.below(4))));
    const std::size_t n_det = rng.below(7);
    for (std::size_t i = 0; i < n_det; ++i) {
      Detection d;
      d.pixels = square(w, rng.below(22), rng.below(22), 1 + rng.below(5));
      d.score = static_cast<double>(1 + rng.below(10)) / 10.0;
      scans[s].detections.push_back(std::move(d));
    }
    for (const auto& d : scans[s].detections) naive[s].dets.push_back({{d.pixels.begin(), d.pixels.end()}, d.score});
    for (const auto& g : scans[s].nodules)
      naive[s].nodules.push_back({{g.pixels.begin(), g.pixels.end()}, g.center_index(w)});
  }
  const auto c = froc(scans);
  const auto o = oracle::froc(naive);
  bool same = c.points.size() == o.size();
  for (std::size_t i = 0; same && i < o.size(); ++i) {
    same = c.points[i].threshold == o[i].threshold && c.points[i].fp_per_scan == o[i].fp_per_scan &&
           c.points[i].sensitivity == o[i].sensitivity;
  }
  out.require(same, "10-scan curve differs from the naive oracle");

  ScanResult a, b;
  a.width = b.width = w;
  a.nodules.push_back(nodule(w, square(w, 2, 2, 3)));
  Detection hit, fp;
  hit.pixels = square(w, 2, 2, 3);
  hit.score = 0.9;
  fp.pixels = square(w, 15, 15, 2);
  fp.score = 0.6;
  a.detections = {hit, fp};
  b.nodules.push_back(nodule(w, square(w, 10, 3, 3)));
  const auto hc = froc(std::vector<ScanResult>{a, b});
  const auto& last = hc.points.back();
  out.require(last.fp_per_scan == 0.5 && last.sensitivity == 0.5,
              "hand case gives (" + fmt("%g", last.fp_per_scan) + ", " + fmt("%g", last.sensitivity) + ")");
  out.detail << (out.pass ? "" : "; ") << o.size() << " thresholds identical to the oracle; hand case (fp/scan "
             << fmt("%g", last.fp_per_scan) << ", sensitivity " << fmt("%g", last.sensitivity) << ")";
}

// ------------------------------------------------------- preprocessing

void preprocessing(Outcome& out) {
  const float lo = clip_normalize(-1200.0), hi = clip_normalize(600.0), mid = clip_normalize(-300.0);
  out.require(lo == 0.0f && hi == 1.0f && mid == 0.5f,
              "clip_normalize gives " + fmt("%g", lo) + ", " + fmt("%g", hi) + ", " + fmt("%g", mid));

  int exact = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    CtVolume v;
    v.dims = {1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(5)};
    v.spacing = {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 3.0)};
    v.origin = {rng.uniform(-300, 0), rng.uniform(-300, 0), rng.uniform(-400, 100)};
    v.hu.resize(v.dims[0] * v.dims[1] * v.dims[2]);
    for (auto& h : v.hu) h = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
    const auto [header, raw] = write_mhd(v, "v.raw");
    const auto img = parse_mhd(header, std::span<const std::uint8_t>(raw));
    const auto [header2, raw2] = write_mhd(img.volume, img.data_file);
    if (img.volume == v && header2 == header && raw2 == raw) ++exact;
  }
  out.require(exact == 20, std::to_string(20 - exact) + " of 20 mhd round trips differ");

  std::vector<std::string> ids;
  for (int i = 0; i < 888; ++i) ids.push_back("scan" + std::to_string(i));
  const auto folds = split_subsets(ids, 10, 0);
  std::set<std::string> seen;
  std::set<std::size_t> sizes;
  for (const auto& f : folds) {
    sizes.insert(f.size());
    seen.insert(f.begin(), f.end());
  }
  out.require(folds.size() == 10 && sizes == std::set<std::size_t>{88, 89} && seen.size() == 888,
              "888-id split is not a partition into folds of 88 and 89");
  out.detail << (out.pass ? "" : "; ") << "-1200->" << fmt("%g", lo) << ", 600->" << fmt("%g", hi) << ", -300->"
             << fmt("%g", mid) << "; " << exact << "/20 mhd round trips byte-exact; 888 ids -> 10 folds of 88/89";
}

// ---------------------------------------------------------- determinism

void pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  RunConfig c;
  c.input_size = 64;
  c.base_channels = 8;
  c.count = 16;
  c.epochs = 3;
  c.seed = 11;
  std::ostringstream log;
  c.out_dir = (dir / "data").string();
  cmd_gen_synthetic(c, log);
  c.data_dir = c.out_dir;
  c.out_dir = (dir / "train").string();
  cmd_train(c, log);
  c.checkpoint = (dir / "train" / kLastCheckpoint).string();
  c.out_dir = (dir / "pred").string();
  cmd_predict(c, log);
}

void determinism(Outcome& out, const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path a = work / "determinism_a", b = work / "determinism_b";
  pipeline(a);
  pipeline(b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    ++files;
    out.require(fs::exists(b / rel) && read_file(e.path()) == read_file(b / rel), rel.string() + " differs");
  }
  for (const char* must : {"train/train_log.csv", "train/last.ckpt", "train/epoch_003.ckpt", "pred/predictions.bin"})
    out.require(fs::exists(a / must), std::string(must) + " missing");
  out.detail << (out.pass ? "" : "; ") << files << " files byte-identical across two runs (gen-synthetic, train 3 epochs, predict), "
             << fmt("%.0f", seconds_since(t0)) << " s";
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "runet_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    const char* name;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient_suite", gradient_suite},
      {"residual_identity", residual_identity},
      {"adam_oracle", adam_oracle},
      {"dice_oracle", dice_oracle},
      {"shape_law", shape_law},
      {"param_counts", param_counts},
      {"overfit", [&](Outcome& o) { overfit(o, work); }},
      {"froc_oracle", froc_oracle},
      {"preprocessing", preprocessing},
      {"determinism", [&](Outcome& o) { determinism(o, work); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
