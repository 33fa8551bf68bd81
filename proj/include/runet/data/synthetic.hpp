#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "runet/data/preprocess.hpp"
#include "runet/rng.hpp"
#include "runet/tensor.hpp"

namespace runet {

/// One training example: image (1,H,W), binary mask (1,H,W) and where it came from.
struct SlicePair {
  Tensor image;
  Tensor mask;
  std::string series_id;
  std::int64_t slice = -1;  // axial index, -1 for synthetic slices
  std::uint64_t seed = 0;   // generator seed, 0 for CT-derived slices

  friend bool operator==(const SlicePair&, const SlicePair&) = default;
};

struct Blob {
  double cx = 0.0, cy = 0.0;  // column, row
  double radius = 0.0;        // pixels
};

struct SyntheticParams {
  std::size_t size = 64;
  std::size_t nodules_per_image = 1;
  int min_radius = 2;
  int max_radius = 8;
  bool apply_lung_mask = true;  // zero everything outside segment_lung()
};

/// HU phantom of one axial slice with its nodule labels.
struct Phantom {
  Tensor hu;            // (H, W), integer HU values
  BinaryImage lungs;    // the two lung ellipses
  BinaryImage nodules;  // blob supports
  std::vector<Blob> blobs;
};

namespace detail {

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(double x, double y) const {
    const double u = (x - cx) / ax, v = (y - cy) / ay;
    return u * u + v * v <= 1.0;
  }
};

inline bool disk_inside(const Ellipse& e, double cx, double cy, double r) {
  const int ir = static_cast<int>(std::ceil(r));
  for (int dy = -ir; dy <= ir; ++dy)
    for (int dx = -ir; dx <= ir; ++dx)
      if (dx * dx + dy * dy <= r * r && !e.contains(cx + dx, cy + dy)) return false;
  return true;
}

}  // namespace detail

/// Body disk (40 HU) holding two lung ellipses (-800 HU) on air (-1000 HU),
/// plus about +-30 HU of low-frequency cosine texture. Nodules are bright
/// blobs, 150 + 450*exp(-d^2/r^2) HU on their support d <= r, placed with a
/// two-pixel lung margin and without touching each other.
inline Phantom make_phantom(Rng& rng, std::size_t size, std::size_t n_nodules, int min_radius = 2,
                            int max_radius = 8) {
  if (size < 16) throw std::invalid_argument("make_phantom: size must be at least 16");
  if (min_radius < 1 || max_radius < min_radius) throw std::invalid_argument("make_phantom: bad radius range");
  const double S = static_cast<double>(size);
  const double mid = (S - 1.0) / 2.0;
  const detail::Ellipse lungs[2] = {{mid - 0.19 * S, mid, 0.14 * S, 0.28 * S}, {mid + 0.19 * S, mid, 0.14 * S, 0.28 * S}};
  const double body_r = 0.45 * S;

  struct Wave {
    double fx, fy, phase;
  };
  Wave waves[3];
  for (auto& w : waves) {
    w.fx = rng.uniform(0.5, 2.0);
    w.fy = rng.uniform(0.5, 2.0);
    w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  Phantom ph;
  ph.lungs = BinaryImage(size, size);
  ph.nodules = BinaryImage(size, size);
  for (std::size_t n = 0; n < n_nodules; ++n) {
    for (int hi = max_radius; hi >= min_radius && ph.blobs.size() == n; --hi) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const auto& e = lungs[rng.below(2)];
        const double r = static_cast<double>(min_radius + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - min_radius + 1))));
        const double cx = std::round(rng.uniform(e.cx - e.ax, e.cx + e.ax));
        const double cy = std::round(rng.uniform(e.cy - e.ay, e.cy + e.ay));
        if (!detail::disk_inside(e, cx, cy, r + 2.0)) continue;
        bool clear = true;
        for (const auto& b : ph.blobs) {
          if (std::hypot(b.cx - cx, b.cy - cy) <= b.radius + r + 2.0) clear = false;
        }
        if (!clear) continue;
        ph.blobs.push_back({cx, cy, r});
        break;
      }
    }
  }

  ph.hu = Tensor({size, size});
  for (std::size_t row = 0; row < size; ++row) {
    for (std::size_t col = 0; col < size; ++col) {
      const double x = static_cast<double>(col), y = static_cast<double>(row);
      double v = -1000.0;
      if (std::hypot(x - mid, y - mid) <= body_r) v = 40.0;
      if (lungs[0].contains(x, y) || lungs[1].contains(x, y)) {
        v = -800.0;
        ph.lungs(row, col) = 1;
      }
      for (const auto& b : ph.blobs) {
        const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        if (d2 <= b.radius * b.radius) {
          v = 150.0 + 450.0 * std::exp(-d2 / (b.radius * b.radius));
          ph.nodules(row, col) = 1;
        }
      }
      for (const auto& w : waves) v += 10.0 * std::cos(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) / S + w.phase);
      ph.hu[row * size + col] = static_cast<float>(std::round(v));
    }
  }
  return ph;
}

/// `count` phantom slices; slice i depends only on (seed, i).
inline std::vector<SlicePair> gen_synthetic(std::uint64_t seed, std::size_t count, const SyntheticParams& p = {}) {
  if (p.size == 0 || p.size % 16 != 0) {
    throw std::invalid_argument("gen_synthetic: size must be a positive multiple of 16, got " + std::to_string(p.size));
  }
  std::vector<SlicePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(Rng::derive(seed, {i}));
    const Phantom ph = make_phantom(rng, p.size, p.nodules_per_image, p.min_radius, p.max_radius);
    Tensor image = clip_normalize(ph.hu);
    if (p.apply_lung_mask) image = apply_mask(image, to_tensor<float>(segment_lung(ph.hu).mask));
    SlicePair s;
    s.image = image.reshaped({1, p.size, p.size});
    s.mask = to_tensor<float>(ph.nodules).reshaped({1, p.size, p.size});
    s.series_id = "synthetic-" + std::to_string(seed) + "-" + std::to_string(i);
    s.seed = seed;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SlicePair> gen_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                            std::size_t nodules_per_image) {
  SyntheticParams p;
  p.size = size;
  p.nodules_per_image = nodules_per_image;
  return gen_synthetic(seed, count, p);
}

}  // namespace runet
