#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "runet/data/volume.hpp"
#include "runet/tensor.hpp"

namespace runet {

inline constexpr double kHuLow = -1200.0;
inline constexpr double kHuHigh = 600.0;

/// clamp(v, -1200, 600), then (v + 1200) / 1800.
inline float clip_normalize(double hu) {
  const double c = std::clamp(hu, kHuLow, kHuHigh);
  return static_cast<float>((c - kHuLow) / (kHuHigh - kHuLow));
}

template <typename T>
BasicTensor<T> clip_normalize(const BasicTensor<T>& hu) {
  BasicTensor<T> out(hu.shape());
  for (std::size_t i = 0; i < hu.numel(); ++i) out[i] = static_cast<T>(clip_normalize(static_cast<double>(hu[i])));
  return out;
}

/// Per-pixel mean over equally shaped slices, accumulated in double in
/// slice order.
template <typename T>
BasicTensor<T> mean_image(const std::vector<BasicTensor<T>>& slices) {
  if (slices.empty()) throw std::invalid_argument("mean_image: no slices");
  const Shape& s = slices.front().shape();
  std::vector<double> acc(slices.front().numel(), 0.0);
  for (const auto& t : slices) {
    if (t.shape() != s) {
      throw ShapeError("mean_image: slice " + to_string(t.shape()) + " differs from " + to_string(s));
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(t[i]);
  }
  BasicTensor<T> out(s);
  const double n = static_cast<double>(slices.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i] / n);
  return out;
}

template <typename T>
BasicTensor<T> subtract_mean(const BasicTensor<T>& slice, const BasicTensor<T>& mean) {
  if (slice.shape() != mean.shape()) {
    throw ShapeError("subtract_mean: slice " + to_string(slice.shape()) + " vs mean " + to_string(mean.shape()));
  }
  return sub(slice, mean);
}

/// Sets pixels outside `mask` to `fill`.
template <typename T>
BasicTensor<T> apply_mask(const BasicTensor<T>& image, const BasicTensor<T>& mask, T fill = T{0}) {
  require_same_shape(image, mask, "apply_mask");
  BasicTensor<T> out = image;
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (mask[i] == T{0}) out[i] = fill;
  return out;
}

// ---------------------------------------------------------------------------
// Binary morphology on (H, W) masks stored as 0/1 bytes.

struct BinaryImage {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> px;

  BinaryImage() = default;
  BinaryImage(std::size_t h_, std::size_t w_) : h(h_), w(w_), px(h_ * w_, 0) {}

  std::uint8_t& operator()(std::size_t r, std::size_t c) { return px[r * w + c]; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return px[r * w + c]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(px.begin(), px.end(), 1)); }

  friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

template <typename T>
BasicTensor<T> to_tensor(const BinaryImage& b) {
  BasicTensor<T> out({b.h, b.w});
  for (std::size_t i = 0; i < b.px.size(); ++i) out[i] = b.px[i] ? T{1} : T{0};
  return out;
}

/// Connected-component labels (0 = background, 1.. in raster order of first pixel).
struct Components {
  std::vector<std::int32_t> label;
  std::vector<std::size_t> size;  // size[l-1]
  std::vector<bool> touches_border;
};

inline Components label_components(const BinaryImage& b, bool eight_connected) {
  Components c;
  c.label.assign(b.px.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < b.px.size(); ++start) {
    if (!b.px[start] || c.label[start]) continue;
    const auto id = static_cast<std::int32_t>(c.size.size() + 1);
    std::size_t n = 0;
    bool border = false;
    c.label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++n;
      const auto r = static_cast<std::ptrdiff_t>(p / b.w), col = static_cast<std::ptrdiff_t>(p % b.w);
      if (r == 0 || col == 0 || r + 1 == static_cast<std::ptrdiff_t>(b.h) || col + 1 == static_cast<std::ptrdiff_t>(b.w)) {
        border = true;
      }
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          if ((dr == 0 && dc == 0) || (!eight_connected && dr != 0 && dc != 0)) continue;
          const std::ptrdiff_t rr = r + dr, cc = col + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(b.h) || cc >= static_cast<std::ptrdiff_t>(b.w)) {
            continue;
          }
          const std::size_t q = static_cast<std::size_t>(rr) * b.w + static_cast<std::size_t>(cc);
          if (b.px[q] && !c.label[q]) {
            c.label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    c.size.push_back(n);
    c.touches_border.push_back(border);
  }
  return c;
}

namespace detail {

inline std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> disk_offsets(int radius) {
  std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> out;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc)
      if (dr * dr + dc * dc <= radius * radius) out.emplace_back(dr, dc);
  return out;
}

// Dilation treats pixels outside the image as background, erosion as
// foreground, so closing never eats into regions at the image edge.
inline BinaryImage morph(const BinaryImage& b, int radius, bool dilate) {
  const auto offs = disk_offsets(radius);
  BinaryImage out(b.h, b.w);
  const auto H = static_cast<std::ptrdiff_t>(b.h), W = static_cast<std::ptrdiff_t>(b.w);
  for (std::ptrdiff_t r = 0; r < H; ++r) {
    for (std::ptrdiff_t c = 0; c < W; ++c) {
      bool v = !dilate;
      for (auto [dr, dc] : offs) {
        const std::ptrdiff_t rr = r + dr, cc = c + dc;
        const bool inside = rr >= 0 && cc >= 0 && rr < H && cc < W;
        const bool on = inside ? b.px[static_cast<std::size_t>(rr * W + cc)] != 0 : !dilate;
        if (dilate && on) {
          v = true;
          break;
        }
        if (!dilate && !on) {
          v = false;
          break;
        }
      }
      out.px[static_cast<std::size_t>(r * W + c)] = v ? 1 : 0;
    }
  }
  return out;
}

}  // namespace detail

inline BinaryImage dilate(const BinaryImage& b, int radius) { return detail::morph(b, radius, true); }
inline BinaryImage erode(const BinaryImage& b, int radius) { return detail::morph(b, radius, false); }
inline BinaryImage closing(const BinaryImage& b, int radius) { return erode(dilate(b, radius), radius); }

/// Sets every background pixel not 4-connected to the image border.
inline BinaryImage fill_holes(const BinaryImage& b) {
  BinaryImage outside(b.h, b.w);
  std::vector<std::size_t> stack;
  auto seed = [&](std::size_t r, std::size_t c) {
    const std::size_t p = r * b.w + c;
    if (!b.px[p] && !outside.px[p]) {
      outside.px[p] = 1;
      stack.push_back(p);
    }
  };
  for (std::size_t r = 0; r < b.h; ++r) {
    seed(r, 0);
    seed(r, b.w - 1);
  }
  for (std::size_t c = 0; c < b.w; ++c) {
    seed(0, c);
    seed(b.h - 1, c);
  }
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    const std::size_t r = p / b.w, c = p % b.w;
    if (r > 0) seed(r - 1, c);
    if (r + 1 < b.h) seed(r + 1, c);
    if (c > 0) seed(r, c - 1);
    if (c + 1 < b.w) seed(r, c + 1);
  }
  BinaryImage out(b.h, b.w);
  for (std::size_t i = 0; i < b.px.size(); ++i) out.px[i] = outside.px[i] ? 0 : 1;
  return out;
}

struct LungSegParams {
  double threshold_hu = -400.0;
  std::size_t keep_largest = 2;
  int closing_radius = 3;
};

struct LungSegmentation {
  BinaryImage mask;
  std::size_t components = 0;  // components kept before closing
  bool empty() const { return mask.count() == 0; }
};

/// Lung parenchyma from an (H, W) HU slice: threshold below -400 HU,
/// 4-connected components, drop those touching the border (outside air),
/// keep the two largest, close with a radius-3 disk, fill holes.
template <typename T>
LungSegmentation segment_lung(const BasicTensor<T>& hu, const LungSegParams& params = {}) {
  if (hu.rank() != 2) throw ShapeError("segment_lung: expected an (H,W) slice, got " + to_string(hu.shape()));
  BinaryImage dark(hu.dim(0), hu.dim(1));
  for (std::size_t i = 0; i < hu.numel(); ++i) dark.px[i] = static_cast<double>(hu[i]) < params.threshold_hu ? 1 : 0;
  const Components comps = label_components(dark, false);
  std::vector<std::size_t> order;
  for (std::size_t l = 0; l < comps.size.size(); ++l)
    if (!comps.touches_border[l]) order.push_back(l);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return comps.size[a] > comps.size[b]; });
  if (order.size() > params.keep_largest) order.resize(params.keep_largest);

  LungSegmentation out;
  out.components = order.size();
  BinaryImage keep(dark.h, dark.w);
  for (std::size_t i = 0; i < keep.px.size(); ++i) {
    const auto l = comps.label[i];
    if (l > 0 && std::find(order.begin(), order.end(), static_cast<std::size_t>(l - 1)) != order.end()) keep.px[i] = 1;
  }
  out.mask = fill_holes(params.closing_radius > 0 ? closing(keep, params.closing_radius) : keep);
  return out;
}

// ---------------------------------------------------------------------------

/// Nearest-neighbour resampling of an (H, W) or (C, H, W) tensor: source
/// index floor((dst + 0.5) * src / dst).
template <typename T>
BasicTensor<T> resize_nearest(const BasicTensor<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("resize_nearest: expected rank 2 or 3, got " + to_string(x.shape()));
  const std::size_t c = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (h == out_h && w == out_w) return x;
  Shape s = x.shape();
  s[s.size() - 2] = out_h;
  s[s.size() - 1] = out_w;
  BasicTensor<T> out(s);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t r = 0; r < out_h; ++r) {
      const std::size_t sr = std::min(h - 1, (2 * r + 1) * h / (2 * out_h));
      for (std::size_t col = 0; col < out_w; ++col) {
        const std::size_t sc = std::min(w - 1, (2 * col + 1) * w / (2 * out_w));
        out[(ch * out_h + r) * out_w + col] = x[(ch * h + sr) * w + sc];
      }
    }
  return out;
}

/// Ground-truth mask for axial slice k: every nodule whose centre lies
/// within diameter/2 (in mm, along z) of the slice contributes a filled
/// circle of radius diameter/(2*sx) pixels around its (x, y) centre.
/// Result is (out_h, out_w), nearest-resampled from the native grid.
inline Tensor make_mask(const CtVolume& vol, const std::vector<NoduleAnnotation>& nodules, std::size_t slice_k,
                        std::size_t out_h = 0, std::size_t out_w = 0) {
  const std::size_t h = vol.ny(), w = vol.nx();
  if (out_h == 0) out_h = h;
  if (out_w == 0) out_w = w;
  Tensor m({h, w});
  for (const auto& nod : nodules) {
    if (!(nod.diameter_mm > 0.0)) throw std::invalid_argument("make_mask: nodule diameter must be positive");
    const Vec3 v = world_to_voxel(vol, nod.world);
    if (std::abs(static_cast<double>(slice_k) - v[2]) * vol.spacing[2] > nod.diameter_mm / 2.0) continue;
    const double radius = nod.diameter_mm / (2.0 * vol.spacing[0]);
    const double r2 = radius * radius;
    const auto r_lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(v[1] - radius)));
    const auto r_hi = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(h) - 1, std::ceil(v[1] + radius)));
    const auto c_lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(v[0] - radius)));
    const auto c_hi = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(w) - 1, std::ceil(v[0] + radius)));
    for (std::ptrdiff_t r = r_lo; r <= r_hi; ++r)
      for (std::ptrdiff_t c = c_lo; c <= c_hi; ++c) {
        const double dx = static_cast<double>(c) - v[0], dy = static_cast<double>(r) - v[1];
        if (dx * dx + dy * dy <= r2) m[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = 1.0f;
      }
  }
  return resize_nearest(m, out_h, out_w);
}

}  // namespace runet
