#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "runet/data/preprocess.hpp"
#include "runet/tensor.hpp"

namespace runet {

/// Connected component of a thresholded probability map.
struct Detection {
  std::string scan_id;
  std::int64_t slice = -1;
  std::vector<std::size_t> pixels;  // flat row-major indices, ascending
  double row = 0.0, col = 0.0;      // centroid
  double score = 0.0;               // max probability inside the component
};

/// One ground-truth nodule on a slice: its pixel set and its labelled centre.
struct GtNodule {
  std::vector<std::size_t> pixels;  // ascending
  double row = 0.0, col = 0.0;

  /// Pixel holding the centre (nearest pixel centre).
  std::size_t center_index(std::size_t width) const {
    return static_cast<std::size_t>(std::llround(row)) * width + static_cast<std::size_t>(std::llround(col));
  }
};

namespace detail {

inline std::pair<std::size_t, std::size_t> plane_dims(const Shape& s, const char* op) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 3 && s[0] == 1) return {s[1], s[2]};
  if (s.size() == 4 && s[0] == 1 && s[1] == 1) return {s[2], s[3]};
  throw ShapeError(std::string(op) + ": expected a single (H,W) plane, got " + to_string(s));
}

inline std::vector<std::vector<std::size_t>> component_pixels(const BinaryImage& b) {
  const Components c = label_components(b, true);
  std::vector<std::vector<std::size_t>> out(c.size.size());
  for (std::size_t i = 0; i < c.label.size(); ++i)
    if (c.label[i] > 0) out[static_cast<std::size_t>(c.label[i] - 1)].push_back(i);
  return out;
}

}  // namespace detail

/// One detection per 8-connected component of {p >= threshold}, in raster
/// order of each component's first pixel.
template <typename T>
std::vector<Detection> binarize_and_components(const BasicTensor<T>& prob, double threshold = 0.5,
                                               const std::string& scan_id = {}, std::int64_t slice = -1) {
  const auto [h, w] = detail::plane_dims(prob.shape(), "binarize_and_components");
  BinaryImage b(h, w);
  for (std::size_t i = 0; i < b.px.size(); ++i) b.px[i] = static_cast<double>(prob[i]) >= threshold ? 1 : 0;
  std::vector<Detection> out;
  for (auto& px : detail::component_pixels(b)) {
    Detection d;
    d.scan_id = scan_id;
    d.slice = slice;
    double sr = 0.0, sc = 0.0;
    for (std::size_t p : px) {
      sr += static_cast<double>(p / w);
      sc += static_cast<double>(p % w);
      d.score = std::max(d.score, static_cast<double>(prob[p]));
    }
    d.row = sr / static_cast<double>(px.size());
    d.col = sc / static_cast<double>(px.size());
    d.pixels = std::move(px);
    out.push_back(std::move(d));
  }
  return out;
}

/// Ground-truth nodules of a binary mask: its 8-connected components, each
/// centred at its centroid.
template <typename T>
std::vector<GtNodule> nodules_from_mask(const BasicTensor<T>& mask) {
  const auto [h, w] = detail::plane_dims(mask.shape(), "nodules_from_mask");
  BinaryImage b(h, w);
  for (std::size_t i = 0; i < b.px.size(); ++i) b.px[i] = mask[i] != T{0} ? 1 : 0;
  std::vector<GtNodule> out;
  for (auto& px : detail::component_pixels(b)) {
    GtNodule g;
    double sr = 0.0, sc = 0.0;
    for (std::size_t p : px) {
      sr += static_cast<double>(p / w);
      sc += static_cast<double>(p % w);
    }
    g.row = sr / static_cast<double>(px.size());
    g.col = sc / static_cast<double>(px.size());
    g.pixels = std::move(px);
    out.push_back(std::move(g));
  }
  return out;
}

/// 2|A n B| / (|A| + |B|) on ascending pixel lists; 1 for two empty sets.
inline double set_dice(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
}

enum class HitKind { hit_dice, hit_center, miss };

struct HitResult {
  bool by_dice = false;    // dice(component, nodule) > 0.5
  bool by_center = false;  // nodule centre pixel inside the component
  double dice = 0.0;

  bool hit() const { return by_dice || by_center; }
  HitKind kind() const { return by_dice ? HitKind::hit_dice : by_center ? HitKind::hit_center : HitKind::miss; }
};

/// Either criterion makes a hit; a detection hitting no nodule is a false positive.
inline HitResult is_hit(const Detection& det, const GtNodule& gt, std::size_t width) {
  HitResult r;
  r.dice = set_dice(det.pixels, gt.pixels);
  r.by_dice = r.dice > 0.5;
  r.by_center = std::binary_search(det.pixels.begin(), det.pixels.end(), gt.center_index(width));
  return r;
}

}  // namespace runet
