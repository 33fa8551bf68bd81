#pragma once

// Slow reference implementations used as independent oracles. They share
// nothing with the library beyond the tensor container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "runet/tensor.hpp"

namespace oracle {

using runet::BasicTensor;

/// Nested-loop cross-correlation with TensorFlow "same" padding
/// (out = ceil(in/stride), odd padding pixel after the input), in double.
inline BasicTensor<double> conv2d(const BasicTensor<double>& x, const BasicTensor<double>& w,
                                  const BasicTensor<double>& b, std::size_t stride = 1, bool same = true) {
  const long n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const long co = w.dim(0), k = w.dim(2);
  const long s = static_cast<long>(stride);
  long ho, wo, pt = 0, pl = 0;
  if (same) {
    ho = (h + s - 1) / s;
    wo = (wd + s - 1) / s;
    pt = std::max(0L, (ho - 1) * s + k - h) / 2;
    pl = std::max(0L, (wo - 1) * s + k - wd) / 2;
  } else {
    ho = (h - k) / s + 1;
    wo = (wd - k) / s + 1;
  }
  BasicTensor<double> y({static_cast<std::size_t>(n), static_cast<std::size_t>(co), static_cast<std::size_t>(ho),
                         static_cast<std::size_t>(wo)});
  for (long a = 0; a < n; ++a)
    for (long o = 0; o < co; ++o)
      for (long r = 0; r < ho; ++r)
        for (long c = 0; c < wo; ++c) {
          double acc = b[static_cast<std::size_t>(o)];
          for (long i = 0; i < ci; ++i)
            for (long kr = 0; kr < k; ++kr)
              for (long kc = 0; kc < k; ++kc) {
                const long sr = r * s + kr - pt, sc = c * s + kc - pl;
                if (sr < 0 || sr >= h || sc < 0 || sc >= wd) continue;
                acc += w.at(o, i, kr, kc) * x.at(a, i, sr, sc);
              }
          y.at(a, o, r, c) = acc;
        }
  return y;
}

/// Transposed convolution by scattering: every input pixel (ih, iw) adds
/// W[ci, co, kh, kw] * x to output (2ih + kh, 2iw + kw); taps past the
/// doubled extent are dropped.
inline BasicTensor<double> upconv(const BasicTensor<double>& x, const BasicTensor<double>& w,
                                  const BasicTensor<double>& b) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3), co = w.dim(1), k = w.dim(2);
  BasicTensor<double> y({n, co, 2 * h, 2 * wd});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t r = 0; r < 2 * h; ++r)
        for (std::size_t c = 0; c < 2 * wd; ++c) y.at(a, o, r, c) = b[o];
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t i = 0; i < ci; ++i)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < wd; ++c)
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t kr = 0; kr < k; ++kr)
              for (std::size_t kc = 0; kc < k; ++kc) {
                const std::size_t orow = 2 * r + kr, ocol = 2 * c + kc;
                if (orow >= 2 * h || ocol >= 2 * wd) continue;
                y.at(a, o, orow, ocol) += w.at(i, o, kr, kc) * x.at(a, i, r, c);
              }
  return y;
}

/// 2|A n B| / (|A| + |B|) from two boolean masks via std::set.
inline double set_dice(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::set<std::size_t> sa, sb, both;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) sa.insert(i);
    if (b[i]) sb.insert(i);
    if (a[i] && b[i]) both.insert(i);
  }
  if (sa.empty() && sb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

/// Adam on f(theta) = theta^2 (g = 2 theta), written out step by step.
/// With `literal`, the second moment recurrence uses the previous first
/// moment, v_t = b2 * m_{t-1} + (1 - b2) g^2.
inline std::vector<double> adam_quadratic(double theta, double eta, int steps, double b1 = 0.9, double b2 = 0.99,
                                          double eps = 1e-8, bool literal = false) {
  std::vector<double> traj{theta};
  double m = 0.0, v = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2.0 * theta;
    const double m_prev = m;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * (literal ? m_prev : v) + (1.0 - b2) * g * g;
    const double mh = m / (1.0 - std::pow(b1, t));
    const double vh = v / (1.0 - std::pow(b2, t));
    theta = theta - eta * mh / (std::sqrt(std::max(vh, 0.0)) + eps);
    traj.push_back(theta);
  }
  return traj;
}

/// One scan for the naive FROC oracle: detections are pixel sets with a
/// score, nodules are pixel sets with a centre pixel. All on one slice.
struct NaiveDetection {
  std::set<std::size_t> pixels;
  double score;
};
struct NaiveNodule {
  std::set<std::size_t> pixels;
  std::size_t center;
};
struct NaiveScan {
  std::vector<NaiveDetection> dets;
  std::vector<NaiveNodule> nodules;
};

inline bool naive_hit(const NaiveDetection& d, const NaiveNodule& n) {
  std::size_t inter = 0;
  for (auto p : d.pixels) inter += n.pixels.count(p);
  const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(d.pixels.size() + n.pixels.size());
  return dice > 0.5 || d.pixels.count(n.center) > 0;
}

struct NaivePoint {
  double threshold, fp_per_scan, sensitivity;
};

/// For every distinct score t (descending): keep detections with score >= t,
/// count nodules hit by any kept detection and kept detections that hit no
/// nodule at all.
inline std::vector<NaivePoint> froc(const std::vector<NaiveScan>& scans) {
  std::set<double, std::greater<>> thresholds;
  std::size_t total = 0;
  for (const auto& s : scans) {
    for (const auto& d : s.dets) thresholds.insert(d.score);
    total += s.nodules.size();
  }
  std::vector<NaivePoint> out;
  for (double t : thresholds) {
    std::size_t hit = 0, fp = 0;
    for (const auto& s : scans) {
      for (const auto& n : s.nodules) {
        bool any = false;
        for (const auto& d : s.dets) any = any || (d.score >= t && naive_hit(d, n));
        hit += any ? 1 : 0;
      }
      for (const auto& d : s.dets) {
        if (d.score < t) continue;
        bool any = false;
        for (const auto& n : s.nodules) any = any || naive_hit(d, n);
        fp += any ? 0 : 1;
      }
    }
    out.push_back({t, static_cast<double>(fp) / static_cast<double>(scans.size()),
                   static_cast<double>(hit) / static_cast<double>(total)});
  }
  return out;
}

}  // namespace oracle
