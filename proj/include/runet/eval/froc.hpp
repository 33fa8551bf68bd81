#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "runet/eval/detections.hpp"
#include "runet/rng.hpp"

namespace runet {

/// Detections and ground truth of one scan. Nodules and detections carry
/// their slice index; only same-slice pairs can hit.
struct ScanResult {
  std::string scan_id;
  std::size_t width = 0;  // slice width in pixels, for centre lookup
  std::vector<Detection> detections;
  std::vector<GtNodule> nodules;
  std::vector<std::int64_t> nodule_slices;  // parallel to nodules; empty = all on detections' slice
};

/// A scan reduced to what the sweep needs.
struct ScanHits {
  std::vector<double> fp_scores;      // detections hitting no nodule
  std::vector<double> other_scores;   // detections hitting at least one nodule
  std::vector<double> nodule_scores;  // per nodule: best hitting score, or -1 if never hit
  std::size_t hit_by_dice = 0;        // nodules hit under the dice criterion by some detection
  std::size_t hit_by_center = 0;      // nodules hit under the centre criterion by some detection
};

inline ScanHits score_scan(const ScanResult& scan) {
  if (!scan.nodule_slices.empty() && scan.nodule_slices.size() != scan.nodules.size()) {
    throw std::invalid_argument("score_scan: nodule_slices must parallel nodules");
  }
  ScanHits out;
  out.nodule_scores.assign(scan.nodules.size(), -1.0);
  std::vector<bool> dice_any(scan.nodules.size(), false), center_any(scan.nodules.size(), false);
  for (const auto& d : scan.detections) {
    bool hit_any = false;
    for (std::size_t n = 0; n < scan.nodules.size(); ++n) {
      if (!scan.nodule_slices.empty() && scan.nodule_slices[n] != d.slice) continue;
      const HitResult h = is_hit(d, scan.nodules[n], scan.width);
      if (!h.hit()) continue;
      hit_any = true;
      dice_any[n] = dice_any[n] || h.by_dice;
      center_any[n] = center_any[n] || h.by_center;
      out.nodule_scores[n] = std::max(out.nodule_scores[n], d.score);
    }
    (hit_any ? out.other_scores : out.fp_scores).push_back(d.score);
  }
  out.hit_by_dice = static_cast<std::size_t>(std::count(dice_any.begin(), dice_any.end(), true));
  out.hit_by_center = static_cast<std::size_t>(std::count(center_any.begin(), center_any.end(), true));
  return out;
}

struct FrocPoint {
  double threshold = 0.0;
  double fp_per_scan = 0.0;
  double sensitivity = 0.0;

  friend bool operator==(const FrocPoint&, const FrocPoint&) = default;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // thresholds descending
  std::vector<double> ci_lower, ci_upper;  // parallel to points once filled in
  std::size_t total_nodules = 0;
  std::size_t n_scans = 0;
};

namespace detail {

inline FrocCurve froc_over(const std::vector<ScanHits>& scans, const std::vector<std::size_t>& idx) {
  std::vector<double> thresholds, nod, fps;
  for (std::size_t i : idx) {
    const auto& s = scans[i];
    thresholds.insert(thresholds.end(), s.fp_scores.begin(), s.fp_scores.end());
    thresholds.insert(thresholds.end(), s.other_scores.begin(), s.other_scores.end());
    nod.insert(nod.end(), s.nodule_scores.begin(), s.nodule_scores.end());
    fps.insert(fps.end(), s.fp_scores.begin(), s.fp_scores.end());
  }
  FrocCurve c;
  c.total_nodules = nod.size();
  c.n_scans = idx.size();
  if (c.total_nodules == 0) throw std::invalid_argument("froc: no ground-truth nodules, sensitivity undefined");
  if (c.n_scans == 0) throw std::invalid_argument("froc: no scans");
  auto desc = [](double a, double b) { return a > b; };
  std::sort(thresholds.begin(), thresholds.end(), desc);
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::sort(nod.begin(), nod.end(), desc);
  std::sort(fps.begin(), fps.end(), desc);
  std::size_t hits = 0, fp = 0;
  for (double t : thresholds) {
    while (hits < nod.size() && nod[hits] >= t) ++hits;
    while (fp < fps.size() && fps[fp] >= t) ++fp;
    c.points.push_back({t, static_cast<double>(fp) / static_cast<double>(c.n_scans),
                        static_cast<double>(hits) / static_cast<double>(c.total_nodules)});
  }
  return c;
}

inline double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Sweeps every distinct detection score as threshold (score >= t kept).
/// A nodule counts as found once any kept detection hits it; kept
/// detections hitting no nodule are false positives. Hitting detections
/// that do not claim a nodule count as neither.
inline FrocCurve froc(const std::vector<ScanHits>& scans) {
  std::vector<std::size_t> idx(scans.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return detail::froc_over(scans, idx);
}

inline FrocCurve froc(const std::vector<ScanResult>& scans) {
  std::vector<ScanHits> h;
  for (const auto& s : scans) h.push_back(score_scan(s));
  return froc(h);
}

/// Sensitivity at `fp` false positives per scan: linear interpolation over
/// the curve's (fp, sensitivity) pairs, equal-fp points collapsed to their
/// best sensitivity, starting from (0, 0); held constant past the last point.
inline double sensitivity_at(const FrocCurve& c, double fp) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : c.points) {
    if (!pts.empty() && pts.back().first == p.fp_per_scan) {
      pts.back().second = std::max(pts.back().second, p.sensitivity);
    } else {
      pts.emplace_back(p.fp_per_scan, p.sensitivity);
    }
  }
  if (pts.empty() || pts.front().first > 0.0) pts.insert(pts.begin(), {0.0, 0.0});
  if (fp <= pts.front().first) return pts.front().second;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (fp <= pts[i].first) {
      const auto [x0, y0] = pts[i - 1];
      const auto [x1, y1] = pts[i];
      return y0 + (y1 - y0) * (fp - x0) / (x1 - x0);
    }
  }
  return pts.back().second;
}

inline const std::vector<double>& standard_fp_grid() {
  static const std::vector<double> grid{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  return grid;
}

struct ConfidenceBand {
  std::vector<double> lower, upper;
  std::size_t resamples_used = 0;  // resamples with at least one nodule
};

/// Bootstrap over scans: resample scans with replacement, recompute the
/// curve, read it at each fp in `grid`, take the 2.5th / 97.5th percentiles
/// (linear interpolation between order statistics). Resamples without any
/// nodule are skipped. The band is widened to include the point estimate.
inline ConfidenceBand bootstrap_ci(const std::vector<ScanHits>& scans, const std::vector<double>& grid,
                                   std::size_t n_resamples = 1000, std::uint64_t seed = 0, double level = 0.95) {
  if (scans.size() < 2) throw std::invalid_argument("bootstrap_ci: needs at least 2 scans");
  if (n_resamples == 0) throw std::invalid_argument("bootstrap_ci: n_resamples must be positive");
  const FrocCurve point = froc(scans);
  std::vector<std::vector<double>> samples(grid.size());
  Rng rng(seed);
  ConfidenceBand band;
  std::vector<std::size_t> idx(scans.size());
  for (std::size_t r = 0; r < n_resamples; ++r) {
    std::size_t nodules = 0;
    for (auto& i : idx) {
      i = rng.below(scans.size());
      nodules += scans[i].nodule_scores.size();
    }
    if (nodules == 0) continue;
    const FrocCurve c = detail::froc_over(scans, idx);
    for (std::size_t g = 0; g < grid.size(); ++g) samples[g].push_back(sensitivity_at(c, grid[g]));
    ++band.resamples_used;
  }
  if (band.resamples_used == 0) throw std::runtime_error("bootstrap_ci: every resample lacked nodules");
  const double tail = (1.0 - level) / 2.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double est = sensitivity_at(point, grid[g]);
    band.lower.push_back(std::min(est, detail::percentile(samples[g], tail)));
    band.upper.push_back(std::max(est, detail::percentile(samples[g], 1.0 - tail)));
  }
  return band;
}

/// Fills curve.ci_lower / ci_upper at the curve's own fp values.
inline void attach_ci(FrocCurve& curve, const std::vector<ScanHits>& scans, std::size_t n_resamples,
                      std::uint64_t seed) {
  std::vector<double> grid;
  for (const auto& p : curve.points) grid.push_back(p.fp_per_scan);
  const auto band = bootstrap_ci(scans, grid, n_resamples, seed);
  curve.ci_lower = band.lower;
  curve.ci_upper = band.upper;
  // A point can sit below the interpolated curve at its own fp when several
  // thresholds share that fp; keep the pointwise ordering.
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    curve.ci_lower[i] = std::min(curve.ci_lower[i], curve.points[i].sensitivity);
    curve.ci_upper[i] = std::max(curve.ci_upper[i], curve.points[i].sensitivity);
  }
}

}  // namespace runet
