#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "runet/eval/froc.hpp"

namespace runet {

namespace detail {

inline std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// threshold,fp_per_scan,sensitivity,ci_lo,ci_hi; one row per curve point.
inline void write_froc_csv(std::ostream& out, const FrocCurve& c) {
  out << "threshold,fp_per_scan,sensitivity,ci_lo,ci_hi\n";
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    out << detail::fmt(p.threshold, "%.9g") << "," << detail::fmt(p.fp_per_scan, "%.9g") << ","
        << detail::fmt(p.sensitivity, "%.9g") << ","
        << (i < c.ci_lower.size() ? detail::fmt(c.ci_lower[i], "%.9g") : "") << ","
        << (i < c.ci_upper.size() ? detail::fmt(c.ci_upper[i], "%.9g") : "") << "\n";
  }
}

/// Sensitivity and band on a fixed fp grid.
struct FrocSummary {
  std::vector<double> fp;
  std::vector<double> sensitivity;
  ConfidenceBand band;
};

inline FrocSummary summarize(const FrocCurve& c, const std::vector<ScanHits>& scans, const std::vector<double>& grid,
                             std::size_t n_resamples, std::uint64_t seed) {
  FrocSummary s;
  s.fp = grid;
  for (double f : grid) s.sensitivity.push_back(sensitivity_at(c, f));
  s.band = bootstrap_ci(scans, grid, n_resamples, seed);
  return s;
}

inline void write_froc_summary_csv(std::ostream& out, const FrocSummary& s) {
  out << "fp_per_scan,sensitivity,ci_lo,ci_hi\n";
  double mean = 0.0;
  for (std::size_t i = 0; i < s.fp.size(); ++i) {
    out << detail::fmt(s.fp[i], "%g") << "," << detail::fmt(s.sensitivity[i]) << "," << detail::fmt(s.band.lower[i])
        << "," << detail::fmt(s.band.upper[i]) << "\n";
    mean += s.sensitivity[i];
  }
  if (!s.fp.empty()) out << "mean," << detail::fmt(mean / static_cast<double>(s.fp.size())) << ",,\n";
}

/// Line plot: log2 fp axis from 1/8 to 8, sensitivity 0..1, estimate solid,
/// confidence bounds dashed.
inline void write_froc_svg(std::ostream& out, const FrocCurve& c, const std::vector<ScanHits>& scans,
                           std::size_t n_resamples, std::uint64_t seed, const std::string& title = "FROC") {
  constexpr double W = 640, H = 480, L = 70, R = 20, T = 40, B = 60;
  const double lo = std::log2(0.125), hi = std::log2(8.0);
  std::vector<double> grid;
  for (int i = 0; i <= 96; ++i) grid.push_back(std::exp2(lo + (hi - lo) * i / 96.0));
  std::vector<double> est;
  for (double f : grid) est.push_back(sensitivity_at(c, f));
  const ConfidenceBand band = bootstrap_ci(scans, grid, n_resamples, seed);
  auto px = [&](double fp) { return L + (std::log2(fp) - lo) / (hi - lo) * (W - L - R); };
  auto py = [&](double s) { return T + (1.0 - s) * (H - T - B); };
  auto poly = [&](const std::vector<double>& ys, const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < grid.size(); ++i) out << detail::fmt(px(grid[i]), "%.2f") << "," << detail::fmt(py(ys[i]), "%.2f") << " ";
    out << "\"/>\n";
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  for (double f : standard_fp_grid()) {
    out << "<line x1=\"" << detail::fmt(px(f), "%.2f") << "\" y1=\"" << T << "\" x2=\"" << detail::fmt(px(f), "%.2f")
        << "\" y2=\"" << H - B << "\" stroke=\"#ddd\"/>\n"
        << "<text x=\"" << detail::fmt(px(f), "%.2f") << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
        << detail::fmt(f, "%g") << "</text>\n";
  }
  for (int i = 0; i <= 10; ++i) {
    const double s = i / 10.0;
    out << "<line x1=\"" << L << "\" y1=\"" << detail::fmt(py(s), "%.2f") << "\" x2=\"" << W - R << "\" y2=\""
        << detail::fmt(py(s), "%.2f") << "\" stroke=\"#eee\"/>\n"
        << "<text x=\"" << L - 8 << "\" y=\"" << detail::fmt(py(s) + 4, "%.2f") << "\" text-anchor=\"end\">"
        << detail::fmt(s, "%.1f") << "</text>\n";
  }
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  poly(band.lower, "stroke=\"#1f77b4\" stroke-dasharray=\"6,4\"");
  poly(band.upper, "stroke=\"#1f77b4\" stroke-dasharray=\"6,4\"");
  poly(est, "stroke=\"#1f77b4\" stroke-width=\"2\"");
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">Average number of false positives per scan</text>\n"
      << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">Sensitivity</text>\n"
      << "<text x=\"" << W - R - 8 << "\" y=\"" << H - B - 12 << "\" text-anchor=\"end\">solid: estimate; dashed: 95% bootstrap CI</text>\n"
      << "</svg>\n";
}

}  // namespace runet
