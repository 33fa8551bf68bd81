#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "runet/layers/visit.hpp"
#include "runet/model/arch.hpp"
#include "runet/model/network.hpp"

namespace runet {

struct ParamEntry {
  std::string name;
  Shape shape;
  std::size_t count;
};

namespace detail {

inline void layout_conv(std::vector<ParamEntry>& out, const std::string& prefix, std::size_t d0, std::size_t d1,
                        std::size_t k, std::size_t bias) {
  out.push_back({join_name(prefix, "weight"), {d0, d1, k, k}, d0 * d1 * k * k});
  out.push_back({join_name(prefix, "bias"), {bias}, bias});
}

inline void layout_bn(std::vector<ParamEntry>& out, const std::string& prefix, std::size_t c) {
  out.push_back({join_name(prefix, "gamma"), {c}, c});
  out.push_back({join_name(prefix, "beta"), {c}, c});
}

inline void layout_residual(std::vector<ParamEntry>& out, const std::string& prefix, std::size_t cin,
                            std::size_t cout) {
  layout_bn(out, join_name(prefix, "bn1"), cin);
  layout_conv(out, join_name(prefix, "conv1"), cout, cin, 3, cout);
  layout_bn(out, join_name(prefix, "bn2"), cout);
  layout_conv(out, join_name(prefix, "conv2"), cout, cout, 3, cout);
  if (cin != cout) layout_conv(out, join_name(prefix, "shortcut"), cout, cin, 1, cout);
}

inline void layout_conv_block(std::vector<ParamEntry>& out, const std::string& prefix, std::size_t cin,
                              std::size_t cout, bool bn) {
  layout_conv(out, join_name(prefix, "conv1"), cout, cin, 3, cout);
  if (bn) layout_bn(out, join_name(prefix, "bn1"), cout);
  layout_conv(out, join_name(prefix, "conv2"), cout, cout, 3, cout);
  if (bn) layout_bn(out, join_name(prefix, "bn2"), cout);
}

}  // namespace detail

/// Learnable tensors of the network `spec` describes, in registry order,
/// computed from shapes alone (nothing is allocated).
inline std::vector<ParamEntry> param_layout(const ArchSpec& spec) {
  spec.validate();
  std::vector<ParamEntry> out;
  std::size_t cin = spec.in_channels;
  for (std::size_t i = 0; i < spec.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    if (spec.encoder_residual()) {
      detail::layout_residual(out, p, cin, spec.width(i));
    } else {
      detail::layout_conv_block(out, p, cin, spec.width(i), false);
    }
    cin = spec.width(i);
  }
  for (std::size_t j = spec.depth - 1; j-- > 0;) {
    const std::string p = "dec" + std::to_string(j);
    const std::size_t w = spec.width(j);
    detail::layout_conv(out, join_name(p, "upconv"), cin, w, spec.upconv_kernel, w);
    if (spec.decoder_residual()) {
      detail::layout_residual(out, p, 2 * w, w);
    } else {
      detail::layout_conv_block(out, p, 2 * w, w, true);
    }
    cin = w;
  }
  if (spec.decoder_residual()) detail::layout_bn(out, "head_bn", cin);
  detail::layout_conv(out, "head", 1, cin, 1, 1);
  return out;
}

/// Total learnable scalars: conv weights and biases plus BN gamma/beta.
/// BN running statistics are not counted.
inline std::size_t param_count(const ArchSpec& spec) {
  std::size_t total = 0;
  for (const auto& e : param_layout(spec)) total += e.count;
  return total;
}

template <typename T>
std::size_t param_count(const Network<T>& net) {
  return net.param_count();
}

/// Published trainable-parameter totals for the default configuration
/// (base 32, depth 5, 512x512 input).
inline std::size_t reference_param_count(ArchKind k) {
  switch (k) {
    case ArchKind::run: return 8'812'837;
    case ArchKind::unet: return 8'631'841;
    case ArchKind::dual_path: return 8'993'157;
  }
  return 0;
}

struct ParamReconciliation {
  std::size_t counted = 0;
  std::size_t reference = 0;
  double relative_deviation = 0.0;  // (counted - reference) / reference
  std::string table;
};

/// Per-layer table with stage subtotals, per-category subtotals and the
/// comparison against the reference total.
inline ParamReconciliation reconcile_param_count(const ArchSpec& spec) {
  const auto layout = param_layout(spec);
  ParamReconciliation r;
  r.reference = reference_param_count(spec.kind);
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %-18s %12s\n", "tensor", "shape", "count");
  os << "# architecture " << to_string(spec.kind) << ", base " << spec.base_channels << ", depth " << spec.depth
     << ", input " << spec.input_h << "x" << spec.input_w << ", upconv " << spec.upconv_kernel << "x"
     << spec.upconv_kernel << "\n"
     << line;

  std::vector<std::pair<std::string, std::size_t>> stages;
  std::map<std::string, std::size_t> categories;
  for (const auto& e : layout) {
    std::snprintf(line, sizeof line, "%-28s %-18s %12zu\n", e.name.c_str(), to_string(e.shape).c_str(), e.count);
    os << line;
    r.counted += e.count;
    const std::string stage = e.name.substr(0, e.name.find('.'));
    if (stages.empty() || stages.back().first != stage) stages.emplace_back(stage, 0);
    stages.back().second += e.count;

    std::string cat;
    if (e.name.find(".upconv.") != std::string::npos) {
      cat = "upconv weight+bias";
    } else if (e.name.find(".shortcut.") != std::string::npos) {
      cat = "1x1 projection shortcut";
    } else if (e.name.ends_with(".gamma") || e.name.ends_with(".beta")) {
      cat = "BN gamma+beta";
    } else if (e.name.starts_with("head.")) {
      cat = "final 1x1 conv";
    } else if (e.name.ends_with(".bias")) {
      cat = "3x3 conv bias";
    } else {
      cat = "3x3 conv weight";
    }
    categories[cat] += e.count;
  }
  os << "# stage subtotals\n";
  for (const auto& [name, n] : stages) {
    std::snprintf(line, sizeof line, "%-28s %31zu\n", name.c_str(), n);
    os << line;
  }
  os << "# category subtotals\n";
  for (const auto& [name, n] : categories) {
    std::snprintf(line, sizeof line, "%-28s %31zu\n", name.c_str(), n);
    os << line;
  }
  r.relative_deviation = r.reference == 0 ? 0.0
                                          : (static_cast<double>(r.counted) - static_cast<double>(r.reference)) /
                                                static_cast<double>(r.reference);
  std::snprintf(line, sizeof line, "total %zu, reference %zu, deviation %+.3f%%\n", r.counted, r.reference,
                100.0 * r.relative_deviation);
  os << line;
  r.table = os.str();
  return r;
}

}  // namespace runet
