#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "runet/model/arch.hpp"
#include "runet/optim/adam.hpp"
#include "runet/optim/schedule.hpp"

namespace runet {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Settings shared by all commands. Defaults are the reference training
/// recipe; batch_size 0 picks 2 for inputs of 256 px and up, 16 below.
struct RunConfig {
  // architecture
  ArchKind arch = ArchKind::run;
  std::size_t base_channels = 32;
  std::size_t depth = 5;
  std::size_t input_size = 512;
  std::size_t upconv_kernel = 3;
  double dropout = 0.2;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  // optimisation
  std::size_t epochs = 60;
  std::size_t batch_size = 0;
  double lr_initial = 0.01;
  double lr_mid = 0.001;
  double lr_final = 0.0001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_epsilon = 1e-8;
  bool adam_literal_v = false;
  double dice_smooth = 1.0;
  std::uint64_t seed = 0;
  std::int64_t fold = -1;  // held-out fold; -1 trains and validates on everything
  std::size_t n_folds = 10;
  std::size_t checkpoint_every = 1;  // keep epoch_NNN.ckpt every this many epochs; 0 keeps only last.ckpt
  // data
  std::size_t count = 16;
  std::size_t nodules_per_image = 1;
  bool apply_lung_mask = true;
  std::size_t negatives_per_positive = 1;
  // evaluation
  double threshold = 0.5;
  std::size_t bootstrap_resamples = 1000;
  // paths
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string checkpoint;
  std::string predictions_dir;
  std::string mhd;
  std::string annotations;

  ArchSpec arch_spec() const {
    ArchSpec s;
    s.kind = arch;
    s.base_channels = base_channels;
    s.depth = depth;
    s.input_h = s.input_w = input_size;
    s.upconv_kernel = upconv_kernel;
    s.dropout = dropout;
    s.bn_momentum = bn_momentum;
    s.bn_eps = bn_eps;
    return s;
  }

  std::size_t effective_batch_size() const {
    if (batch_size > 0) return batch_size;
    return input_size >= 256 ? 2 : 16;
  }

  AdamHyper adam_hyper(double eta) const {
    AdamHyper h;
    h.eta = eta;
    h.beta1 = adam_beta1;
    h.beta2 = adam_beta2;
    h.epsilon = adam_epsilon;
    h.literal_first_moment_in_v = adam_literal_v;
    return h;
  }

  LrSchedule schedule() const { return LrSchedule::stepped(epochs, lr_initial, lr_mid, lr_final); }

  void validate() const {
    arch_spec().validate();
    if (epochs > 0) schedule();
    AdamHyper h = adam_hyper(lr_initial);
    h.validate();
    if (dice_smooth < 0.0) throw ConfigError("dice_smooth must be >= 0");
    if (n_folds == 0) throw ConfigError("n_folds must be positive");
    if (fold >= static_cast<std::int64_t>(n_folds)) throw ConfigError("fold must be < n_folds");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in (0,1]");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

template <typename F>
void for_each_field(RunConfig& c, F&& f) {
  f("arch", c.arch);
  f("base_channels", c.base_channels);
  f("depth", c.depth);
  f("input_size", c.input_size);
  f("upconv_kernel", c.upconv_kernel);
  f("dropout", c.dropout);
  f("bn_momentum", c.bn_momentum);
  f("bn_eps", c.bn_eps);
  f("epochs", c.epochs);
  f("batch_size", c.batch_size);
  f("lr_initial", c.lr_initial);
  f("lr_mid", c.lr_mid);
  f("lr_final", c.lr_final);
  f("adam_beta1", c.adam_beta1);
  f("adam_beta2", c.adam_beta2);
  f("adam_epsilon", c.adam_epsilon);
  f("adam_literal_v", c.adam_literal_v);
  f("dice_smooth", c.dice_smooth);
  f("seed", c.seed);
  f("fold", c.fold);
  f("n_folds", c.n_folds);
  f("checkpoint_every", c.checkpoint_every);
  f("count", c.count);
  f("nodules_per_image", c.nodules_per_image);
  f("apply_lung_mask", c.apply_lung_mask);
  f("negatives_per_positive", c.negatives_per_positive);
  f("threshold", c.threshold);
  f("bootstrap_resamples", c.bootstrap_resamples);
  f("data_dir", c.data_dir);
  f("out_dir", c.out_dir);
  f("checkpoint", c.checkpoint);
  f("predictions_dir", c.predictions_dir);
  f("mhd", c.mhd);
  f("annotations", c.annotations);
}

inline std::string format_value(ArchKind v) { return std::string(to_string(v)); }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
template <typename I>
  requires std::is_integral_v<I>
std::string format_value(I v) {
  return std::to_string(v);
}

inline void parse_value(std::string_view key, std::string_view s, ArchKind& v) {
  try {
    v = parse_arch_kind(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}
inline void parse_value(std::string_view key, std::string_view s, bool& v) {
  if (s == "true") {
    v = true;
  } else if (s == "false") {
    v = false;
  } else {
    throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(s) + "'");
  }
}
inline void parse_value(std::string_view, std::string_view s, std::string& v) { v = std::string(s); }
template <typename N>
  requires std::is_arithmetic_v<N>
void parse_value(std::string_view key, std::string_view s, N& v) {
  N out{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw ConfigError(std::string(key) + ": invalid value '" + std::string(s) + "'");
  }
  v = out;
}

}  // namespace detail

inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  detail::for_each_field(const_cast<RunConfig&>(c),
                         [&](const char* k, const auto& v) { os << k << " = " << detail::format_value(v) << "\n"; });
  return os.str();
}

/// Applies one `key = value` setting; unknown keys are errors.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  bool found = false;
  detail::for_each_field(c, [&](const char* k, auto& v) {
    if (key == k) {
      detail::parse_value(key, value, v);
      found = true;
    }
  });
  if (!found) throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Parses `key = value` lines on top of `base`. Blank lines and lines
/// starting with '#' are skipped.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::size_t pos = 0, lineno = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
      return s;
    };
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

}  // namespace runet
