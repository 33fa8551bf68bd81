#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace runet {

/// The three encoder/decoder variants compared in the RUN experiments.
///   unet      : plain conv pairs in encoder and decoder
///   dual_path : residual units in encoder and decoder
///   run       : residual units in the encoder, plain conv pairs in the decoder
enum class ArchKind { unet, dual_path, run };

inline std::string_view to_string(ArchKind k) {
  switch (k) {
    case ArchKind::unet: return "unet";
    case ArchKind::dual_path: return "dual_path";
    case ArchKind::run: return "run";
  }
  return "?";
}

inline ArchKind parse_arch_kind(std::string_view s) {
  if (s == "unet") return ArchKind::unet;
  if (s == "dual_path") return ArchKind::dual_path;
  if (s == "run") return ArchKind::run;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "' (expected unet, dual_path or run)");
}

struct ArchSpec {
  ArchKind kind = ArchKind::run;
  std::size_t base_channels = 32;
  std::size_t depth = 5;
  std::size_t input_h = 512;
  std::size_t input_w = 512;
  std::size_t in_channels = 1;
  std::size_t upconv_kernel = 3;
  double dropout = 0.2;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  /// Channel width of encoder stage i (and of the decoder stage it merges with).
  std::size_t width(std::size_t stage) const { return base_channels << stage; }

  bool encoder_residual() const { return kind != ArchKind::unet; }
  bool decoder_residual() const { return kind == ArchKind::dual_path; }

  void validate() const {
    if (base_channels == 0) throw std::invalid_argument("arch: base_channels must be positive");
    if (depth == 0 || depth > 16) throw std::invalid_argument("arch: depth must be in [1,16]");
    if (in_channels == 0) throw std::invalid_argument("arch: in_channels must be positive");
    if (upconv_kernel != 2 && upconv_kernel != 3) throw std::invalid_argument("arch: upconv_kernel must be 2 or 3");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("arch: dropout must be in [0,1)");
    const std::size_t div = std::size_t{1} << (depth - 1);
    if (input_h == 0 || input_w == 0 || input_h % div != 0 || input_w % div != 0) {
      throw std::invalid_argument("arch: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                  " is not divisible by 2^(depth-1) = " + std::to_string(div));
    }
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

}  // namespace runet
