#pragma once

#include <stdexcept>
#include <vector>

#include "runet/tensor.hpp"

namespace runet {

namespace detail {

inline std::size_t batch_size_of(const Shape& s) { return s.size() >= 2 ? s[0] : 1; }

template <typename T>
void require_binary(const BasicTensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (v != T{0} && v != T{1}) throw std::invalid_argument(std::string(op) + ": target must be binary (0/1)");
  }
}

struct DiceSums {
  double inter = 0.0, pred = 0.0, target = 0.0;
};

template <typename T>
std::vector<DiceSums> dice_sums(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  const std::size_t n = batch_size_of(pred.shape());
  const std::size_t len = pred.numel() / n;
  std::vector<DiceSums> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto& d = out[s];
    for (std::size_t i = s * len; i < (s + 1) * len; ++i) {
      const double p = static_cast<double>(pred[i]);
      const double t = static_cast<double>(target[i]);
      d.inter += p * t;
      d.pred += p;
      d.target += t;
    }
  }
  return out;
}

inline double dice_from_sums(const DiceSums& d, double smooth) {
  const double den = d.pred + d.target + smooth;
  // Empty prediction against an empty target with smooth = 0 counts as a perfect match.
  if (den == 0.0) return 1.0;
  return (2.0 * d.inter + smooth) / den;
}

}  // namespace detail

/// Soft dice (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth), computed per
/// sample (leading axis) and averaged over the batch.
template <typename T>
double soft_dice(const BasicTensor<T>& pred, const BasicTensor<T>& target, double smooth = 1.0) {
  require_same_shape(pred, target, "soft_dice");
  if (smooth < 0.0) throw std::invalid_argument("soft_dice: smooth must be >= 0");
  detail::require_binary(target, "soft_dice");
  const auto sums = detail::dice_sums(pred, target);
  double total = 0.0;
  for (const auto& d : sums) total += detail::dice_from_sums(d, smooth);
  return total / static_cast<double>(sums.size());
}

/// Per-sample soft dice values.
template <typename T>
std::vector<double> soft_dice_per_sample(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                                         double smooth = 1.0) {
  require_same_shape(pred, target, "soft_dice");
  const auto sums = detail::dice_sums(pred, target);
  std::vector<double> out;
  for (const auto& d : sums) out.push_back(detail::dice_from_sums(d, smooth));
  return out;
}

template <typename T>
struct DiceLoss {
  double loss = 0.0;  // 1 - mean dice
  double dice = 0.0;
  BasicTensor<T> grad;  // d loss / d pred
};

/// loss = 1 - soft_dice with its analytic gradient:
///   d loss / d p_i = -(1/N) * (2 t_i D - (2I + s)) / D^2,   D = sum p + sum t + s
template <typename T>
DiceLoss<T> dice_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, double smooth = 1.0) {
  require_same_shape(pred, target, "dice_loss");
  if (smooth < 0.0) throw std::invalid_argument("dice_loss: smooth must be >= 0");
  detail::require_binary(target, "dice_loss");
  const auto sums = detail::dice_sums(pred, target);
  const std::size_t n = sums.size();
  const std::size_t len = pred.numel() / n;
  DiceLoss<T> out;
  out.grad = BasicTensor<T>(pred.shape());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto& d = sums[s];
    total += detail::dice_from_sums(d, smooth);
    const double den = d.pred + d.target + smooth;
    if (den == 0.0) continue;
    const double num = 2.0 * d.inter + smooth;
    const double scale = -1.0 / (static_cast<double>(n) * den * den);
    for (std::size_t i = s * len; i < (s + 1) * len; ++i) {
      out.grad[i] = static_cast<T>(scale * (2.0 * static_cast<double>(target[i]) * den - num));
    }
  }
  out.dice = total / static_cast<double>(n);
  out.loss = 1.0 - out.dice;
  return out;
}

}  // namespace runet
