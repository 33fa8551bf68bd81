#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>

#include "runet/tensor.hpp"

namespace runet {

/// Default central-difference step: 1e-3 for 32-bit floats, 1e-5 for doubles.
template <typename T>
constexpr double default_fd_eps() {
  return std::is_same_v<T, float> ? 1e-3 : 1e-5;
}

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares an analytic gradient of a scalar function against central
/// differences, element by element. The relative error of one element is
/// |a - n| / max(|a|, |n|, 1e-6).
///
/// f must be deterministic: it is evaluated 2*numel(x) times on perturbed
/// copies of x.
template <typename T, typename F>
FiniteDiffReport finite_diff_report(F&& f, const BasicTensor<T>& x, const BasicTensor<T>& analytic,
                                    double eps = default_fd_eps<T>()) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  require_same_shape(x, analytic, "finite_diff_check");
  if (!std::isfinite(f(x))) throw std::domain_error("finite_diff_check: f(x) is non-finite");
  FiniteDiffReport report;
  BasicTensor<T> probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    probe[i] = static_cast<T>(static_cast<double>(orig) + eps);
    const double fp = f(static_cast<const BasicTensor<T>&>(probe));
    probe[i] = static_cast<T>(static_cast<double>(orig) - eps);
    const double fm = f(static_cast<const BasicTensor<T>&>(probe));
    // Use the step actually representable in T.
    const double h = static_cast<double>(static_cast<T>(static_cast<double>(orig) + eps)) -
                     static_cast<double>(static_cast<T>(static_cast<double>(orig) - eps));
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error("finite_diff_check: f is non-finite at element " + std::to_string(i));
    }
    const double numeric = (fp - fm) / h;
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error || i == 0) {
      report = {rel, i, a, numeric};
    }
  }
  return report;
}

template <typename T, typename F>
double finite_diff_check(F&& f, const BasicTensor<T>& x, const BasicTensor<T>& analytic,
                         double eps = default_fd_eps<T>()) {
  return finite_diff_report(std::forward<F>(f), x, analytic, eps).max_rel_error;
}

}  // namespace runet
