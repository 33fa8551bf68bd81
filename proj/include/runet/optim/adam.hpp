#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "runet/model/network.hpp"

namespace runet {

struct AdamHyper {
  double eta = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  /// Second-moment recurrence written with the previous *first* moment,
  /// v_t = beta2 * m_{t-1} + (1 - beta2) * g_t^2. Off by default; kept for
  /// comparison runs only. v may go negative in this mode, so the update
  /// uses sqrt(max(v_hat, 0)).
  bool literal_first_moment_in_v = false;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
    if (!(eta >= 0.0)) throw std::invalid_argument("adam: eta must be non-negative");
  }
};

template <typename T>
struct AdamState {
  Registry<T> m;
  Registry<T> v;
  std::uint64_t t = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<std::pair<std::string, BasicTensor<T>*>>& params) {
  AdamState<T> s;
  for (const auto& [name, p] : params) {
    s.m.push_back({name, BasicTensor<T>(p->shape())});
    s.v.push_back({name, BasicTensor<T>(p->shape())});
  }
  return s;
}

/// One Adam update over aligned registries:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   m_hat = m / (1-b1^t);  v_hat = v / (1-b2^t)
///   theta <- theta - eta * m_hat / (sqrt(v_hat) + eps)
/// t is incremented before bias correction. Per-element arithmetic is done in
/// double; moments are stored in T.
template <typename T>
void adam_step(const std::vector<std::pair<std::string, BasicTensor<T>*>>& params, const Registry<T>& grads,
               AdamState<T>& state, const AdamHyper& hyper) {
  hyper.validate();
  if (state.m.empty() && state.v.empty() && state.t == 0) state = make_adam_state(params);
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: registry sizes differ (params " + std::to_string(params.size()) +
                                ", grads " + std::to_string(grads.size()) + ", state " +
                                std::to_string(state.m.size()) + ")");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& name = params[k].first;
    if (grads[k].name != name || state.m[k].name != name || state.v[k].name != name) {
      throw std::invalid_argument("adam_step: registry misaligned at '" + name + "' (grad '" + grads[k].name + "')");
    }
    const Shape& sh = params[k].second->shape();
    if (grads[k].tensor.shape() != sh || state.m[k].tensor.shape() != sh || state.v[k].tensor.shape() != sh) {
      throw std::invalid_argument("adam_step: shape mismatch for '" + name + "'");
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    BasicTensor<T>& theta = *params[k].second;
    const BasicTensor<T>& g = grads[k].tensor;
    BasicTensor<T>& m = state.m[k].tensor;
    BasicTensor<T>& v = state.v[k].tensor;
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double m_prev = static_cast<double>(m[i]);
      const double mi = hyper.beta1 * m_prev + (1.0 - hyper.beta1) * gi;
      const double v_src = hyper.literal_first_moment_in_v ? m_prev : static_cast<double>(v[i]);
      const double vi = hyper.beta2 * v_src + (1.0 - hyper.beta2) * gi * gi;
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      const double step = hyper.eta * m_hat / (std::sqrt(std::max(v_hat, 0.0)) + hyper.epsilon);
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - step);
    }
  }
}

}  // namespace runet
