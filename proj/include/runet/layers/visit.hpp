#pragma once

#include <string>
#include <string_view>

#include "runet/layers/batchnorm.hpp"
#include "runet/layers/conv.hpp"
#include "runet/layers/residual.hpp"

namespace runet {

inline std::string join_name(std::string_view prefix, std::string_view leaf) {
  std::string out(prefix);
  if (!out.empty()) out += '.';
  out += leaf;
  return out;
}

// Learnable tensors, in a fixed order. f(name, tensor).

template <typename T, typename F>
void visit_params(ConvParams<T>& p, std::string_view prefix, F&& f) {
  f(join_name(prefix, "weight"), p.weights);
  f(join_name(prefix, "bias"), p.bias);
}

template <typename T, typename F>
void visit_params(BnParams<T>& p, std::string_view prefix, F&& f) {
  f(join_name(prefix, "gamma"), p.gamma);
  f(join_name(prefix, "beta"), p.beta);
}

template <typename T, typename F>
void visit_params(ResidualUnitParams<T>& u, std::string_view prefix, F&& f) {
  visit_params(u.bn1, join_name(prefix, "bn1"), f);
  visit_params(u.conv1, join_name(prefix, "conv1"), f);
  visit_params(u.bn2, join_name(prefix, "bn2"), f);
  visit_params(u.conv2, join_name(prefix, "conv2"), f);
  if (u.shortcut) visit_params(*u.shortcut, join_name(prefix, "shortcut"), f);
}

// Non-learnable state (BN running statistics).

template <typename T, typename F>
void visit_buffers(ConvParams<T>&, std::string_view, F&&) {}

template <typename T, typename F>
void visit_buffers(BnParams<T>& p, std::string_view prefix, F&& f) {
  f(join_name(prefix, "running_mean"), p.running_mean);
  f(join_name(prefix, "running_var"), p.running_var);
}

template <typename T, typename F>
void visit_buffers(ResidualUnitParams<T>& u, std::string_view prefix, F&& f) {
  visit_buffers(u.bn1, join_name(prefix, "bn1"), f);
  visit_buffers(u.bn2, join_name(prefix, "bn2"), f);
}

}  // namespace runet
