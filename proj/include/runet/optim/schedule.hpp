#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace runet {

/// Piecewise-constant learning rate. boundaries[i] = (first epoch, rate).
struct LrSchedule {
  std::size_t total_epochs = 60;
  std::vector<std::pair<std::size_t, double>> boundaries{{0, 0.01}, {10, 0.001}, {30, 0.0001}};

  /// 0.01 from epoch 0, 0.001 from total/6 (epoch 10 of 60), 0.0001 from
  /// total/2. Boundaries that would not be strictly increasing are dropped.
  static LrSchedule stepped(std::size_t total_epochs, double initial = 0.01, double mid = 0.001,
                          double late = 0.0001) {
    LrSchedule s;
    s.total_epochs = total_epochs;
    s.boundaries = {{0, initial}};
    for (auto [epoch, rate] : {std::pair{total_epochs / 6, mid}, std::pair{total_epochs / 2, late}}) {
      if (epoch > s.boundaries.back().first) s.boundaries.emplace_back(epoch, rate);
    }
    s.validate();
    return s;
  }

  void validate() const {
    if (boundaries.empty() || boundaries.front().first != 0) {
      throw std::invalid_argument("lr schedule: first boundary must be epoch 0");
    }
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
      if (boundaries[i].first <= boundaries[i - 1].first) {
        throw std::invalid_argument("lr schedule: boundary epochs must increase");
      }
      if (!(boundaries[i].second < boundaries[i - 1].second)) {
        throw std::invalid_argument("lr schedule: rates must strictly decrease");
      }
    }
    if (!(boundaries.front().second > 0.0)) throw std::invalid_argument("lr schedule: rates must be positive");
  }
};

inline double lr_at(const LrSchedule& s, std::size_t epoch) {
  if (epoch >= s.total_epochs) {
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                            std::to_string(s.total_epochs) + ")");
  }
  double rate = s.boundaries.front().second;
  for (const auto& [start, r] : s.boundaries)
    if (epoch >= start) rate = r;
  return rate;
}

}  // namespace runet
