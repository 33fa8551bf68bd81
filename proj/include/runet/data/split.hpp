#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "runet/rng.hpp"

namespace runet {

/// Sorts the ids, shuffles them with `seed` and deals them round-robin into
/// k folds; each fold is returned sorted. Fold sizes differ by at most one.
inline std::vector<std::vector<std::string>> split_subsets(std::vector<std::string> ids, std::size_t k = 10,
                                                           std::uint64_t seed = 0) {
  if (k == 0) throw std::invalid_argument("split_subsets: k must be positive");
  if (k > ids.size()) {
    throw std::invalid_argument("split_subsets: k=" + std::to_string(k) + " exceeds " + std::to_string(ids.size()) +
                                " series");
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw std::invalid_argument("split_subsets: duplicate series id " + *std::adjacent_find(ids.begin(), ids.end()));
  }
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  std::vector<std::vector<std::string>> folds(k);
  for (std::size_t i = 0; i < ids.size(); ++i) folds[i % k].push_back(ids[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace runet
