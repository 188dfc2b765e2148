#pragma once

#include "meda/datasets.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace meda {

struct SamplerConfig {
  int k_neighbors = 5;
  std::uint64_t seed = 0;
};

struct SamplerResult {
  LabeledImageSet set;
  std::vector<std::string> notes;
};

/// Random over-sampling: duplicates uniformly chosen members of each short class.
SamplerResult ros(const LabeledImageSet& train, std::uint64_t seed);

/// SMOTE on flattened pixels. Classes with <= k members fall back to ROS.
SamplerResult smote(const LabeledImageSet& train, const SamplerConfig& cfg);

/// ADASYN: SMOTE generation with the budget apportioned by neighbourhood difficulty.
SamplerResult adasyn(const LabeledImageSet& train, const SamplerConfig& cfg);

/// Indices of the k nearest rows to `query` among `candidates` (squared
/// Euclidean, ties broken by lower index). `query` itself is skipped.
std::vector<std::size_t> nearest_neighbors(const Matrix& rows, std::size_t query,
                                           const std::vector<std::size_t>& candidates, int k);

/// Largest-remainder apportionment of `total` proportional to `weights`
/// (sum > 0). Remainder ties go to the lower index.
std::vector<int> apportion(const std::vector<double>& weights, int total);

/// ADASYN difficulty r_i for each member of `label`: share of other-class
/// points among its k nearest neighbours in the whole set.
std::vector<double> adasyn_difficulty(const LabeledImageSet& train, int label, int k);

/// Synthetic count assigned to each member of `label` when `budget` samples are needed.
std::vector<int> adasyn_budgets(const LabeledImageSet& train, int label, int k, int budget, bool* uniform_fallback);

}  // namespace meda
