#pragma once

#include "meda/common.hpp"
#include "meda/errors.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace meda {

/// Class-conditional diagonal Gaussian mixture over the latent space.
///
/// Row k of `means` and `log_variances` belongs to class label k. Variances are
/// kept as natural logs so gradient updates can never make them negative; the
/// floor kVarianceFloor is enforced on construction.
class GMMParams {
 public:
  GMMParams() = default;
  GMMParams(Matrix means, Matrix log_variances);

  /// Zero means, unit variances.
  static GMMParams standard(int class_count, int dim);

  int class_count() const { return static_cast<int>(means_.rows()); }
  int dim() const { return static_cast<int>(means_.cols()); }

  const Matrix& means() const { return means_; }
  const Matrix& log_variances() const { return log_variances_; }
  Matrix variances() const { return log_variances_.array().exp().matrix(); }

  // Mutable access for optimizers; call clamp() after mutation.
  Matrix& means_mut() { return means_; }
  Matrix& log_variances_mut() { return log_variances_; }
  void clamp();

  /// Throws InputError if any entry is non-finite or below the variance floor.
  void validate() const;

  bool operator==(const GMMParams&) const = default;

 private:
  Matrix means_;
  Matrix log_variances_;
};

struct ClassGaussian {
  Vector mean;
  Vector variance;
};

struct LatentPopulation {
  Matrix features;
  Labels labels;

  std::size_t size() const { return labels.size(); }
  void validate(int class_count) const;
  /// Members whose indices are listed, in the given order.
  LatentPopulation subset(std::span<const std::size_t> indices) const;
};

LatentPopulation sample(const GMMParams& params, std::span<const int> counts, Rng& rng);
LatentPopulation sample(const GMMParams& params, std::span<const int> counts, std::uint64_t seed);

/// Mean and population variance (divide by count) of the members labelled class_k.
ClassGaussian estimate_class_gaussian(const LatentPopulation& pop, int class_k);

/// Convex blend gamma * quality + (1 - gamma) * diversity of both moments.
ClassGaussian evolve_update(const ClassGaussian& quali, const ClassGaussian& diver, double gamma);

// GMM file: "MLGMM01" magic, u32 version, u64 K, u64 h, then row-major
// little-endian doubles for the means followed by the log-variances.
void save_gmm(const GMMParams& params, const std::filesystem::path& path);
GMMParams load_gmm(const std::filesystem::path& path);
std::vector<char> encode_gmm(const GMMParams& params);
GMMParams decode_gmm(std::span<const char> bytes);

// ---------------------------------------------------------------------------
// Basic Gaussian EDA (reference implementation of the classic procedure).

struct BasicEDAConfig {
  int population_size = 100;
  int max_iterations = 100;
  double superior_rate = 0.3;
  double blend = 0.7;
  std::vector<std::pair<double, double>> init_bounds;  // one [lo, hi] per dimension

  void validate() const;
};

class FitnessError : public Error {
 public:
  FitnessError(const std::string& what, Vector offending)
      : Error("FitnessError: " + what), offending_(std::move(offending)) {}
  const Vector& offending() const { return offending_; }

 private:
  Vector offending_;
};

struct EDAGeneration {
  double mean_fitness = 0.0;
  double best_fitness = 0.0;  // best-ever up to and including this generation
  ClassGaussian population_stats;
  ClassGaussian superior_stats;
  ClassGaussian blended;  // distribution used to sample the next generation
};

struct EDAResult {
  Vector best_solution;
  double best_fitness = 0.0;
  std::vector<EDAGeneration> history;  // one entry per evaluated generation
};

using FitnessFn = std::function<double(const Vector&)>;

/// Maximises `fitness` with the truncation-selection Gaussian EDA.
EDAResult run_basic_eda(const FitnessFn& fitness, const BasicEDAConfig& cfg, std::uint64_t seed);

}  // namespace meda
