#pragma once

#include "meda/datasets.hpp"
#include "meda/gm_distribution.hpp"
#include "meda/image_hash.hpp"
#include "meda/networks.hpp"
#include "meda/training_phases.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace meda {

struct EvolutionConfig {
  int pop_per_class = 64;
  double selection_rate = 0.5;
  double blend = 0.7;
  int max_iterations = 10;
  int real_batch_per_class = 16;
  int outer_iterations = 2;

  void validate() const;
};

struct EvolutionIteration {
  int outer = 0;
  int iteration = 0;
  std::size_t feat4 = 0, gm1 = 0, gm2 = 0, spop = 0;
  double latent_survival = 0.0;  // |GM_1| / |FEAT_4|
  double image_survival = 0.0;   // |GM_2| / |GM_1|
  // Fitness means are averaged per class first, then across the classes in GM_2,
  // so the Spop <= GM_2 ordering holds under per-class selection.
  double mean_fitness_gm2 = 0.0;
  double mean_fitness_spop = 0.0;
  std::vector<int> class_feat4, class_gm1, class_gm2, class_spop;
  bool updated = false;
  std::string event;  // why an iteration kept the previous distribution
};

struct EvolutionTrace {
  std::vector<EvolutionIteration> iterations;

  std::string to_csv() const;
};

/// Scores rows of a batch; the predicted class is the row argmax.
using Classifier = std::function<Matrix(const Matrix&)>;
Classifier as_classifier(const Network& net);

/// Indices of rows whose argmax prediction equals their label, in order.
std::vector<std::size_t> select_correct(const Matrix& scores, const Labels& labels);

LatentPopulation quality_filter_latents(const LatentPopulation& pop, const Classifier& latent_classifier);
LatentPopulation quality_filter_latents(const LatentPopulation& pop, const ModelQuartet& models);
LabeledImageSet quality_filter_images(const LabeledImageSet& images, const Classifier& image_classifier);
LabeledImageSet quality_filter_images(const LabeledImageSet& images, const ModelQuartet& models);

struct DiversitySelection {
  LabeledImageSet selected;
  std::vector<std::size_t> indices;  // into the quality pool, class by class, ascending fitness
  std::vector<double> fitness;       // per quality-pool member
  // Matching hash bits summed over the class references; fitness is
  // agreement / scale with scale = 64 * reference count.
  std::vector<long long> agreement;
  std::vector<long long> scale;
};

/// Fitness of a synthesized image = mean hash similarity to the real images of
/// its class. Per class, keeps the ceil(selection_rate * count) lowest-fitness
/// members, ties broken by position.
DiversitySelection diversity_select(const LabeledImageSet& quali, const LabeledImageSet& real, double selection_rate);

/// Per class, blends the empirical Gaussians of the quality pool and the
/// diversity pool. Classes missing from either pool keep the row of `prev`.
GMMParams evolve_distribution(const LatentPopulation& gm2, const LatentPopulation& spop, const GMMParams& prev,
                              double gamma);

struct MedaResult {
  GMMParams gmm;
  EvolutionTrace trace;
};

MedaResult run_meda(const ModelQuartet& models, const GMMParams& init, const LabeledImageSet& real,
                    const EvolutionConfig& cfg, Rng& rng, int outer_index = 0);

// --- full program ------------------------------------------------------------------

struct FullTrainingConfig {
  ArchitectureConfig arch;
  PhaseWeights weights;
  LGMConfig lgm;
  TrainConfig train;
  EvolutionConfig evolution;
  std::vector<int> minority_classes;
};

struct FullTrainingResult {
  ModelQuartet models;
  GMMParams gmm_init;
  GMMParams gmm_opti;
  LossTrace loss_trace;
  EvolutionTrace evolution_trace;
  std::vector<int> phase_sequence;
};

struct ArtifactPaths {
  std::filesystem::path models, gmm_init, gmm_opti, loss_trace, evolution_trace;

  static ArtifactPaths in(const std::filesystem::path& run_dir);
};

/// Phase 1 once, then `outer_iterations` rounds of phases 2, 3 and 4. When
/// `artifacts` is set every artifact is written there, including after a
/// divergence (which is rethrown).
FullTrainingResult run_full_training(const LabeledImageSet& train, int class_count, const FullTrainingConfig& cfg,
                                     const std::optional<ArtifactPaths>& artifacts = std::nullopt);

}  // namespace meda
