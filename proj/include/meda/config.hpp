#pragma once

#include "meda/baselines.hpp"
#include "meda/datasets.hpp"
#include "meda/lgm_loss.hpp"
#include "meda/meda_evolution.hpp"
#include "meda/metrics.hpp"
#include "meda/networks.hpp"
#include "meda/training_phases.hpp"

#include <cstdint>
#include <string>

namespace meda {

struct DataConfig {
  std::string source = "glyphs";  // "glyphs" or "idx"
  std::string idx_images;
  std::string idx_labels;
  GlyphConfig glyphs;             // seed is derived from RunConfig::seed
  ImbalanceSpec imbalance;        // seed is derived from RunConfig::seed
};

struct FinalClassifierConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
};

/// Everything a run needs. Serialized as JSON; sub-seeds are all derived from
/// `seed` so one value pins the whole run.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string run_dir = "run";
  DataConfig data;
  ArchitectureConfig arch;
  PhaseWeights weights;
  LGMConfig lgm;
  TrainConfig train;  // seed is derived
  EvolutionConfig evolution;
  SamplerConfig sampler;  // seed is derived
  FinalClassifierConfig final_classifier;
  GMeanMode g_mean = GMeanMode::RecallSpecificity;

  /// Rejects negative weights, rates outside their ranges and inconsistent dimensions.
  void validate() const;

  std::uint64_t glyph_seed() const { return seed; }
  std::uint64_t split_seed() const { return seed + 1; }
  std::uint64_t train_seed() const { return seed + 2; }
  std::uint64_t sampler_seed() const { return seed + 3; }
  std::uint64_t balance_seed() const { return seed + 4; }
  std::uint64_t classifier_seed() const { return seed + 5; }
};

enum class ConfigPreset { Glyphs, MnistSeed0, MnistSeed5 };
RunConfig default_config(ConfigPreset preset = ConfigPreset::Glyphs);

std::string config_to_json(const RunConfig& cfg);
/// Parses and validates. Unknown keys and malformed values raise ConfigError.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
std::string fnv1a_hex(std::string_view bytes);

}  // namespace meda
