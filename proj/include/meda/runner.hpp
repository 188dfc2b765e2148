#pragma once

#include "meda/config.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace meda {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path train_images() const { return root / "data" / "train.mlimg"; }
  std::filesystem::path train_labels() const { return root / "data" / "train-labels.idx"; }
  std::filesystem::path val_images() const { return root / "data" / "val.mlimg"; }
  std::filesystem::path val_labels() const { return root / "data" / "val-labels.idx"; }
  std::filesystem::path balanced_images(const std::string& method) const {
    return root / "balanced" / (method + ".mlimg");
  }
  std::filesystem::path balanced_labels(const std::string& method) const {
    return root / "balanced" / (method + "-labels.idx");
  }
  std::filesystem::path reports() const { return root / "reports.csv"; }
  std::filesystem::path compare() const { return root / "compare.csv"; }
  ArtifactPaths artifacts() const { return ArtifactPaths::in(root); }
};

/// Classifier trained on a (possibly balanced) set and scored on the validation set.
struct FinalClassifierResult {
  Network classifier;
  EvalReport report;
};

/// Plain cross entropy with Adam on the image-classifier architecture.
Network train_final_classifier(const LabeledImageSet& train, int class_count, const RunConfig& cfg);
FinalClassifierResult fit_and_evaluate(const LabeledImageSet& train, const LabeledImageSet& val, int class_count,
                                       const RunConfig& cfg);

struct PreparedData {
  LabeledImageSet train;
  LabeledImageSet val;
  int class_count = 0;
};

/// Loads or synthesizes the full set and applies the imbalance protocol.
ImbalancedSplit build_split(const RunConfig& cfg);
PreparedData load_prepared(const RunConfig& cfg);

inline const std::vector<std::string>& balance_methods() {
  static const std::vector<std::string> m{"meda_lude", "ros", "smote", "adasyn"};
  return m;
}

/// Balanced training set for `method`; "none" returns the imbalanced set.
/// meda_lude needs a trained run directory.
LabeledImageSet balanced_set(const RunConfig& cfg, const PreparedData& data, const std::string& method,
                             std::ostream& log);

void cmd_prepare(const RunConfig& cfg, std::ostream& log);
FullTrainingResult cmd_train(const RunConfig& cfg, std::ostream& log);
LabeledImageSet cmd_generate(const RunConfig& cfg, int label, int count, const std::filesystem::path& out_images,
                             std::ostream& log);
LabeledImageSet cmd_balance(const RunConfig& cfg, const std::string& method, std::ostream& log);
EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& method, std::ostream& log);
/// One column per method ("none" first), one row per criterion.
std::vector<EvalReport> cmd_compare(const RunConfig& cfg, const std::vector<std::string>& methods, std::ostream& log);
/// Writes one CSV row per sample: label then the feature columns.
/// `layer` is "classifier" (last hidden layer of the image classifier) or "latent".
Matrix cmd_export_features(const RunConfig& cfg, const std::string& set, const std::string& layer,
                           const std::filesystem::path& out, std::ostream& log);

/// Maps library errors to exit codes and prints the message to `err`.
int run_guarded(const std::function<void()>& body, std::ostream& err);

}  // namespace meda
