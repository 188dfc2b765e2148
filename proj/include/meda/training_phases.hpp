#pragma once

#include "meda/datasets.hpp"
#include "meda/gm_distribution.hpp"
#include "meda/lgm_loss.hpp"
#include "meda/networks.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace meda {

/// Minority/majority balance coefficients. An empty value means "auto": the
/// ratio (minority count / majority count) of the current batch, or 1 when the
/// batch lacks one of the two populations.
struct XiWeights {
  std::optional<double> rec;
  std::optional<double> gm;
  std::optional<double> cls_ltt;
  std::optional<double> cls_ori;
  std::optional<double> cls_syn;
};

struct PhaseWeights {
  struct {
    double rec = 1.0, gm = 1.0, cls_ltt = 1.0, cls_img = 1.0;
  } phase1;
  struct {
    double rec = 1.0, cls_img = 1.0;
  } phase2;
  struct {
    double gm = 1.0, cls_ltt = 1.0;
  } phase3;
  XiWeights xi1;
  XiWeights xi2;

  void validate() const;
};

struct LearningRates {
  double encoder = 1e-3;
  double decoder = 1e-3;
  double latent_classifier = 1e-3;
  double image_classifier = 1e-3;
  double gmm = 1e-2;
};

struct TrainConfig {
  int batch_size = 64;
  int max_epochs_phase1 = 60;
  int max_epochs_phase2 = 10;
  int max_epochs_phase3 = 10;
  int patience = 5;
  double min_rel_improvement = 1e-3;
  std::uint64_t seed = 0;
  LearningRates lr;

  void validate() const;
};

double combine_min_maj(double loss_min, double loss_maj, double xi);

struct StepRecord {
  int phase = 0;
  long iteration = 0;
  std::vector<std::pair<std::string, double>> components;  // unweighted component values
  double total = 0.0;                                       // beta-weighted sum

  double component(const std::string& name) const;
};

struct LossTrace {
  std::vector<StepRecord> steps;
  std::vector<int> epochs_run;  // one entry per run_phase call

  /// Long-format CSV: iteration,phase,component,value (components then "total").
  std::string to_csv() const;
  void append(const LossTrace& other);
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, LossTrace trace)
      : Error("TrainingDiverged: " + what), detail_(what), trace_(std::move(trace)) {}
  const LossTrace& trace() const { return trace_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  LossTrace trace_;
};

struct Optimizers {
  AdamState encoder, decoder, latent_classifier, image_classifier, gmm;

  static Optimizers from(const LearningRates& lr);
};

/// Which classes are minority; indexed by label.
using MinorityMask = std::vector<bool>;

// --- per-step evaluation (loss + gradients, no parameter change) -------------------

struct QuartetGrads {
  std::optional<NetworkParams> encoder, decoder, latent_classifier, image_classifier;
  std::optional<Matrix> gmm_means, gmm_log_variances;
};

struct StepEvaluation {
  StepRecord record;
  QuartetGrads grads;
};

/// Per-row weights realising L_min + xi * L_maj with each part a batch mean.
Vector min_maj_weights(const Labels& labels, const MinorityMask& minority, std::optional<double> xi);

StepEvaluation phase1_evaluate(const Matrix& images, const Labels& labels, const ModelQuartet& models,
                               const GMMParams& gmm, const PhaseWeights& w, const LGMConfig& cfg,
                               const MinorityMask& minority);

/// `latents` carry `labels`; `real` holds the paired real image for each latent.
StepEvaluation phase2_evaluate(const Matrix& latents, const Matrix& real, const Labels& labels,
                               const ModelQuartet& models, const PhaseWeights& w, const MinorityMask& minority);

/// Decodes `latents` with the frozen decoder, re-encodes, and scores L-GM plus
/// latent classification against `gmm_init`.
StepEvaluation phase3_evaluate(const Matrix& latents, const Labels& labels, const ModelQuartet& models,
                               const GMMParams& gmm_init, const PhaseWeights& w, const LGMConfig& cfg);

/// Applies every gradient present in `grads` with its optimizer.
void apply_gradients(const QuartetGrads& grads, ModelQuartet& models, GMMParams& gmm, Optimizers& opt);

// --- steps ------------------------------------------------------------------------

StepRecord phase1_step(const LabeledImageSet& batch, ModelQuartet& models, GMMParams& gmm, const PhaseWeights& w,
                       const LGMConfig& cfg, const MinorityMask& minority, Optimizers& opt);

StepRecord phase2_step(const GMMParams& gmm_init, const Labels& batch_labels, const LabeledImageSet& real,
                       ModelQuartet& models, const PhaseWeights& w, const MinorityMask& minority, Optimizers& opt,
                       Rng& rng);

StepRecord phase3_step(const GMMParams& gmm_init, const Labels& batch_labels, ModelQuartet& models,
                       const PhaseWeights& w, const LGMConfig& cfg, Optimizers& opt, Rng& rng);

// --- epochs --------------------------------------------------------------------------

/// Class-stratified batches over `labels`: ceil(n / batch_size) batches, minority
/// rows spread evenly, and a duplicated minority row added to any batch that
/// would otherwise hold none.
std::vector<std::vector<std::size_t>> plan_batches(const Labels& labels, const MinorityMask& minority,
                                                   int batch_size, Rng& rng);

struct EpochControl {
  int max_epochs = 0;
  int patience = 5;
  double min_rel_improvement = 1e-3;
};

/// Runs `step(epoch, index)` for steps_per_epoch steps per epoch until
/// max_epochs, or until `patience` consecutive epochs fail to improve the best
/// epoch-mean total by a relative min_rel_improvement. Returns epochs run.
int run_epochs(const EpochControl& control, int steps_per_epoch, const std::function<StepRecord(int, int)>& step,
               LossTrace& trace);

struct TrainingState {
  ModelQuartet models;
  GMMParams gmm;  // trainable during phase 1
  Optimizers opt;
};

enum class PhaseId { One = 1, Two = 2, Three = 3 };

struct PhaseContext {
  const LabeledImageSet* train = nullptr;
  const GMMParams* gmm_init = nullptr;  // phases 2 and 3
  PhaseWeights weights;
  LGMConfig lgm;
  TrainConfig train_cfg;
  MinorityMask minority;
};

LossTrace run_phase(PhaseId phase, const PhaseContext& ctx, TrainingState& state, Rng& rng);

}  // namespace meda
