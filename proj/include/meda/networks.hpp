#pragma once

#include "meda/common.hpp"
#include "meda/errors.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace meda {

enum class OutputHead : std::uint8_t { Linear = 0, Sigmoid = 1, Logits = 2 };

std::string to_string(OutputHead head);

/// Fully connected network shape; hidden layers use ReLU.
struct MLPSpec {
  std::vector<int> layer_sizes;  // input, hidden..., output
  OutputHead head = OutputHead::Linear;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  void validate() const;
  bool operator==(const MLPSpec&) const = default;
};

/// Weights and biases of every dense layer: layer l maps x -> x * weights[l] + biases[l].
/// `revision` changes whenever an optimizer touches the parameters so forward
/// caches can be recognised as stale.
struct NetworkParams {
  std::vector<Matrix> weights;  // in x out
  std::vector<Matrix> biases;   // 1 x out
  std::uint64_t instance = 0;
  std::uint64_t revision = 0;

  static NetworkParams init(const MLPSpec& spec, Rng& rng);
  static NetworkParams zeros_like(const NetworkParams& other);
  void check_against(const MLPSpec& spec) const;
  bool same_values(const NetworkParams& other) const;

  // Flat views in a fixed order (W0, b0, W1, b1, ...) for optimizers.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
};

struct Network {
  MLPSpec spec;
  NetworkParams params;

  static Network create(MLPSpec spec, Rng& rng);
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;
  std::uint64_t instance = 0;
  std::uint64_t revision = 0;
  bool valid = false;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

ForwardResult forward(const MLPSpec& spec, const NetworkParams& params, const Matrix& batch);
/// Output only, no cache retained.
Matrix predict(const Network& net, const Matrix& batch);

struct BackwardResult {
  NetworkParams param_grads;
  Matrix input_grad;
};

/// Exact gradients given d(scalar)/d(output). ReLU uses subgradient 0 at 0.
BackwardResult backward(const MLPSpec& spec, const NetworkParams& params, const ForwardCache& cache,
                        const Matrix& output_grad);

// ---------------------------------------------------------------------------

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for an ordered list of tensors.
struct AdamState {
  AdamHyper hyper;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  long step = 0;

  AdamState() = default;
  explicit AdamState(AdamHyper h) : hyper(h) {}
};

/// Bias-corrected Adam update over parallel tensor lists. Throws GradError on non-finite gradients.
void adam_update(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state);
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state);

/// Mean squared error over every entry; grad = 2 (x_hat - x) / (n d).
struct ReconstructionLoss {
  double value = 0.0;
  Matrix grad;
};
ReconstructionLoss reconstruction_loss(const Matrix& x_hat, const Matrix& x);
/// Per-row weighted variant: sum_i w_i * mean_j (x_hat_ij - x_ij)^2.
ReconstructionLoss weighted_reconstruction_loss(const Matrix& x_hat, const Matrix& x, const Vector& row_weights);

// ---------------------------------------------------------------------------

struct ModelQuartet {
  Network encoder;
  Network decoder;
  Network latent_classifier;
  Network image_classifier;

  int latent_dim() const { return encoder.spec.output_size(); }
  int image_size() const { return decoder.spec.output_size(); }
  int class_count() const { return latent_classifier.spec.output_size(); }
  void validate() const;
};

struct ArchitectureConfig {
  int latent_dim = 12;
  std::vector<int> encoder_hidden{256};
  std::vector<int> decoder_hidden{256};
  std::vector<int> latent_classifier_hidden{64};
  std::vector<int> image_classifier_hidden{256, 64};
};

MLPSpec image_classifier_spec(const ArchitectureConfig& arch, int image_size, int class_count);
ModelQuartet build_quartet(const ArchitectureConfig& arch, int image_size, int class_count, Rng& rng);

struct QuartetExpectation {
  std::optional<int> class_count;
  std::optional<int> latent_dim;
  std::optional<int> image_size;
};

// Model file: "MLUDE01" magic, u32 version, then per network (encoder,
// decoder, latent classifier, image classifier): u8 head, u32 size count,
// u64 sizes, then every weight and bias as little-endian f64, row-major.
std::vector<char> encode_models(const ModelQuartet& models);
ModelQuartet decode_models(std::span<const char> bytes, const QuartetExpectation& expect = {});
void save_params(const ModelQuartet& models, const std::filesystem::path& path);
ModelQuartet load_params(const std::filesystem::path& path, const QuartetExpectation& expect = {});

}  // namespace meda
