#pragma once

#include "meda/common.hpp"
#include "meda/gm_distribution.hpp"
#include "meda/networks.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace meda {

/// Images flattened to rows (H x W x C, channel fastest) with values in [0, 1].
struct LabeledImageSet {
  Matrix images;
  Labels labels;
  int height = 0;
  int width = 0;
  int channels = 1;

  std::size_t size() const { return labels.size(); }
  int pixel_count() const { return height * width * channels; }
  std::span<const double> image(std::size_t i) const {
    return {images.data() + static_cast<Eigen::Index>(i) * images.cols(), static_cast<std::size_t>(images.cols())};
  }
  /// Per-class member counts over classes 0..class_count-1.
  std::vector<int> histogram(int class_count) const;
  std::vector<std::size_t> members_of(int label) const;
  LabeledImageSet subset(std::span<const std::size_t> indices) const;
  void append(const LabeledImageSet& other);
  void validate() const;
  bool operator==(const LabeledImageSet& o) const {
    return height == o.height && width == o.width && channels == o.channels && labels == o.labels &&
           images.rows() == o.images.rows() && images.cols() == o.images.cols() && images == o.images;
  }
};

// --- IDX ----------------------------------------------------------------------

LabeledImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
LabeledImageSet decode_idx(std::span<const char> image_bytes, std::span<const char> label_bytes);
/// Pixels are quantised as round(255 * v).
std::vector<char> encode_idx_images(const LabeledImageSet& set);
std::vector<char> encode_idx_labels(const Labels& labels);
Labels decode_idx_labels(std::span<const char> bytes);
void write_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// --- float archive ("MLIMG01") -----------------------------------------------------

// Header: 7-byte magic, then u64 n, H, W, C; payload of n*H*W*C little-endian f64.
// Labels live in a sibling IDX label file.
std::vector<char> encode_image_archive(const LabeledImageSet& set);
LabeledImageSet decode_image_archive(std::span<const char> bytes, Labels labels);
void write_image_archive(const LabeledImageSet& set, const std::filesystem::path& archive_path,
                         const std::filesystem::path& labels_path);
LabeledImageSet read_image_archive(const std::filesystem::path& archive_path, const std::filesystem::path& labels_path);

// --- glyphs -------------------------------------------------------------------------

inline constexpr int kGlyphTemplateCount = 8;

struct GlyphConfig {
  int classes = 4;
  int per_class = 500;
  int height = 16;
  int width = 16;
  double noise_sd = 0.05;
  int max_shift = 2;
  double intensity_jitter = 0.2;
  std::uint64_t seed = 0;
};

/// Procedural shapes in template order: bar, cross, disk, ring, diagonal,
/// checker, frame, dot-grid. Samples are grouped by class.
LabeledImageSet generate_glyphs(const GlyphConfig& cfg);

// --- imbalance protocol -------------------------------------------------------------

struct ImbalanceSpec {
  std::vector<int> minority_classes;
  int n_min = 20;
  int n_maj = 400;
  int n_val = 100;
  std::uint64_t seed = 0;

  void validate(int class_count) const;
  bool is_minority(int label) const;
};

struct ImbalancedSplit {
  LabeledImageSet train;
  LabeledImageSet val;
  std::vector<std::size_t> train_indices;  // into the full set
  std::vector<std::size_t> val_indices;
};

int class_count_of(const LabeledImageSet& set);
ImbalancedSplit make_imbalanced(const LabeledImageSet& full, const ImbalanceSpec& spec);

/// Appends decoded draws from the evolved mixture until every class reaches the
/// largest class count. Originals keep their positions.
LabeledImageSet balance_with_synthetic(const LabeledImageSet& train, const Network& decoder, const GMMParams& gmm,
                                       Rng& rng);

/// Decodes `count` draws from class `label` of the mixture, clipped to [0, 1].
LabeledImageSet synthesize_class(const Network& decoder, const GMMParams& gmm, int label, int count, int height,
                                 int width, int channels, Rng& rng);

}  // namespace meda
