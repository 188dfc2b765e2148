#include "meda/datasets.hpp"

#include "meda/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace meda {

namespace {

[[noreturn]] void format_fail(const std::string& what) { throw FormatError(what); }

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::string_view kArchiveMagic = "MLIMG01";

std::vector<char> read_or_data_error(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw DataError("file not found: " + p.string());
  return io::read_file(p);
}

}  // namespace

// --- LabeledImageSet --------------------------------------------------------------

std::vector<int> LabeledImageSet::histogram(int class_count) const {
  std::vector<int> h(static_cast<std::size_t>(class_count), 0);
  for (int l : labels)
    if (l >= 0 && l < class_count) ++h[static_cast<std::size_t>(l)];
  return h;
}

std::vector<std::size_t> LabeledImageSet::members_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

LabeledImageSet LabeledImageSet::subset(std::span<const std::size_t> indices) const {
  LabeledImageSet out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.images.resize(static_cast<Eigen::Index>(indices.size()), images.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.images.row(static_cast<Eigen::Index>(r)) = images.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

void LabeledImageSet::append(const LabeledImageSet& other) {
  if (other.size() == 0) return;
  if (size() == 0 && images.cols() == 0) {
    *this = other;
    return;
  }
  if (other.images.cols() != images.cols()) throw ShapeError("appending images of a different size");
  Matrix merged(images.rows() + other.images.rows(), images.cols());
  merged << images, other.images;
  images = std::move(merged);
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void LabeledImageSet::validate() const {
  if (static_cast<std::size_t>(images.rows()) != labels.size()) throw ShapeError("image and label counts differ");
  if (images.cols() != pixel_count()) throw ShapeError("image width differs from H*W*C");
  if (images.size() > 0 && (images.minCoeff() < 0.0 || images.maxCoeff() > 1.0))
    throw InputError("pixel values outside [0, 1]");
  for (int l : labels)
    if (l < 0) throw InputError("negative label");
}

// --- IDX ------------------------------------------------------------------------

Labels decode_idx_labels(std::span<const char> bytes) {
  io::ByteReader r(bytes, format_fail);
  const auto magic = r.get_u32_be("labels magic");
  if (magic != kIdxLabelsMagic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", magic);
    r.fail(std::string("expected IDX label magic 0x00000801, found 0x") + buf);
  }
  const auto n = r.get_u32_be("label count");
  if (r.remaining() < n) r.fail("label payload truncated: need " + std::to_string(n) + " bytes");
  Labels out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.get_u8("label"));
  return out;
}

LabeledImageSet decode_idx(std::span<const char> image_bytes, std::span<const char> label_bytes) {
  io::ByteReader r(image_bytes, format_fail);
  const auto magic = r.get_u32_be("images magic");
  if (magic != kIdxImagesMagic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", magic);
    r.fail(std::string("expected IDX image magic 0x00000803, found 0x") + buf);
  }
  const std::uint64_t n = r.get_u32_be("image count");
  const std::uint64_t rows = r.get_u32_be("rows");
  const std::uint64_t cols = r.get_u32_be("cols");
  if (rows == 0 || cols == 0) r.fail("image dimensions must be positive");
  if (rows > (1u << 15) || cols > (1u << 15) || n > std::numeric_limits<std::uint32_t>::max() / (rows * cols + 1))
    r.fail("image dimensions overflow");
  const std::uint64_t payload = n * rows * cols;
  if (r.remaining() < payload) r.fail("image payload truncated: need " + std::to_string(payload) + " bytes");

  LabeledImageSet set;
  set.height = static_cast<int>(rows);
  set.width = static_cast<int>(cols);
  set.channels = 1;
  set.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows * cols));
  for (Eigen::Index i = 0; i < set.images.size(); ++i) set.images.data()[i] = r.get_u8("pixel") / 255.0;
  set.labels = decode_idx_labels(label_bytes);
  if (set.labels.size() != n)
    throw FormatError("image/label count mismatch: " + std::to_string(n) + " images, " +
                      std::to_string(set.labels.size()) + " labels");
  return set;
}

LabeledImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_or_data_error(images_path);
  const auto lab = read_or_data_error(labels_path);
  try {
    return decode_idx(img, lab);
  } catch (const FormatError& e) {
    throw FormatError(images_path.filename().string() + "/" + labels_path.filename().string() + ": " + e.what());
  }
}

std::vector<char> encode_idx_images(const LabeledImageSet& set) {
  if (set.channels != 1) throw FormatError("IDX image files hold single-channel images only");
  io::ByteWriter w;
  w.put_u32_be(kIdxImagesMagic);
  w.put_u32_be(static_cast<std::uint32_t>(set.size()));
  w.put_u32_be(static_cast<std::uint32_t>(set.height));
  w.put_u32_be(static_cast<std::uint32_t>(set.width));
  for (Eigen::Index i = 0; i < set.images.size(); ++i) {
    const double v = std::clamp(set.images.data()[i], 0.0, 1.0);
    w.put_u8(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return w.bytes();
}

std::vector<char> encode_idx_labels(const Labels& labels) {
  io::ByteWriter w;
  w.put_u32_be(kIdxLabelsMagic);
  w.put_u32_be(static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw FormatError("IDX labels must fit in one byte");
    w.put_u8(static_cast<std::uint8_t>(l));
  }
  return w.bytes();
}

void write_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  io::write_file(images_path, encode_idx_images(set));
  io::write_file(labels_path, encode_idx_labels(set.labels));
}

// --- archive -----------------------------------------------------------------------

std::vector<char> encode_image_archive(const LabeledImageSet& set) {
  io::ByteWriter w;
  w.put_bytes(kArchiveMagic);
  w.put_u64(set.size());
  w.put_u64(static_cast<std::uint64_t>(set.height));
  w.put_u64(static_cast<std::uint64_t>(set.width));
  w.put_u64(static_cast<std::uint64_t>(set.channels));
  for (Eigen::Index i = 0; i < set.images.size(); ++i) w.put_f64(set.images.data()[i]);
  return w.bytes();
}

LabeledImageSet decode_image_archive(std::span<const char> bytes, Labels labels) {
  io::ByteReader r(bytes, format_fail);
  if (r.get_bytes(kArchiveMagic.size(), "magic") != kArchiveMagic) r.fail("bad image archive magic");
  const auto n = r.get_u64("n");
  const auto h = r.get_u64("H");
  const auto w = r.get_u64("W");
  const auto c = r.get_u64("C");
  if (h == 0 || w == 0 || c == 0 || h > (1u << 15) || w > (1u << 15) || c > 64) r.fail("implausible image shape");
  if (n > r.remaining() / 8 / (h * w * c) || r.remaining() != n * h * w * c * 8)
    r.fail("archive payload size does not match its header");
  LabeledImageSet set;
  set.height = static_cast<int>(h);
  set.width = static_cast<int>(w);
  set.channels = static_cast<int>(c);
  set.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h * w * c));
  for (Eigen::Index i = 0; i < set.images.size(); ++i) set.images.data()[i] = r.get_f64("pixel");
  if (labels.size() != n) throw FormatError("archive holds " + std::to_string(n) + " images but labels file has " +
                                            std::to_string(labels.size()));
  set.labels = std::move(labels);
  return set;
}

void write_image_archive(const LabeledImageSet& set, const std::filesystem::path& archive_path,
                         const std::filesystem::path& labels_path) {
  io::write_file(archive_path, encode_image_archive(set));
  io::write_file(labels_path, encode_idx_labels(set.labels));
}

LabeledImageSet read_image_archive(const std::filesystem::path& archive_path,
                                   const std::filesystem::path& labels_path) {
  const auto bytes = read_or_data_error(archive_path);
  const auto lab = read_or_data_error(labels_path);
  return decode_image_archive(bytes, decode_idx_labels(lab));
}

// --- glyphs -------------------------------------------------------------------------

namespace {

// Template intensity in {0, 1} at normalised coordinates (u across, v down).
bool glyph_on(int shape, double u, double v) {
  const double du = u - 0.5;
  const double dv = v - 0.5;
  const double r = std::hypot(du, dv);
  switch (shape) {
    case 0:  // bar
      return std::abs(du) < 0.12 && std::abs(dv) < 0.36;
    case 1:  // cross
      return (std::abs(du) < 0.1 && std::abs(dv) < 0.36) || (std::abs(dv) < 0.1 && std::abs(du) < 0.36);
    case 2:  // disk
      return r < 0.3;
    case 3:  // ring
      return r > 0.2 && r < 0.34;
    case 4:  // diagonal
      return std::abs(du - dv) < 0.12 && std::abs(du + dv) < 0.7;
    case 5: {  // checker
      const int a = static_cast<int>(std::floor(u * 4.0));
      const int b = static_cast<int>(std::floor(v * 4.0));
      return ((a + b) % 2 + 2) % 2 == 0;
    }
    case 6:  // frame
      return std::max(std::abs(du), std::abs(dv)) > 0.26 && std::max(std::abs(du), std::abs(dv)) < 0.38;
    case 7: {  // dot grid
      for (double cy : {0.25, 0.5, 0.75})
        for (double cx : {0.25, 0.5, 0.75})
          if (std::hypot(u - cx, v - cy) < 0.08) return true;
      return false;
    }
    default:
      return false;
  }
}

}  // namespace

LabeledImageSet generate_glyphs(const GlyphConfig& cfg) {
  if (cfg.classes < 1 || cfg.classes > kGlyphTemplateCount)
    throw ConfigError("glyph classes must lie in [1, " + std::to_string(kGlyphTemplateCount) + "]");
  if (cfg.per_class < 0 || cfg.height < 1 || cfg.width < 1 || cfg.max_shift < 0 || cfg.noise_sd < 0.0 ||
      cfg.intensity_jitter < 0.0)
    throw ConfigError("invalid glyph configuration");

  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> shift(-cfg.max_shift, cfg.max_shift);
  std::uniform_real_distribution<double> jitter(-cfg.intensity_jitter, cfg.intensity_jitter);
  std::normal_distribution<double> noise(0.0, 1.0);

  LabeledImageSet set;
  set.height = cfg.height;
  set.width = cfg.width;
  set.channels = 1;
  const int n = cfg.classes * cfg.per_class;
  set.images.resize(n, cfg.height * cfg.width);
  set.labels.reserve(static_cast<std::size_t>(n));
  int row = 0;
  for (int k = 0; k < cfg.classes; ++k) {
    for (int s = 0; s < cfg.per_class; ++s, ++row) {
      const int dx = cfg.max_shift > 0 ? shift(rng) : 0;
      const int dy = cfg.max_shift > 0 ? shift(rng) : 0;
      const double fg = 0.8 + (cfg.intensity_jitter > 0.0 ? jitter(rng) : 0.0);
      for (int r = 0; r < cfg.height; ++r)
        for (int c = 0; c < cfg.width; ++c) {
          const double u = (c - dx + 0.5) / cfg.width;
          const double v = (r - dy + 0.5) / cfg.height;
          double px = glyph_on(k, u, v) ? fg : 0.0;
          if (cfg.noise_sd > 0.0) px += cfg.noise_sd * noise(rng);
          set.images(row, r * cfg.width + c) = std::clamp(px, 0.0, 1.0);
        }
      set.labels.push_back(k);
    }
  }
  return set;
}

// --- imbalance -----------------------------------------------------------------------

void ImbalanceSpec::validate(int class_count) const {
  std::set<int> seen;
  for (int c : minority_classes) {
    if (c < 0 || c >= class_count) throw ConfigError("minority class " + std::to_string(c) + " is not a class");
    if (!seen.insert(c).second) throw ConfigError("minority class " + std::to_string(c) + " listed twice");
  }
  if (n_min < 1 || n_maj < 1) throw ConfigError("n_min and n_maj must be >= 1");
  if (n_val < 0) throw ConfigError("n_val must be >= 0");
}

bool ImbalanceSpec::is_minority(int label) const {
  return std::find(minority_classes.begin(), minority_classes.end(), label) != minority_classes.end();
}

int class_count_of(const LabeledImageSet& set) {
  int k = 0;
  for (int l : set.labels) k = std::max(k, l + 1);
  return k;
}

ImbalancedSplit make_imbalanced(const LabeledImageSet& full, const ImbalanceSpec& spec) {
  const int k = class_count_of(full);
  spec.validate(k);
  Rng rng(spec.seed);
  ImbalancedSplit split;
  for (int c = 0; c < k; ++c) {
    auto members = full.members_of(c);
    const int want = spec.is_minority(c) ? spec.n_min : spec.n_maj;
    if (static_cast<int>(members.size()) < want + spec.n_val)
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) + " samples, needs " +
                      std::to_string(want + spec.n_val));
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<std::size_t> tr(members.begin(), members.begin() + want);
    std::vector<std::size_t> va(members.begin() + want, members.begin() + want + spec.n_val);
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    split.train_indices.insert(split.train_indices.end(), tr.begin(), tr.end());
    split.val_indices.insert(split.val_indices.end(), va.begin(), va.end());
  }
  split.train = full.subset(split.train_indices);
  split.val = full.subset(split.val_indices);
  return split;
}

LabeledImageSet synthesize_class(const Network& decoder, const GMMParams& gmm, int label, int count, int height,
                                 int width, int channels, Rng& rng) {
  LabeledImageSet out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.images.resize(0, static_cast<Eigen::Index>(height) * width * channels);
  if (count <= 0) return out;
  if (decoder.spec.output_size() != height * width * channels)
    throw ShapeError("decoder output size differs from the image shape");
  std::vector<int> counts(static_cast<std::size_t>(gmm.class_count()), 0);
  counts.at(static_cast<std::size_t>(label)) = count;
  const LatentPopulation pop = sample(gmm, counts, rng);
  out.images = predict(decoder, pop.features).cwiseMax(0.0).cwiseMin(1.0);
  out.labels = pop.labels;
  return out;
}

LabeledImageSet balance_with_synthetic(const LabeledImageSet& train, const Network& decoder, const GMMParams& gmm,
                                       Rng& rng) {
  const int k = std::max(class_count_of(train), gmm.class_count());
  const auto hist = train.histogram(k);
  const int target = *std::max_element(hist.begin(), hist.end());
  LabeledImageSet out = train;
  for (int c = 0; c < k; ++c) {
    const int missing = target - hist[static_cast<std::size_t>(c)];
    if (missing <= 0) continue;
    out.append(synthesize_class(decoder, gmm, c, missing, train.height, train.width, train.channels, rng));
  }
  return out;
}

}  // namespace meda
