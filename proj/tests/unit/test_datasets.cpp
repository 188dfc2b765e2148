#include "helpers.hpp"
#include "meda/datasets.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace meda;
namespace fs = std::filesystem;

namespace {

std::vector<char> bytes(std::initializer_list<int> v) {
  std::vector<char> out;
  for (int b : v) out.push_back(static_cast<char>(b));
  return out;
}

const std::vector<char> kImages = bytes({0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 64});
const std::vector<char> kLabels = bytes({0, 0, 8, 1, 0, 0, 0, 1, 7});

void write(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

GlyphConfig small_glyphs(std::uint64_t seed) {
  GlyphConfig g;
  g.per_class = 10;
  g.seed = seed;
  return g;
}

}  // namespace

TEST_CASE("decode_idx on a hand-built fixture") {
  const auto set = decode_idx(kImages, kLabels);
  REQUIRE(set.size() == 1);
  CHECK(set.height == 2);
  CHECK(set.width == 2);
  CHECK(set.images(0, 0) == 0.0);
  CHECK(set.images(0, 1) == 1.0);
  CHECK(set.images(0, 2) == 128.0 / 255.0);
  CHECK(set.images(0, 3) == 64.0 / 255.0);
  CHECK(set.labels[0] == 7);
  CHECK(encode_idx_images(set) == kImages);
  CHECK(encode_idx_labels(set.labels) == kLabels);
}

TEST_CASE("decode_idx guards") {
  CHECK_THROWS_AS(decode_idx(kLabels, kLabels), FormatError);
  auto cut = kImages;
  cut.pop_back();
  try {
    decode_idx(cut, kLabels);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  const auto two = bytes({0, 0, 8, 1, 0, 0, 0, 2, 7, 7});
  CHECK_THROWS_AS(decode_idx(kImages, two), FormatError);
  const auto huge = bytes({0, 0, 8, 3, 0x7f, 0xff, 0xff, 0xff, 0x7f, 0xff, 0xff, 0xff, 0x7f, 0xff, 0xff, 0xff});
  CHECK_THROWS_AS(decode_idx(huge, kLabels), FormatError);
}

TEST_CASE("load_idx reads files and names missing paths") {
  const auto dir = fs::temp_directory_path() / "meda_idx_test";
  fs::create_directories(dir);
  write(dir / "img", kImages);
  write(dir / "lbl", kLabels);
  CHECK(load_idx(dir / "img", dir / "lbl").labels == Labels{7});
  try {
    load_idx(dir / "absent", dir / "lbl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("glyph generation bookkeeping and determinism") {
  const auto a = generate_glyphs(small_glyphs(1));
  CHECK(a.size() == 40);
  CHECK(a.histogram(4) == std::vector<int>{10, 10, 10, 10});
  CHECK(a.images.minCoeff() >= 0.0);
  CHECK(a.images.maxCoeff() <= 1.0);
  CHECK(generate_glyphs(small_glyphs(1)) == a);
  CHECK_FALSE(generate_glyphs(small_glyphs(2)) == a);

  GlyphConfig flat = small_glyphs(3);
  flat.noise_sd = 0.0;
  flat.intensity_jitter = 0.0;
  flat.max_shift = 0;
  const auto f = generate_glyphs(flat);
  for (int c = 0; c < 4; ++c) {
    const auto m = f.members_of(c);
    for (std::size_t i : m) CHECK(f.images.row(static_cast<Eigen::Index>(i)) == f.images.row(static_cast<Eigen::Index>(m[0])));
  }
  GlyphConfig too_many = small_glyphs(1);
  too_many.classes = 9;
  CHECK_THROWS_AS(generate_glyphs(too_many), ConfigError);
}

TEST_CASE("make_imbalanced counts, disjointness and determinism") {
  GlyphConfig g = small_glyphs(4);
  g.per_class = 60;
  const auto full = generate_glyphs(g);
  ImbalanceSpec spec{{1, 3}, 5, 40, 10, 9};
  const auto s = make_imbalanced(full, spec);
  CHECK(s.train.histogram(4) == std::vector<int>{40, 5, 40, 5});
  CHECK(s.val.histogram(4) == std::vector<int>{10, 10, 10, 10});
  std::set<std::size_t> tr(s.train_indices.begin(), s.train_indices.end());
  for (std::size_t v : s.val_indices) CHECK(tr.count(v) == 0);
  const auto again = make_imbalanced(full, spec);
  CHECK(again.train_indices == s.train_indices);
  CHECK(again.val_indices == s.val_indices);

  ImbalanceSpec same{{1}, 20, 20, 10, 1};
  CHECK(make_imbalanced(full, same).train.histogram(4) == std::vector<int>{20, 20, 20, 20});

  ImbalanceSpec greedy{{1}, 5, 55, 10, 1};
  try {
    make_imbalanced(full, greedy);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("class 0") != std::string::npos);
  }
}

TEST_CASE("MNIST-sized protocol arithmetic") {
  // 5 minority classes of 50 plus 5 majority classes of 5000
  LabeledImageSet full;
  full.height = full.width = 1;
  full.images = Matrix::Zero(10 * 5100, 1);
  for (int c = 0; c < 10; ++c) full.labels.insert(full.labels.end(), 5100, c);
  const auto s = make_imbalanced(full, ImbalanceSpec{{2, 8, 4, 9, 1}, 50, 5000, 100, 0});
  CHECK(s.train.size() == 25250);
}

TEST_CASE("image archive round trip, including empty sets") {
  const auto dir = fs::temp_directory_path() / "meda_archive_test";
  const auto set = generate_glyphs(small_glyphs(5));
  write_image_archive(set, dir / "a.mlimg", dir / "a.idx");
  CHECK(read_image_archive(dir / "a.mlimg", dir / "a.idx") == set);
  LabeledImageSet empty;
  empty.height = 3;
  empty.width = 2;
  empty.images.resize(0, 6);
  write_image_archive(empty, dir / "e.mlimg", dir / "e.idx");
  const auto back = read_image_archive(dir / "e.mlimg", dir / "e.idx");
  CHECK(back.size() == 0);
  CHECK(back.height == 3);
  auto b = encode_image_archive(set);
  b[2] = '?';
  CHECK_THROWS_AS(decode_image_archive(b, set.labels), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("balance_with_synthetic fills minority classes with labelled draws") {
  Rng rng(6);
  const Network decoder = Network::create(MLPSpec{{3, 8, 256}, OutputHead::Sigmoid}, rng);
  const GMMParams gmm = GMMParams::standard(4, 3);
  GlyphConfig g = small_glyphs(7);
  g.per_class = 60;
  const auto split = make_imbalanced(generate_glyphs(g), ImbalanceSpec{{0, 2}, 4, 40, 10, 3});
  const auto out = balance_with_synthetic(split.train, decoder, gmm, rng);
  CHECK(out.histogram(4) == std::vector<int>{40, 40, 40, 40});
  const auto n0 = static_cast<Eigen::Index>(split.train.size());
  CHECK(out.images.topRows(n0) == split.train.images);
  CHECK(Labels(out.labels.begin(), out.labels.begin() + n0) == split.train.labels);
  for (std::size_t i = split.train.size(); i < out.size(); ++i) CHECK((out.labels[i] == 0 || out.labels[i] == 2));
  CHECK(out.images.minCoeff() >= 0.0);
  CHECK(out.images.maxCoeff() <= 1.0);

  const auto balanced = make_imbalanced(generate_glyphs(g), ImbalanceSpec{{}, 20, 20, 10, 3});
  CHECK(balance_with_synthetic(balanced.train, decoder, gmm, rng) == balanced.train);

  const auto gen = synthesize_class(decoder, gmm, 3, 5, 16, 16, 1, rng);
  CHECK(gen.labels == Labels(5, 3));
}
