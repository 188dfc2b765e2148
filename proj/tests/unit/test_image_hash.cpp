#include "helpers.hpp"
#include "meda/errors.hpp"
#include "meda/image_hash.hpp"

#include <doctest.h>

#include <random>
#include <vector>

using namespace meda;

namespace {

// Straight-line pooling: cell edges at multiples of floor(S/8), last cell takes the rest.
AHash naive_hash(const std::vector<double>& img, int h, int w) {
  auto edges = [](int s) {
    std::vector<int> e(9);
    const int run = s / 8;
    for (int i = 0; i < 8; ++i) e[i] = i * run;
    e[8] = s;
    return e;
  };
  const auto re = edges(h);
  const auto ce = edges(w);
  double cells[8][8];
  double grand = 0.0;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      double sum = 0.0;
      int count = 0;
      for (int y = re[r]; y < re[r + 1]; ++y)
        for (int x = ce[c]; x < ce[c + 1]; ++x) {
          sum += img[static_cast<std::size_t>(y * w + x)];
          ++count;
        }
      cells[r][c] = sum / count;
      grand += cells[r][c];
    }
  grand /= 64.0;
  AHash out;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) out.bits[static_cast<std::size_t>(r * 8 + c)] = cells[r][c] >= grand;
  return out;
}

std::vector<double> random_image(Rng& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> img(static_cast<std::size_t>(h * w));
  for (auto& v : img) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("average_hash examples") {
  const std::vector<double> flat(100, 0.37);
  CHECK(average_hash(flat, 10, 10).bits.all());

  std::vector<double> split(64);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) split[r * 8 + c] = c < 4 ? 0.0 : 1.0;
  const AHash h = average_hash(split, 8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(h.bits[r * 8 + c] == (c >= 4));

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = random_image(rng, 28, 28);
    CHECK(average_hash(img, 28, 28) == naive_hash(img, 28, 28));
  }
}

TEST_CASE("average_hash guards and channel averaging") {
  const std::vector<double> none;
  CHECK_THROWS_AS(average_hash(none, 0, 4), InputError);
  const std::vector<double> short_buf(10);
  CHECK_THROWS_AS(average_hash(short_buf, 4, 4), InputError);

  Rng rng(2);
  const auto gray = random_image(rng, 16, 16);
  std::vector<double> rgb(gray.size() * 3);
  for (std::size_t i = 0; i < gray.size(); ++i) rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = gray[i];
  CHECK(average_hash(rgb, 16, 16, 3) == average_hash(gray, 16, 16));
}

TEST_CASE("similarity examples") {
  AHash a;
  a.bits = std::bitset<64>(0x0123456789abcdefULL);
  AHash b = a;
  CHECK(similarity(a, b) == 1.0);
  b.bits = ~a.bits;
  CHECK(similarity(a, b) == 0.0);
  b = a;
  b.bits.flip(17);
  CHECK(similarity(a, b) == 0.984375);
}

TEST_CASE("hash properties on random images") {
  Rng rng(3);
  std::uniform_real_distribution<double> alpha(0.05, 5.0);
  std::uniform_real_distribution<double> beta(-2.0, 2.0);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int trial = 0; trial < 300; ++trial) {
    const int h = dim(rng);
    const int w = dim(rng);
    const auto img = random_image(rng, h, w);
    const AHash base = average_hash(img, h, w);
    std::vector<double> t(img);
    const double a = alpha(rng);
    const double b = beta(rng);
    for (auto& v : t) v = a * v + b;
    CHECK(average_hash(t, h, w) == base);
    const AHash other = average_hash(random_image(rng, h, w), h, w);
    const double s = similarity(base, other);
    CHECK(s == similarity(other, base));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(similarity(base, base) == 1.0);
    if (h >= 8 && w >= 8) CHECK(base == naive_hash(img, h, w));
  }
}

TEST_CASE("2x nearest upscale keeps the hash when sides are multiples of 8") {
  Rng rng(4);
  for (int side : {8, 16, 24}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto img = random_image(rng, side, side);
      std::vector<double> up(static_cast<std::size_t>(4 * side * side));
      for (int y = 0; y < 2 * side; ++y)
        for (int x = 0; x < 2 * side; ++x) up[y * 2 * side + x] = img[(y / 2) * side + x / 2];
      CHECK(average_hash(up, 2 * side, 2 * side) == average_hash(img, side, side));
    }
  }
}
