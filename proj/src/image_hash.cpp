#include "meda/image_hash.hpp"

#include "meda/errors.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <string>

namespace meda {

namespace {

struct Run {
  int begin;
  int end;
};

Run cell_run(int cell, int size) {
  if (size < 8) {
    const int p = cell * size / 8;
    return {p, p + 1};
  }
  const int step = size / 8;
  return {cell * step, cell == 7 ? size : (cell + 1) * step};
}

}  // namespace

AHash average_hash(std::span<const double> pixels, int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) throw InputError("image must have H, W, C >= 1");
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
    throw InputError("pixel count " + std::to_string(pixels.size()) + " differs from H*W*C");

  std::array<double, 64> cells{};
  double grand = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int cr = 0; cr < 8; ++cr) {
    const Run rows = cell_run(cr, height);
    for (int cc = 0; cc < 8; ++cc) {
      const Run cols = cell_run(cc, width);
      double sum = 0.0;
      for (int r = rows.begin; r < rows.end; ++r)
        for (int c = cols.begin; c < cols.end; ++c) {
          const std::size_t base = (static_cast<std::size_t>(r) * width + c) * channels;
          double gray = 0.0;
          for (int ch = 0; ch < channels; ++ch) gray += pixels[base + ch];
          gray /= channels;
          lo = std::min(lo, gray);
          hi = std::max(hi, gray);
          sum += gray;
        }
      const double mean = sum / ((rows.end - rows.begin) * (cols.end - cols.begin));
      cells[cr * 8 + cc] = mean;
      grand += mean;
    }
  }
  grand /= 64.0;

  AHash h;
  // Every cell of a flat image equals the grand mean, but rounding in the
  // pooled sums need not preserve that.
  if (lo == hi) {
    h.bits.set();
    return h;
  }
  for (std::size_t i = 0; i < 64; ++i) h.bits[i] = cells[i] >= grand;
  return h;
}

double similarity(const AHash& a, const AHash& b) {
  return 1.0 - static_cast<double>((a.bits ^ b.bits).count()) / 64.0;
}

}  // namespace meda
