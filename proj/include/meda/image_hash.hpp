#pragma once

#include <bitset>
#include <span>

namespace meda {

/// 64-bit average hash over an 8x8 grid, bit index = row * 8 + col.
struct AHash {
  std::bitset<64> bits;
  bool operator==(const AHash&) const = default;
};

/// Pixels are row-major H x W x C (channel fastest). Channels are averaged to
/// grayscale, pooled to 8x8 by cell means, and each bit is set when its cell
/// mean is >= the mean of all 64 cells.
///
/// Cells split each axis into 8 equal runs of floor(S/8) pixels with the
/// remainder added to the last run. Axes shorter than 8 pixels are sampled
/// with cell i reading pixel floor(i * S / 8).
AHash average_hash(std::span<const double> pixels, int height, int width, int channels = 1);

/// 1 - hamming(a, b) / 64.
double similarity(const AHash& a, const AHash& b);

}  // namespace meda
