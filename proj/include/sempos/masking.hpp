#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sempos/rng.hpp"
#include "sempos/tensor.hpp"

namespace sempos::vfm {

struct MaskConfig {
  double spatial_ratio = 0.30;
  double temporal_ratio = 0.15;
  std::uint64_t seed = 42;

  // Throws InvalidConfig unless both ratios lie in [0, 1].
  void validate() const;
};

struct MaskResult {
  Tensor masked;
  // Row-major T x D flags, true where the input was zeroed.
  std::vector<bool> mask;
  // First masked column of the temporal band; 0 for spatial masks.
  std::size_t band_start = 0;
  std::size_t band_width = 0;

  std::size_t masked_count() const;
};

// Zeroes exactly round(ratio * T * D) positions chosen uniformly without
// replacement.
MaskResult mask_spatial(const Tensor& spatial, const MaskConfig& cfg, Rng& rng);

// Zeroes one contiguous band of round(ratio * D) feature columns at every
// frame; the band start is uniform over [0, D - width].
MaskResult mask_temporal_chunk(const Tensor& temporal, const MaskConfig& cfg, Rng& rng);

}  // namespace sempos::vfm
