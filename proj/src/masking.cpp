#include "sempos/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sempos/errors.hpp"

namespace sempos::vfm {

void MaskConfig::validate() const {
  auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!in_unit(spatial_ratio) || !in_unit(temporal_ratio)) {
    throw InvalidConfig("mask ratios must lie in [0, 1], got spatial=" +
                        std::to_string(spatial_ratio) +
                        " temporal=" + std::to_string(temporal_ratio));
  }
}

std::size_t MaskResult::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

namespace {

void require_matrix(const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionMismatch("feature masks expect a T x D matrix, got " +
                            shape_string(t.shape()));
  }
}

}  // namespace

MaskResult mask_spatial(const Tensor& spatial, const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  require_matrix(spatial);
  const std::size_t n = spatial.size();
  const auto k = static_cast<std::size_t>(std::llround(cfg.spatial_ratio * static_cast<double>(n)));
  MaskResult out{spatial, std::vector<bool>(n, false)};
  if (k == 0) return out;

  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
    out.mask[idx[i]] = true;
    out.masked[idx[i]] = 0.0;
  }
  return out;
}

MaskResult mask_temporal_chunk(const Tensor& temporal, const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  require_matrix(temporal);
  const std::size_t frames = temporal.rows(), dim = temporal.cols();
  const auto width = static_cast<std::size_t>(
      std::llround(cfg.temporal_ratio * static_cast<double>(dim)));
  MaskResult out{temporal, std::vector<bool>(temporal.size(), false)};
  if (width == 0) return out;

  const std::size_t start = rng.uniform_index(dim - width + 1);
  out.band_start = start;
  out.band_width = width;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = start; j < start + width; ++j) {
      out.mask[t * dim + j] = true;
      out.masked.at(t, j) = 0.0;
    }
  }
  return out;
}

}  // namespace sempos::vfm
