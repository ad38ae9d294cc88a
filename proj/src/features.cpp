#include "dtrack/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dtrack/errors.hpp"

namespace dtrack {

FeatureMap::FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::size_t s)
    : channels(c), height(h), width(w), stride(s), origin(0.5 * static_cast<double>(s)),
      values(c * h * w, 0.0) {}

std::vector<double> FeatureMap::pixel_major() const {
  std::vector<double> out(values.size());
  const std::size_t n = cells();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < n; ++p) out[p * channels + c] = values[c * n + p];
  }
  return out;
}

FeatureMap featurize(const GrayImage& patch, std::size_t stride,
                     std::size_t orientation_bins) {
  if (stride == 0 || patch.width() % stride != 0 || patch.height() % stride != 0) {
    throw ContractViolation("featurize: stride must divide the patch sides");
  }
  if (orientation_bins < 2) throw ContractViolation("featurize: need at least 2 bins");

  const std::size_t W = patch.width();
  const std::size_t H = patch.height();
  FeatureMap fm(feature_channels(orientation_bins), H / stride, W / stride, stride);
  const double inv_area = 1.0 / static_cast<double>(stride * stride);
  const double bin_width = std::numbers::pi / static_cast<double>(orientation_bins);

  auto px = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(W) - 1);
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(H) - 1);
    return patch.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };

  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t ci = y / stride;
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t cj = x / stride;
      const auto sx = static_cast<std::ptrdiff_t>(x);
      const auto sy = static_cast<std::ptrdiff_t>(y);
      const double gx = 0.5 * (px(sx + 1, sy) - px(sx - 1, sy));
      const double gy = 0.5 * (px(sx, sy + 1) - px(sx, sy - 1));
      const double mag = std::sqrt(gx * gx + gy * gy);

      fm.at(0, ci, cj) += patch.at(x, y) * inv_area;
      if (mag == 0.0) continue;
      fm.at(1, ci, cj) += mag * inv_area;

      // Unsigned orientation in [0, pi), linearly split between the two
      // nearest bin centers k * bin_width (cyclic).
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      const double pos = theta / bin_width;
      const auto lo = static_cast<std::size_t>(std::floor(pos)) % orientation_bins;
      const std::size_t hi = (lo + 1) % orientation_bins;
      const double frac = pos - std::floor(pos);
      fm.at(2 + lo, ci, cj) += (1.0 - frac) * mag * inv_area;
      fm.at(2 + hi, ci, cj) += frac * mag * inv_area;
    }
  }
  return fm;
}

}  // namespace dtrack
