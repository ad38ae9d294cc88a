#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dtrack/image.hpp"

namespace dtrack {

/// Multi-channel grid of cell features, channel-major (C x H x W).
///
/// Cell (i, j) aggregates patch pixels [j*stride, (j+1)*stride) x
/// [i*stride, (i+1)*stride); `origin` is the patch coordinate of the center of
/// cell (0, 0), so cell coordinate c maps to pixel origin + c * stride.
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t stride = 1;
  double origin = 0.5;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::size_t s);

  double at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return values[(c * height + i) * width + j];
  }
  double& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return values[(c * height + i) * width + j];
  }

  std::size_t cells() const noexcept { return height * width; }
  /// Pixel extent covered by the map along one side.
  double extent() const noexcept { return static_cast<double>(width * stride); }

  double cell_to_pixel(double c) const noexcept {
    return origin + c * static_cast<double>(stride);
  }
  double pixel_to_cell(double p) const noexcept {
    return (p - origin) / static_cast<double>(stride);
  }

  /// Same values laid out pixel-major (H x W x C).
  std::vector<double> pixel_major() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct FeatureConfig {
  std::size_t stride = 4;
  std::size_t orientation_bins = 8;
};

/// Channels: 0 mean intensity, 1 gradient magnitude, 2.. soft-binned
/// unsigned gradient orientation weighted by magnitude. Every channel is the
/// mean over the cell's stride x stride pixels.
FeatureMap featurize(const GrayImage& patch, std::size_t stride,
                     std::size_t orientation_bins);

inline FeatureMap featurize(const GrayImage& patch, const FeatureConfig& cfg) {
  return featurize(patch, cfg.stride, cfg.orientation_bins);
}

inline std::size_t feature_channels(std::size_t orientation_bins) noexcept {
  return 2 + orientation_bins;
}

}  // namespace dtrack
