#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dtrack/box.hpp"

namespace dtrack {

/// Row-major grayscale image with intensities in [0, 1].
///
/// Continuous coordinates: pixel (x, y) covers [x, x+1) x [y, y+1); its
/// center sits at (x + 0.5, y + 0.5).
class GrayImage {
 public:
  static constexpr std::size_t kMinSide = 8;

  GrayImage() = default;
  GrayImage(std::size_t width, std::size_t height, double fill = 0.0);
  GrayImage(std::size_t width, std::size_t height, std::vector<double> values);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  bool empty() const noexcept { return values_.empty(); }

  double at(std::size_t x, std::size_t y) const noexcept { return values_[y * width_ + x]; }
  double& at(std::size_t x, std::size_t y) noexcept { return values_[y * width_ + x]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  /// Bilinear sample at a continuous point, replicating edge pixels outside.
  double sample(double x, double y) const noexcept;

  /// Throws ContractViolation if a value is non-finite or outside [0, 1].
  void validate() const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> values_;
};

/// Uniform scale plus offset mapping patch coordinates to image coordinates.
struct AffineMap {
  double scale = 1.0;  // image pixels per patch pixel
  double offset_x = 0.0;
  double offset_y = 0.0;

  double to_image_x(double px) const noexcept { return offset_x + scale * px; }
  double to_image_y(double py) const noexcept { return offset_y + scale * py; }
  double to_patch_x(double ix) const noexcept { return (ix - offset_x) / scale; }
  double to_patch_y(double iy) const noexcept { return (iy - offset_y) / scale; }

  Box2D box_to_image(const Box2D& b) const {
    return {to_image_x(b.cx()), to_image_y(b.cy()), b.w() * scale, b.h() * scale};
  }
  Box2D box_to_patch(const Box2D& b) const {
    return {to_patch_x(b.cx()), to_patch_y(b.cy()), b.w() / scale, b.h() / scale};
  }
};

struct Crop {
  GrayImage patch;
  AffineMap mapping;
};

/// Square crop of side size_factor * sqrt(w * h) centered at (cx, cy),
/// bilinearly resampled to out_size x out_size.
Crop crop_resize(const GrayImage& image, double cx, double cy, double target_w,
                 double target_h, double size_factor, std::size_t out_size);

}  // namespace dtrack
