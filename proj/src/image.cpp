#include "dtrack/image.hpp"

#include <algorithm>
#include <cmath>

#include "dtrack/errors.hpp"

namespace dtrack {

GrayImage::GrayImage(std::size_t width, std::size_t height, double fill)
    : GrayImage(width, height, std::vector<double>(width * height, fill)) {}

GrayImage::GrayImage(std::size_t width, std::size_t height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width < kMinSide || height < kMinSide) {
    throw ContractViolation("GrayImage: sides must be at least 8 pixels");
  }
  if (values_.size() != width * height) {
    throw ContractViolation("GrayImage: value count does not match dimensions");
  }
}

void GrayImage::validate() const {
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ContractViolation("GrayImage: intensity outside [0, 1]");
    }
  }
}

double GrayImage::sample(double x, double y) const noexcept {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const double maxx = static_cast<double>(width_ - 1);
  const double maxy = static_cast<double>(height_ - 1);
  const double cx = std::clamp(fx, 0.0, maxx);
  const double cy = std::clamp(fy, 0.0, maxy);
  const auto x0 = static_cast<std::size_t>(std::floor(cx));
  const auto y0 = static_cast<std::size_t>(std::floor(cy));
  const std::size_t x1 = std::min(x0 + 1, width_ - 1);
  const std::size_t y1 = std::min(y0 + 1, height_ - 1);
  const double tx = cx - static_cast<double>(x0);
  const double ty = cy - static_cast<double>(y0);
  const double top = (1.0 - tx) * at(x0, y0) + tx * at(x1, y0);
  const double bottom = (1.0 - tx) * at(x0, y1) + tx * at(x1, y1);
  return (1.0 - ty) * top + ty * bottom;
}

Crop crop_resize(const GrayImage& image, double cx, double cy, double target_w,
                 double target_h, double size_factor, std::size_t out_size) {
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw ContractViolation("crop_resize: non-finite center");
  }
  if (!(target_w > 0.0) || !(target_h > 0.0)) {
    throw ContractViolation("crop_resize: target size must be positive");
  }
  if (!(size_factor > 1.0)) throw ContractViolation("crop_resize: size_factor must be > 1");
  if (out_size < GrayImage::kMinSide) throw ContractViolation("crop_resize: out_size too small");

  const double side = size_factor * std::sqrt(target_w * target_h);
  Crop crop;
  crop.mapping.scale = side / static_cast<double>(out_size);
  crop.mapping.offset_x = cx - 0.5 * side;
  crop.mapping.offset_y = cy - 0.5 * side;

  std::vector<double> values(out_size * out_size);
  for (std::size_t v = 0; v < out_size; ++v) {
    const double iy = crop.mapping.to_image_y(static_cast<double>(v) + 0.5);
    for (std::size_t u = 0; u < out_size; ++u) {
      const double ix = crop.mapping.to_image_x(static_cast<double>(u) + 0.5);
      values[v * out_size + u] = image.sample(ix, iy);
    }
  }
  crop.patch = GrayImage(out_size, out_size, std::move(values));
  return crop;
}

}  // namespace dtrack
