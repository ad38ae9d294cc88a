#pragma once

#include <string>
#include <vector>

#include "dtrack/box.hpp"
#include "dtrack/image.hpp"

namespace dtrack {

/// Frames plus one ground-truth box per frame, image coordinates.
struct Sequence {
  std::string name;
  std::vector<GrayImage> frames;
  std::vector<Box2D> ground_truth;
  std::string provenance;  // flattened generator config, "key = value" lines

  std::size_t size() const noexcept { return frames.size(); }
};

}  // namespace dtrack
