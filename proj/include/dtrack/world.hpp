#pragma once

// Deterministic synthetic tracking sequences and their on-disk layout:
//
//   <dir>/img/00000001.pgm ...   binary P5, 8-bit, 1-based numbering
//   <dir>/groundtruth_rect.txt   one "x,y,w,h" line per frame, top-left corner
//
// A textured rectangle moves over a static cluttered background with optional
// scale drift, a sweeping occluder bar, global illumination drift and sensor
// noise. Frames are quantized to 8 bits at generation time so a saved
// sequence reloads bit for bit.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtrack/sequence.hpp"

namespace dtrack::world {

struct WorldConfig {
  std::size_t width = 320;
  std::size_t height = 240;
  std::size_t frames = 60;

  double target_w = 40.0;
  double target_h = 32.0;
  double start_x = -1.0;  // center; negative means frame center
  double start_y = -1.0;
  std::uint64_t texture_seed = 1;

  double velocity_x = 0.0;  // px / frame
  double velocity_y = 0.0;
  double random_walk_sigma = 0.0;  // px / frame
  double scale_drift_sigma = 0.0;  // log-size / frame
  double scale_rate = 0.0;         // deterministic log-size change / frame

  std::size_t occlusion_first = 0;  // first frame of the first occlusion
  std::size_t occlusion_on = 0;     // frames per occlusion (0 disables)
  std::size_t occlusion_off = 0;    // frames between occlusions (0: only one)
  double occlusion_coverage = 0.0;  // bar width / target width

  double clutter_density = 0.0;  // clutter patches per 10^4 px^2
  double background_level = 0.45;
  double background_amplitude = 0.08;
  double illumination_amplitude = 0.0;
  double illumination_period = 50.0;  // frames
  double noise_sigma = 0.0;

  std::uint64_t seed = 1;

  void validate() const;
};

Sequence generate_sequence(const WorldConfig& cfg);

/// A varied benchmark suite of `count` configurations derived from `seed`.
std::vector<WorldConfig> standard_suite(std::size_t count, std::uint64_t seed);

/// An easy sequence: no occlusion, constant scale, slow smooth motion.
WorldConfig easy_world(std::uint64_t seed);

void save_sequence(const Sequence& seq, const std::filesystem::path& dir);
Sequence load_sequence(const std::filesystem::path& dir);

void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

/// "x,y,w,h" per line, top-left convention, full double precision.
void write_boxes(const std::vector<Box2D>& boxes, const std::filesystem::path& path);
std::vector<Box2D> read_boxes(const std::filesystem::path& path);

std::string frame_filename(std::size_t index_one_based);

}  // namespace dtrack::world
