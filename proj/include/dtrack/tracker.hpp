#pragma once

// Online tracking loop: classifier initialization on the first frame, then per
// frame target classification (confidence peak), target estimation (candidate
// refinement by gradient ascent on the overlap head, top-k fusion) and model
// update (periodic second-layer re-optimization blended by a linear rule).

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "dtrack/box.hpp"
#include "dtrack/classifier.hpp"
#include "dtrack/features.hpp"
#include "dtrack/head.hpp"
#include "dtrack/image.hpp"
#include "dtrack/refine.hpp"

namespace dtrack::tracker {

struct AugmentConfig {
  double translation = 0.1;  // max shift, fraction of the crop side
  bool flip = true;
  double noise_sigma = 0.02;
  double intensity = 0.1;  // max relative gain change
};

struct TrackerConfig {
  double delta = 0.1;  // linear-update rate
  double size_factor = 5.0;
  std::size_t out_size = 144;
  double min_box_side = 4.0;
  FeatureConfig features;
  classifier::ClassifierConfig classifier;
  refine::RefineConfig refine;
  AugmentConfig augment;
  head::TargetKind score = head::TargetKind::Diou;

  void validate() const;
};

struct TrackerState {
  TrackerConfig config;
  head::ScoreHead head;
  head::RegionDescriptor template_descriptor;
  classifier::ClassifierWeights weights;
  classifier::ClassifierWeights previous_weights;
  classifier::SampleMemory memory;
  gn::SolveReport init_report;
  Box2D box;  // previous estimate, image coordinates
  std::size_t frame = 0;  // index of the last processed frame
  std::mt19937_64 rng;
};

struct FrameDiagnostics {
  double peak_score = 0.0;
  double peak_x = 0.0, peak_y = 0.0;  // image coordinates
  std::vector<double> confidence;     // H x W classifier map
  std::vector<double> candidate_scores;
  std::vector<std::vector<double>> ascent_traces;
  bool estimation_failed = false;
  bool classifier_optimized = false;
};

struct FrameResult {
  Box2D box;
  FrameDiagnostics diagnostics;
};

/// Builds the tracker on the first frame. Throws ContractViolation if the box
/// center lies outside the frame, its sides are below `min_box_side`, or a
/// learned head's target kind differs from the configured score variant.
TrackerState init(const GrayImage& frame, const Box2D& gt_box, const head::ScoreHead& head,
                  const TrackerConfig& config, std::uint64_t seed);

/// Processes the next frame. `oracle_reference` (image coordinates) is needed
/// only when the head runs in oracle mode.
FrameResult track_frame(TrackerState& state, const GrayImage& frame,
                        const std::optional<Box2D>& oracle_reference = std::nullopt);

/// Element-wise (1 - delta) prev + delta next; elements equal in both are
/// returned unchanged.
classifier::ClassifierWeights apply_linear_update(const classifier::ClassifierWeights& prev,
                                                  const classifier::ClassifierWeights& next,
                                                  double delta);

/// Sub-cell peak of a confidence map: argmax refined by a separable quadratic
/// fit over its 3x3 neighborhood. Returns (row, col, value).
struct Peak {
  double row = 0.0, col = 0.0, value = 0.0;
};
Peak find_peak(std::span<const double> map, std::size_t H, std::size_t W);

/// 64-bit digest of the parts of a state that determine future output.
std::uint64_t state_digest(const TrackerState& state);

struct TrackRun {
  std::vector<Box2D> boxes;  // one per frame, the first is the init box
  std::vector<FrameDiagnostics> diagnostics;  // one per tracked frame
  std::size_t failed_frames = 0;
};

/// Tracks a whole sequence from its first ground-truth box. With an oracle
/// head, the ground truth of each frame is the reference.
TrackRun run_sequence(const std::vector<GrayImage>& frames, const std::vector<Box2D>& gt,
                      const head::ScoreHead& head, const TrackerConfig& config,
                      std::uint64_t seed, bool keep_confidence = false);

}  // namespace dtrack::tracker
