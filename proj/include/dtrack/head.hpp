#pragma once

// Reference-conditioned overlap predictor.
//
// A candidate box is pooled from the search-patch features on a 5x5 grid,
// modulated elementwise by the template descriptor pooled from the reference
// frame (both normalized per channel first), concatenated with the box offset relative to the patch, and scored
// by a 2 x 64 fully connected network with ELU activations. The score is
// differentiable in the box, which drives refinement by gradient ascent.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dtrack/box.hpp"
#include "dtrack/features.hpp"
#include "dtrack/sequence.hpp"

namespace dtrack::head {

inline constexpr std::size_t kPoolGrid = 5;

/// 5 x 5 x C pooled values, channel-major: c * 25 + gy * 5 + gx.
struct RegionDescriptor {
  std::vector<double> values;
  friend bool operator==(const RegionDescriptor&, const RegionDescriptor&) = default;
};

/// Descriptor plus its derivatives with respect to (cx, cy, w, h).
struct PooledRegion {
  RegionDescriptor descriptor;
  std::array<std::vector<double>, 4> jacobian;
};

/// Bilinear 5x5 pooling over a box in patch pixel coordinates. Sample points
/// are the centers of a uniform 5x5 partition of the box; points beyond the
/// map clamp to the border cell. Throws OutOfSupport if the box center lies
/// outside the map.
RegionDescriptor pool_region(const FeatureMap& features, const Box2D& box);
PooledRegion pool_region_with_jacobian(const FeatureMap& features, const Box2D& box);

enum class TargetKind { Diou, Iou };

double target_lambda(TargetKind kind) noexcept;

struct HeadParams {
  TargetKind target = TargetKind::Diou;
  double size_factor = 5.0;
  std::size_t input_dim = 0;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;
  std::vector<double> input_shift, input_scale;  // standardization
  std::vector<double> W1, b1, W2, b2, W3;
  double b3 = 0.0;

  static HeadParams zeros(std::size_t descriptor_dim, std::size_t h1 = 64,
                          std::size_t h2 = 64);
  std::size_t parameter_count() const noexcept;

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

/// Box offset relative to a patch of side `extent`, in units of the nominal
/// target size extent / size_factor: (dx, dy, log w, log h).
std::array<double, 4> box_offset(const Box2D& box, double extent, double size_factor);

inline constexpr double kChannelNormEpsilon = 1e-12;

/// Divides each channel's kPoolGrid^2 pooled values by their Euclidean norm
/// (plus a tiny epsilon), which removes per-sequence contrast. `norms`, if
/// given, receives the per-channel divisors.
std::vector<double> channel_normalized(std::span<const double> values,
                                       std::vector<double>* norms);

/// Raw (unstandardized) network input for one candidate: the channel-normalized
/// template and candidate descriptors multiplied elementwise, then the box
/// offset.
std::vector<double> head_input(const RegionDescriptor& tmpl, const RegionDescriptor& cand,
                               const Box2D& box, double extent, double size_factor);

double predict(const HeadParams& params, std::span<const double> raw_input);

/// Predicted score of `box` and its exact derivative through pooling and the
/// network.
ScoreAndGrad predict_with_grad(const HeadParams& params, const RegionDescriptor& tmpl,
                               const FeatureMap& features, const Box2D& box);

/// Learned head, or the analytic overlap against a supplied reference box.
class ScoreHead {
 public:
  static ScoreHead learned(std::shared_ptr<const HeadParams> params);
  static ScoreHead oracle(TargetKind kind);

  bool is_oracle() const noexcept { return params_ == nullptr; }
  TargetKind target() const noexcept;
  const HeadParams* params() const noexcept { return params_.get(); }

  /// `reference` is required in oracle mode and ignored otherwise.
  ScoreAndGrad predict_with_grad(const RegionDescriptor& tmpl, const FeatureMap& features,
                                 const Box2D& box,
                                 const std::optional<Box2D>& reference) const;

 private:
  std::shared_ptr<const HeadParams> params_;
  TargetKind oracle_kind_ = TargetKind::Diou;
};

// ---------------------------------------------------------------------------
// Training data and offline training

struct PairSamplingConfig {
  std::size_t pairs = 5000;
  std::size_t jitters_per_pair = 1;
  std::size_t max_frame_gap = 40;
  double center_sigma = 0.3;    // fraction of sqrt(w h)
  double log_size_sigma = 0.3;
  double min_iou = 0.1;
  double crop_center_sigma = 0.1;  // search-crop displacement, fraction of sqrt(w h)
  double crop_log_scale_sigma = 0.05;
  bool zero_jitter = false;
  double size_factor = 5.0;
  std::size_t out_size = 144;
  FeatureConfig features;
  TargetKind target = TargetKind::Diou;
};

struct HeadPair {
  RegionDescriptor template_descriptor;
  FeatureMap features;  // test-frame search patch
  Box2D ground_truth;   // test-frame target, patch coordinates
};

struct HeadExample {
  std::size_t pair = 0;
  Box2D candidate;
  double target = 0.0;
};

struct HeadDataset {
  TargetKind target = TargetKind::Diou;
  double size_factor = 5.0;
  std::vector<HeadPair> pairs;
  std::vector<HeadExample> examples;
  std::size_t skipped_pairs = 0;

  std::size_t size() const noexcept { return examples.size(); }
  std::vector<double> input(std::size_t example) const;
};

HeadDataset sample_training_pairs(std::span<const Sequence> sequences,
                                  const PairSamplingConfig& cfg, std::uint64_t seed);

struct HeadTrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double decay_factor = 0.2;
  std::size_t decay_every = 15;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double holdout_fraction = 0.1;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;

  /// Step size used during a 0-based epoch.
  double learning_rate_at(std::size_t epoch) const noexcept;
  void validate() const;
};

struct HeadTrainReport {
  std::vector<double> epoch_losses;  // mean squared error per epoch
  double heldout_mae = 0.0;
  std::size_t heldout_count = 0;
};

struct HeadTrainResult {
  HeadParams params;
  HeadTrainReport report;
};

/// Mean-squared-error regression of the dataset targets with ADAM and a
/// stepped learning-rate schedule. Pairs are split into train and held-out
/// parts by `holdout_fraction`. Deterministic given the seed.
HeadTrainResult train_offline(const HeadDataset& dataset, const HeadTrainConfig& cfg,
                              std::uint64_t seed);

void save_head(const HeadParams& params, const std::filesystem::path& path);
HeadParams load_head(const std::filesystem::path& path);

}  // namespace dtrack::head
