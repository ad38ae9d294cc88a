#pragma once

// Two-layer convolutional target classifier trained online as an l2 problem:
//
//   f(z; w) = phi2(w2 * phi1(w1 * z))
//   L(w)    = sum_i beta_i |f(z_i; w) - y_i|^2 + zeta |w|^2
//
// w1 is a 1x1 convolution C -> D, w2 a 4x4 convolution D -> 1. phi1 is the
// rectifier, phi2(t) = alpha (exp(t / alpha) - 1) for t <= 0 and t above.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "dtrack/features.hpp"
#include "dtrack/gn_cg.hpp"

namespace dtrack::classifier {

inline constexpr std::size_t kKernelTaps = 16;  // 4 x 4

enum class Optimizer { GaussNewtonCg, GradientDescent };

struct ClassifierWeights {
  std::size_t in_channels = 0;
  std::size_t hidden = 0;
  double alpha = 0.05;
  std::vector<double> w1;  // hidden x in_channels
  std::vector<double> w2;  // [ky][kx][hidden]
  // Fixed per-channel input standardization (z - mean) * inv_std applied
  // before w1; empty means identity. Not trained.
  std::vector<double> input_mean;
  std::vector<double> input_inv_std;

  ClassifierWeights() = default;
  ClassifierWeights(std::size_t c, std::size_t d, double alpha);

  friend bool operator==(const ClassifierWeights&, const ClassifierWeights&) = default;
};

struct TrainSample {
  FeatureMap features;
  std::vector<double> label;  // H x W, Gaussian-shaped
  double weight = 1.0;
};

struct Schedule {
  std::size_t gn_rounds = 0;
  std::size_t cg_iterations = 0;
};

struct ClassifierConfig {
  std::size_t hidden_channels = 16;
  double alpha = 0.05;
  double zeta = 0.01;
  double label_sigma = 2.0;  // feature cells
  Schedule init{6, 10};
  Schedule update{1, 5};
  std::size_t update_period = 10;
  std::size_t init_samples = 30;
  std::size_t memory_capacity = 50;
  bool train_w2_at_init = true;
  double w2_init_std = 0.05;
  bool normalize_inputs = true;  // fit input standardization at init
  Optimizer optimizer = Optimizer::GaussNewtonCg;
  // Step of the gradient-descent baseline on the loss divided by the number
  // of label residuals.
  double gd_learning_rate = 0.5;

  void validate() const;
};

double phi2(double t, double alpha) noexcept;
double phi2_derivative(double t, double alpha) noexcept;

/// exp(-|p - peak|^2 / (2 sigma^2)) over an H x W grid of cells.
std::vector<double> gaussian_label(double peak_row, double peak_col, std::size_t H,
                                   std::size_t W, double sigma);

/// Random w1 (scaled normal) and small random w2 from a seed.
ClassifierWeights initial_weights(std::size_t in_channels, const ClassifierConfig& cfg,
                                  std::uint64_t seed);

/// Per-channel mean and inverse standard deviation over all cells of all
/// samples. Channels with (near) zero spread get unit scale.
void fit_input_normalization(ClassifierWeights& w, std::span<const TrainSample> samples);

/// Feature values in the layout w1 consumes: pixel-major, standardized.
std::vector<double> prepare_input(const ClassifierWeights& w, const FeatureMap& z);

/// Confidence map (H x W) for one feature map.
std::vector<double> forward(const ClassifierWeights& w, const FeatureMap& z);

enum class Trainable { Both, W1Only, W2Only };

/// Residual of the weighted l2 problem: per-sample rows sqrt(beta) (f - y)
/// followed by sqrt(zeta) times the trainable parameters. Layers outside the
/// trainable set are taken from `base`; for W2Only the first-layer
/// activations are computed once.
class ClassifierProblem final : public gn::ResidualProblem {
 public:
  ClassifierProblem(std::vector<const TrainSample*> samples, double zeta,
                    Trainable which, const ClassifierWeights& base);

  std::size_t parameter_dim() const override;
  std::size_t residual_dim() const override;
  void residual(std::span<const double> w, std::span<double> r) const override;
  void jvp(std::span<const double> w, std::span<const double> p,
           std::span<double> out) const override;
  void vjp(std::span<const double> w, std::span<const double> u,
           std::span<double> out) const override;

  std::vector<double> pack(const ClassifierWeights& w) const;
  ClassifierWeights unpack(std::span<const double> params) const;
  std::size_t label_rows() const noexcept { return samples_.size() * cells_; }

 private:
  struct SampleCache {
    std::vector<double> pre;     // P x D first-layer pre-activation
    std::vector<double> hidden;  // P x D
    std::vector<double> out;     // P
    std::vector<double> dphi;    // P
  };

  void linearize(std::span<const double> w) const;
  void compute_hidden(std::size_t i, const double* w1, SampleCache& c) const;
  bool trains_w1() const noexcept { return which_ != Trainable::W2Only; }
  bool trains_w2() const noexcept { return which_ != Trainable::W1Only; }
  const double* w1_of(std::span<const double> w) const noexcept;
  const double* w2_of(std::span<const double> w) const noexcept;

  std::vector<const TrainSample*> samples_;
  std::vector<std::vector<double>> inputs_;  // pixel-major features per sample
  double zeta_;
  Trainable which_;
  ClassifierWeights base_;
  std::size_t H_ = 0, W_ = 0, C_ = 0, D_ = 0, cells_ = 0;

  mutable std::vector<double> lin_point_;
  mutable bool has_lin_ = false;
  mutable std::vector<SampleCache> cache_;
};

struct TrainResult {
  ClassifierWeights weights;
  gn::SolveReport report;
};

/// First-frame training on the augmented sample set with the init schedule.
/// With normalize_inputs, the input standardization is first fitted to the
/// samples (replacing any in `start`).
TrainResult train_initial(std::span<const TrainSample> samples, const ClassifierConfig& cfg,
                          const ClassifierWeights& start);

/// Initial samples are kept forever; later samples go through a ring buffer.
class SampleMemory {
 public:
  explicit SampleMemory(std::size_t capacity = 50) : capacity_(capacity) {}

  void set_initial(std::vector<TrainSample> samples) { initial_ = std::move(samples); }
  void push(TrainSample sample);

  std::size_t size() const noexcept { return initial_.size() + recent_.size(); }
  std::vector<const TrainSample*> all() const;

 private:
  std::size_t capacity_;
  std::vector<TrainSample> initial_;
  std::deque<TrainSample> recent_;
};

struct UpdateResult {
  ClassifierWeights weights;
  bool optimized = false;
  std::optional<gn::SolveReport> report;
};

/// Appends `sample` to memory; on frames where frame_index is a multiple of
/// the update period, re-optimizes w2 alone with the update schedule.
UpdateResult update_periodic(const ClassifierWeights& weights, SampleMemory& memory,
                             TrainSample sample, std::size_t frame_index,
                             const ClassifierConfig& cfg);

/// Weighted l2 loss of `w` over samples.
double memory_loss(const ClassifierWeights& w, std::span<const TrainSample* const> samples,
                   double zeta);

}  // namespace dtrack::classifier
