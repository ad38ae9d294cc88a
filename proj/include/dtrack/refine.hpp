#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dtrack/box.hpp"

namespace dtrack::refine {

struct RefineConfig {
  std::size_t n_candidates = 10;
  std::size_t ascent_steps = 10;
  double step_scale = 1.0;  // eta
  std::size_t top_k = 3;
  double center_sigma = 0.1;  // fraction of sqrt(w h)
  double log_size_sigma = 0.1;
  double min_side = 2.0;
  bool always_accept = false;  // false: a step that lowers the score is rejected

  void validate() const;
};

/// Candidate 0 is `prev` recentered at (peak_x, peak_y); the rest are Gaussian
/// jitters of it.
std::vector<Box2D> sample_candidates(double peak_x, double peak_y, const Box2D& prev,
                                     const RefineConfig& cfg, std::mt19937_64& rng);

using ScoreFn = std::function<ScoreAndGrad(const Box2D&)>;

struct Refined {
  Box2D box;
  double score;  // -infinity when the score function failed
  std::vector<double> trace;  // score before each step, then the final score
};

/// Gradient ascent per candidate. Each step moves cx and w by eta * w times
/// their partial derivatives, and cy and h by eta * h times theirs: the
/// derivative with respect to size-normalized coordinates, applied as a pixel
/// step. Boxes are refined in the search patch, whose scale is tied to the
/// target size, so step lengths relative to the target are similar across
/// scales.
///
/// The overlap score has kinks where edges align, and there a fixed step
/// oscillates around the optimum. Unless `always_accept` is set, a step whose
/// score is lower than the current one is rejected: the box stays and that
/// candidate's eta is halved. Every step costs one score evaluation either
/// way, and `trace` holds the score of the current box after each step.
std::vector<Refined> refine_boxes(std::span<const Box2D> candidates, const ScoreFn& score_fn,
                                  const RefineConfig& cfg);

/// Parameter-wise mean of the k best finite-score boxes (ties: lower index).
/// Throws EstimationFailure when no entry has a finite score.
Box2D fuse_topk(std::span<const Refined> refined, std::size_t k);

}  // namespace dtrack::refine
