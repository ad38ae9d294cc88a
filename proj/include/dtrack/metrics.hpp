#pragma once

// One-pass-evaluation metrics: precision over center-error thresholds and
// success over overlap thresholds with its area under the curve.

#include <cstddef>
#include <span>
#include <vector>

#include "dtrack/box.hpp"

namespace dtrack::metrics {

inline constexpr std::size_t kPrecisionMaxPx = 50;     // thresholds 0..50 px
inline constexpr std::size_t kSuccessThresholds = 21;  // 0.00..1.00 step 0.05

struct PrecisionCurve {
  std::vector<double> curve;  // curve[t] = fraction with center error <= t px
  double at20 = 0.0;
};

struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> curve;  // fraction with IoU >= threshold
  double auc = 0.0;           // mean of the curve over the grid
};

struct EvalReport {
  PrecisionCurve precision;
  SuccessCurve success;
  std::vector<double> center_errors;
  std::vector<double> ious;
  double mean_iou = 0.0;
};

std::vector<double> center_errors(std::span<const Box2D> predicted, std::span<const Box2D> gt);
std::vector<double> overlaps(std::span<const Box2D> predicted, std::span<const Box2D> gt);

PrecisionCurve precision_curve(std::span<const Box2D> predicted, std::span<const Box2D> gt);
SuccessCurve success_auc(std::span<const Box2D> predicted, std::span<const Box2D> gt);

PrecisionCurve precision_from_errors(std::span<const double> errors);
SuccessCurve success_from_ious(std::span<const double> ious);

EvalReport evaluate(std::span<const Box2D> predicted, std::span<const Box2D> gt);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Median of a non-empty sample (mean of the middle two for even sizes).
double median(std::vector<double> values);

}  // namespace dtrack::metrics
