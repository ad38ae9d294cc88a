#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace dtrack {

/// Axis-aligned box in center/size form, pixel units.
///
/// Construction rejects non-positive or non-finite sides, so every overlap
/// formula downstream is total.
class Box2D {
 public:
  Box2D(double cx, double cy, double w, double h);

  /// Build from the top-left corner convention used by ground-truth files.
  static Box2D from_corner(double x, double y, double w, double h);

  double cx() const noexcept { return cx_; }
  double cy() const noexcept { return cy_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }

  double x0() const noexcept { return cx_ - 0.5 * w_; }
  double y0() const noexcept { return cy_ - 0.5 * h_; }
  double x1() const noexcept { return cx_ + 0.5 * w_; }
  double y1() const noexcept { return cy_ + 0.5 * h_; }
  double area() const noexcept { return w_ * h_; }

  Box2D recentered(double cx, double cy) const { return {cx, cy, w_, h_}; }

  friend bool operator==(const Box2D&, const Box2D&) = default;

 private:
  double cx_, cy_, w_, h_;
};

/// Partial derivatives of a scalar with respect to (cx, cy, w, h) of a box.
struct BoxGrad {
  double d_cx = 0.0;
  double d_cy = 0.0;
  double d_w = 0.0;
  double d_h = 0.0;
};

struct OverlapBreakdown {
  double iou = 0.0;
  double rho_sq = 0.0;   // squared center distance
  double c_sq = 0.0;     // squared diagonal of the enclosing box
  double penalty = 0.0;  // rho_sq / c_sq
  double score = 0.0;    // iou - lambda * penalty
  double loss = 0.0;     // 1 - iou + lambda * penalty
};

inline constexpr double kDefaultLambda = 1.0;

double iou(const Box2D& a, const Box2D& b) noexcept;
double center_dist_sq(const Box2D& a, const Box2D& b) noexcept;
double enclosing_diag_sq(const Box2D& a, const Box2D& b) noexcept;
double diou_score(const Box2D& a, const Box2D& b, double lambda = kDefaultLambda);
double diou_loss(const Box2D& a, const Box2D& b, double lambda = kDefaultLambda);
OverlapBreakdown overlap_breakdown(const Box2D& a, const Box2D& b,
                                   double lambda = kDefaultLambda);

struct ScoreAndGrad {
  double score = 0.0;
  BoxGrad grad;
};

/// DIoU score of `a` against the fixed box `b` and its gradient with respect
/// to `a`. At non-smooth configurations (edges exactly aligned, boxes exactly
/// touching) each component is the one-sided derivative for a positive
/// perturbation of that parameter, except where the score is a local maximum
/// along that parameter (it decreases in both directions, as for identical
/// boxes); there the component is 0. With lambda = 0 this is the IoU gradient.
ScoreAndGrad diou_score_grad(const Box2D& a, const Box2D& b,
                             double lambda = kDefaultLambda);

/// Structure-of-arrays batch of boxes, used by the vectorized overlap kernel.
struct BoxBatch {
  std::span<const double> cx, cy, w, h;
  std::size_t size() const noexcept { return cx.size(); }
};

/// Batched IoU and DIoU score for pairs (a[i], b[i]). Runs on the active
/// kernel set. Output spans must have the batch size.
void diou_batch(const BoxBatch& a, const BoxBatch& b, double lambda,
                std::span<double> iou_out, std::span<double> score_out);

}  // namespace dtrack
