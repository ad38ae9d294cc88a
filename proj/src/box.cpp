#include "dtrack/box.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dtrack/errors.hpp"
#include "dtrack/kernels.hpp"

namespace dtrack {

Box2D::Box2D(double cx, double cy, double w, double h) : cx_(cx), cy_(cy), w_(w), h_(h) {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h)) {
    throw ContractViolation("Box2D: non-finite parameter");
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw ContractViolation("Box2D: non-positive side (w=" + std::to_string(w) +
                            ", h=" + std::to_string(h) + ")");
  }
}

Box2D Box2D::from_corner(double x, double y, double w, double h) {
  return {x + 0.5 * w, y + 0.5 * h, w, h};
}

namespace {

struct Extents {
  double iw, ih;  // intersection sides, clamped at zero
  double ew, eh;  // enclosing sides
};

Extents extents(const Box2D& a, const Box2D& b) noexcept {
  return {std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0())),
          std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0())),
          std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0()),
          std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0())};
}

// One-sided (positive direction) derivatives of min/max/relu in their first
// argument, the second argument held fixed.
double dmin(double a, double b, double da) noexcept {
  if (a < b) return da;
  if (a > b) return 0.0;
  return std::min(da, 0.0);
}

double dmax(double a, double b, double da) noexcept {
  if (a > b) return da;
  if (a < b) return 0.0;
  return std::max(da, 0.0);
}

double drelu(double v, double dv) noexcept {
  if (v > 0.0) return dv;
  if (v < 0.0) return 0.0;
  return std::max(dv, 0.0);
}

// Perturbation of box a along one of its parameters, expressed on corners.
struct Direction {
  double dcx, dcy, dx0, dx1, dy0, dy1, dw, dh;

  constexpr Direction operator-() const noexcept {
    return {-dcx, -dcy, -dx0, -dx1, -dy0, -dy1, -dw, -dh};
  }
};

constexpr Direction kAlongCx{1, 0, 1, 1, 0, 0, 0, 0};
constexpr Direction kAlongCy{0, 1, 0, 0, 1, 1, 0, 0};
constexpr Direction kAlongW{0, 0, -0.5, 0.5, 0, 0, 1, 0};
constexpr Direction kAlongH{0, 0, 0, 0, -0.5, 0.5, 0, 1};

double directional(const Box2D& a, const Box2D& b, double lambda, const Extents& e,
                   double inter, double uni, double rho_sq, double c_sq,
                   const Direction& d) noexcept {
  const double iw_raw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih_raw = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  const double diw = drelu(iw_raw, dmin(a.x1(), b.x1(), d.dx1) - dmax(a.x0(), b.x0(), d.dx0));
  const double dih = drelu(ih_raw, dmin(a.y1(), b.y1(), d.dy1) - dmax(a.y0(), b.y0(), d.dy0));
  const double dew = dmax(a.x1(), b.x1(), d.dx1) - dmin(a.x0(), b.x0(), d.dx0);
  const double deh = dmax(a.y1(), b.y1(), d.dy1) - dmin(a.y0(), b.y0(), d.dy0);

  const double d_inter = diw * e.ih + e.iw * dih;
  const double d_area_a = d.dw * a.h() + a.w() * d.dh;
  const double d_uni = d_area_a - d_inter;
  const double d_iou = (d_inter * uni - inter * d_uni) / (uni * uni);

  const double d_rho = 2.0 * (a.cx() - b.cx()) * d.dcx + 2.0 * (a.cy() - b.cy()) * d.dcy;
  const double d_c = 2.0 * e.ew * dew + 2.0 * e.eh * deh;
  const double d_pen = (d_rho * c_sq - rho_sq * d_c) / (c_sq * c_sq);
  return d_iou - lambda * d_pen;
}

}  // namespace

double iou(const Box2D& a, const Box2D& b) noexcept {
  const Extents e = extents(a, b);
  const double inter = e.iw * e.ih;
  return inter / (a.area() + b.area() - inter);
}

double center_dist_sq(const Box2D& a, const Box2D& b) noexcept {
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  return dx * dx + dy * dy;
}

double enclosing_diag_sq(const Box2D& a, const Box2D& b) noexcept {
  const Extents e = extents(a, b);
  return e.ew * e.ew + e.eh * e.eh;
}

OverlapBreakdown overlap_breakdown(const Box2D& a, const Box2D& b, double lambda) {
  if (!(lambda >= 0.0)) throw ContractViolation("overlap: lambda must be >= 0");
  OverlapBreakdown o;
  o.iou = iou(a, b);
  o.rho_sq = center_dist_sq(a, b);
  o.c_sq = enclosing_diag_sq(a, b);
  o.penalty = o.rho_sq / o.c_sq;
  o.score = o.iou - lambda * o.penalty;
  o.loss = 1.0 - o.iou + lambda * o.penalty;
  return o;
}

double diou_score(const Box2D& a, const Box2D& b, double lambda) {
  return overlap_breakdown(a, b, lambda).score;
}

double diou_loss(const Box2D& a, const Box2D& b, double lambda) {
  return overlap_breakdown(a, b, lambda).loss;
}

ScoreAndGrad diou_score_grad(const Box2D& a, const Box2D& b, double lambda) {
  const OverlapBreakdown o = overlap_breakdown(a, b, lambda);
  const Extents e = extents(a, b);
  const double inter = e.iw * e.ih;
  const double uni = a.area() + b.area() - inter;
  ScoreAndGrad out;
  out.score = o.score;
  // Positive-direction derivative, except at a local maximum along the
  // parameter (the score drops both ways, e.g. identical boxes), where
  // ascent has nowhere to go and the derivative is 0. Away from kinks the
  // two one-sided derivatives are exact negatives and this never triggers.
  auto along = [&](const Direction& d) {
    const double up = directional(a, b, lambda, e, inter, uni, o.rho_sq, o.c_sq, d);
    const double down = directional(a, b, lambda, e, inter, uni, o.rho_sq, o.c_sq, -d);
    return up < 0.0 && down < 0.0 ? 0.0 : up;
  };
  out.grad.d_cx = along(kAlongCx);
  out.grad.d_cy = along(kAlongCy);
  out.grad.d_w = along(kAlongW);
  out.grad.d_h = along(kAlongH);
  return out;
}

void diou_batch(const BoxBatch& a, const BoxBatch& b, double lambda,
                std::span<double> iou_out, std::span<double> score_out) {
  const std::size_t n = a.size();
  const bool shapes_ok = a.cy.size() == n && a.w.size() == n && a.h.size() == n &&
                         b.cx.size() == n && b.cy.size() == n && b.w.size() == n &&
                         b.h.size() == n && iou_out.size() == n && score_out.size() == n;
  if (!shapes_ok) throw ContractViolation("diou_batch: size mismatch");
  if (!(lambda >= 0.0)) throw ContractViolation("diou_batch: lambda must be >= 0");
  kernels::active().diou_batch(a.cx.data(), a.cy.data(), a.w.data(), a.h.data(),
                               b.cx.data(), b.cy.data(), b.w.data(), b.h.data(), n,
                               lambda, iou_out.data(), score_out.data());
}

}  // namespace dtrack
