#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dtrack/box.hpp"
#include "dtrack/errors.hpp"
#include "dtrack/kernels.hpp"

using namespace dtrack;

namespace {

// Pixel-counting overlap: cell centers of an n x n grid spanning both boxes.
double raster_iou(const Box2D& a, const Box2D& b, int n) {
  const double x0 = std::min(a.x0(), b.x0()), x1 = std::max(a.x1(), b.x1());
  const double y0 = std::min(a.y0(), b.y0()), y1 = std::max(a.y1(), b.y1());
  const double dx = (x1 - x0) / n, dy = (y1 - y0) / n;
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const double y = y0 + (i + 0.5) * dy;
    const bool ya = y >= a.y0() && y < a.y1(), yb = y >= b.y0() && y < b.y1();
    for (int j = 0; j < n; ++j) {
      const double x = x0 + (j + 0.5) * dx;
      const bool ia = ya && x >= a.x0() && x < a.x1();
      const bool ib = yb && x >= b.x0() && x < b.x1();
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct PairGen {
  std::mt19937_64 rng;
  std::uniform_real_distribution<double> pos{-50.0, 50.0};
  std::uniform_real_distribution<double> side{0.5, 40.0};
  explicit PairGen(std::uint64_t seed) : rng(seed) {}
  Box2D box() { return {pos(rng), pos(rng), side(rng), side(rng)}; }
  // Overlapping pairs are rare for independent boxes; place b near a half the time.
  std::pair<Box2D, Box2D> pair() {
    const Box2D a = box();
    if (rng() % 2 == 0) return {a, box()};
    std::normal_distribution<double> g(0.0, 0.5);
    return {a, Box2D(a.cx() + g(rng) * a.w(), a.cy() + g(rng) * a.h(),
                     a.w() * std::exp(g(rng)), a.h() * std::exp(g(rng)))};
  }
};

// Central differences of the score in each box parameter.
BoxGrad fd_grad(const Box2D& a, const Box2D& b, double lambda) {
  const double step = 1e-4 * std::max(a.w(), a.h());
  auto f = [&](double cx, double cy, double w, double h) {
    return diou_score(Box2D(cx, cy, w, h), b, lambda);
  };
  BoxGrad g;
  g.d_cx = (f(a.cx() + step, a.cy(), a.w(), a.h()) - f(a.cx() - step, a.cy(), a.w(), a.h())) /
           (2 * step);
  g.d_cy = (f(a.cx(), a.cy() + step, a.w(), a.h()) - f(a.cx(), a.cy() - step, a.w(), a.h())) /
           (2 * step);
  g.d_w = (f(a.cx(), a.cy(), a.w() + step, a.h()) - f(a.cx(), a.cy(), a.w() - step, a.h())) /
          (2 * step);
  g.d_h = (f(a.cx(), a.cy(), a.w(), a.h() + step) - f(a.cx(), a.cy(), a.w(), a.h() - step)) /
          (2 * step);
  return g;
}

// A configuration at least `margin` away from every edge alignment, where
// the score is smooth within the finite-difference stencil.
bool smooth_pair(const Box2D& a, const Box2D& b, double margin) {
  const double ea[] = {a.x0(), a.x1()}, eb[] = {b.x0(), b.x1()};
  const double fa[] = {a.y0(), a.y1()}, fb[] = {b.y0(), b.y1()};
  for (double u : ea) {
    for (double v : eb) {
      if (std::abs(u - v) < margin) return false;
    }
  }
  for (double u : fa) {
    for (double v : fb) {
      if (std::abs(u - v) < margin) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("construction rejects degenerate and non-finite boxes") {
  CHECK_THROWS_AS(Box2D(0, 0, 0.0, 1.0), ContractViolation);
  CHECK_THROWS_AS(Box2D(0, 0, 1.0, -2.0), ContractViolation);
  CHECK_THROWS_AS(Box2D(NAN, 0, 1.0, 1.0), ContractViolation);
  CHECK_THROWS_AS(Box2D(0, 0, INFINITY, 1.0), ContractViolation);
  const Box2D b = Box2D::from_corner(2, 3, 4, 6);
  CHECK(b.cx() == 4.0);
  CHECK(b.cy() == 6.0);
  CHECK(b.x0() == 2.0);
  CHECK(b.y1() == 9.0);
}

TEST_CASE("iou examples") {
  const Box2D a(5, 5, 10, 10);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box2D(25, 5, 10, 10)) == 0.0);
  CHECK(iou(a, Box2D(10, 5, 10, 10)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Pixel-counting oracle for the same pair.
  CHECK(raster_iou(a, Box2D(10, 5, 10, 10), 1000) == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("center distance and enclosing diagonal examples") {
  CHECK(center_dist_sq(Box2D(3, 3, 2, 2), Box2D(3, 3, 8, 1)) == 0.0);
  CHECK(center_dist_sq(Box2D(5, 5, 1, 1), Box2D(10, 5, 1, 1)) == 25.0);
  CHECK(center_dist_sq(Box2D(1, 2, 1, 1), Box2D(4, 6, 3, 3)) == 25.0);
  CHECK(enclosing_diag_sq(Box2D(5, 5, 10, 10), Box2D(5, 5, 10, 10)) == 200.0);
  CHECK(enclosing_diag_sq(Box2D(5, 5, 10, 10), Box2D(10, 5, 10, 10)) == 325.0);
  CHECK(enclosing_diag_sq(Box2D(6, 5, 4, 4), Box2D(5, 5, 10, 10)) == 200.0);
}

TEST_CASE("score and loss examples") {
  const Box2D a(5, 5, 10, 10), b(10, 5, 10, 10);
  CHECK(diou_score(a, a) == 1.0);
  CHECK(diou_loss(a, a) == 0.0);
  CHECK(diou_score(a, b) == doctest::Approx(1.0 / 3.0 - 25.0 / 325.0).epsilon(1e-15));
  CHECK(diou_score(a, b) == doctest::Approx(0.2564102564).epsilon(1e-9));
  CHECK(diou_loss(a, b) == doctest::Approx(0.7435897436).epsilon(1e-9));
  CHECK(diou_score(a, b, 0.0) == iou(a, b));
  const Box2D inner(7, 5, 4, 4), outer(5, 5, 10, 10);
  CHECK(diou_loss(inner, outer) == doctest::Approx(0.86).epsilon(1e-14));

  const OverlapBreakdown o = overlap_breakdown(a, b);
  CHECK(o.iou == iou(a, b));
  CHECK(o.rho_sq == 25.0);
  CHECK(o.c_sq == 325.0);
  CHECK(o.penalty == doctest::Approx(25.0 / 325.0));
  CHECK(o.score == diou_score(a, b));
  CHECK(o.loss == diou_loss(a, b));
}

TEST_CASE("loss-score duality, dominance, symmetry and bounds on random pairs") {
  PairGen gen(101);
  for (int k = 0; k < 20000; ++k) {
    const auto [a, b] = gen.pair();
    const OverlapBreakdown o = overlap_breakdown(a, b);
    CHECK(std::abs(o.loss - (1.0 - o.score)) <= 1e-12);
    CHECK(o.penalty >= 0.0);
    CHECK(o.penalty < 1.0);
    CHECK(o.score > -1.0);
    CHECK(o.score <= 1.0);
    CHECK(o.loss >= 0.0);
    CHECK(o.loss < 2.0);
    CHECK(o.iou >= 0.0);
    CHECK(o.iou <= 1.0);
    if (o.rho_sq > 0.0) {
      CHECK(o.score < o.iou);
      CHECK(o.loss > 1.0 - o.iou);
    } else {
      CHECK(o.score == o.iou);
    }
    const OverlapBreakdown r = overlap_breakdown(b, a);
    CHECK(r.iou == doctest::Approx(o.iou).epsilon(1e-15));
    CHECK(r.penalty == doctest::Approx(o.penalty).epsilon(1e-15));
    CHECK(r.score == doctest::Approx(o.score).epsilon(1e-14));
    CHECK(r.loss == doctest::Approx(o.loss).epsilon(1e-14));
  }
}

TEST_CASE("concentric pairs have equal score and iou") {
  PairGen gen(102);
  for (int k = 0; k < 1000; ++k) {
    const Box2D a = gen.box();
    const Box2D b(a.cx(), a.cy(), gen.side(gen.rng), gen.side(gen.rng));
    CHECK(diou_score(a, b) == iou(a, b));
    CHECK(diou_loss(a, b) == 1.0 - iou(a, b));
  }
}

TEST_CASE("similarity invariance") {
  PairGen gen(103);
  std::uniform_real_distribution<double> shift(-100.0, 100.0), scale(0.1, 10.0);
  for (int k = 0; k < 2000; ++k) {
    const auto [a, b] = gen.pair();
    const double tx = shift(gen.rng), ty = shift(gen.rng), s = scale(gen.rng);
    const OverlapBreakdown o = overlap_breakdown(a, b);
    const OverlapBreakdown t = overlap_breakdown(Box2D(a.cx() + tx, a.cy() + ty, a.w(), a.h()),
                                                 Box2D(b.cx() + tx, b.cy() + ty, b.w(), b.h()));
    const OverlapBreakdown z = overlap_breakdown(Box2D(a.cx() * s, a.cy() * s, a.w() * s, a.h() * s),
                                                 Box2D(b.cx() * s, b.cy() * s, b.w() * s, b.h() * s));
    for (const OverlapBreakdown* q : {&t, &z}) {
      CHECK(std::abs(q->iou - o.iou) <= 1e-10);
      CHECK(std::abs(q->penalty - o.penalty) <= 1e-10);
      CHECK(std::abs(q->score - o.score) <= 1e-10);
      CHECK(std::abs(q->loss - o.loss) <= 1e-10);
    }
  }
}

TEST_CASE("iou agrees with a rasterization oracle") {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> pos(0.0, 30.0), side(5.0, 25.0);
  for (int k = 0; k < 40; ++k) {
    const Box2D a(pos(rng), pos(rng), side(rng), side(rng));
    const Box2D b(a.cx() + pos(rng) - 15.0, a.cy() + pos(rng) - 15.0, side(rng), side(rng));
    CHECK(std::abs(iou(a, b) - raster_iou(a, b, 1000)) <= 2e-3);
  }
}

TEST_CASE("gradient matches central differences") {
  PairGen gen(105);
  int checked = 0;
  for (int k = 0; checked < 2000 && k < 100000; ++k) {
    const auto [a, b] = gen.pair();
    if (!smooth_pair(a, b, 1e-2 * std::max(a.w(), a.h()))) continue;
    for (double lambda : {0.0, 1.0}) {
      const ScoreAndGrad sg = diou_score_grad(a, b, lambda);
      CHECK(sg.score == doctest::Approx(diou_score(a, b, lambda)).epsilon(1e-15));
      const BoxGrad fd = fd_grad(a, b, lambda);
      const double an[] = {sg.grad.d_cx, sg.grad.d_cy, sg.grad.d_w, sg.grad.d_h};
      const double nu[] = {fd.d_cx, fd.d_cy, fd.d_w, fd.d_h};
      double norm = 0.0, err = 0.0;
      for (int i = 0; i < 4; ++i) {
        norm = std::max(norm, std::abs(nu[i]));
        err = std::max(err, std::abs(an[i] - nu[i]));
      }
      CHECK(err <= 1e-4 * std::max(norm, 1e-6));
    }
    ++checked;
  }
  CHECK(checked == 2000);
}

TEST_CASE("gradient examples") {
  const ScoreAndGrad same = diou_score_grad(Box2D(3, 4, 5, 6), Box2D(3, 4, 5, 6));
  CHECK(same.grad.d_cx == 0.0);
  CHECK(same.grad.d_cy == 0.0);

  const Box2D inner(7, 5, 4, 4), outer(5, 5, 10, 10);
  const ScoreAndGrad plain = diou_score_grad(inner, outer, 0.0);
  CHECK(plain.grad.d_cx == 0.0);
  CHECK(plain.grad.d_cy == 0.0);
  const ScoreAndGrad full = diou_score_grad(inner, outer, 1.0);
  CHECK(full.grad.d_cx == doctest::Approx(-0.02).epsilon(1e-14));
  CHECK(full.grad.d_cy == 0.0);
  const BoxGrad fd = fd_grad(inner, outer, 1.0);
  CHECK(fd.d_cx == doctest::Approx(-0.02).epsilon(1e-6));
}

TEST_CASE("containment stall: IoU center gradient vanishes, DIoU's does not") {
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> off(-2.5, 2.5), side(1.0, 4.0);
  const Box2D outer(0, 0, 12, 12);
  for (int k = 0; k < 500; ++k) {
    const Box2D inner(off(rng), off(rng), side(rng), side(rng));
    REQUIRE(inner.x0() > outer.x0());
    REQUIRE(inner.x1() < outer.x1());
    const ScoreAndGrad plain = diou_score_grad(inner, outer, 0.0);
    const ScoreAndGrad full = diou_score_grad(inner, outer, 1.0);
    CHECK(plain.grad.d_cx == 0.0);
    CHECK(plain.grad.d_cy == 0.0);
    if (center_dist_sq(inner, outer) > 0.0) {
      CHECK(std::abs(full.grad.d_cx) + std::abs(full.grad.d_cy) > 0.0);
    }
  }
}

TEST_CASE("one-sided derivatives at touching and aligned edges") {
  // Right edge of a touches left edge of b: growing cx to the right creates
  // overlap, so the positive-direction derivative of IoU in cx is positive.
  const Box2D a(5, 5, 10, 10), b(15, 5, 10, 10);
  const ScoreAndGrad g = diou_score_grad(a, b, 0.0);
  CHECK(std::isfinite(g.grad.d_cx));
  CHECK(g.grad.d_cx > 0.0);
  const double h = 1e-7;
  const double fwd = (iou(Box2D(5 + h, 5, 10, 10), b) - iou(a, b)) / h;
  CHECK(g.grad.d_cx == doctest::Approx(fwd).epsilon(1e-4));

  // Aligned left edges, a narrower than c: growing w moves a's left edge
  // outside c (one-sided, positive direction) while shrinking w loses
  // overlap; not a maximum, so the positive-direction derivative applies.
  const Box2D c(6, 5, 12, 10), narrow(5, 5, 10, 10);
  REQUIRE(narrow.x0() == c.x0());
  const ScoreAndGrad gw = diou_score_grad(narrow, c, 0.0);
  const double fw = (iou(Box2D(5, 5, 10 + h, 10), c) - iou(narrow, c)) / h;
  CHECK(gw.grad.d_w == doctest::Approx(fw).epsilon(1e-4));

  // Identical boxes are a maximum along every parameter: all components 0,
  // reproducibly.
  const ScoreAndGrad s1 = diou_score_grad(a, a, 1.0), s2 = diou_score_grad(a, a, 1.0);
  CHECK(s1.grad.d_cx == 0.0);
  CHECK(s1.grad.d_cy == 0.0);
  CHECK(s1.grad.d_w == 0.0);
  CHECK(s1.grad.d_h == 0.0);
  CHECK(s1.grad.d_w == s2.grad.d_w);
}

TEST_CASE("batched overlap matches the scalar functions on every kernel set") {
  PairGen gen(107);
  const std::size_t n = 257;
  std::vector<double> acx, acy, aw, ah, bcx, bcy, bw, bh;
  std::vector<std::pair<Box2D, Box2D>> pairs;
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = gen.pair();
    pairs.push_back(p);
    acx.push_back(p.first.cx()), acy.push_back(p.first.cy());
    aw.push_back(p.first.w()), ah.push_back(p.first.h());
    bcx.push_back(p.second.cx()), bcy.push_back(p.second.cy());
    bw.push_back(p.second.w()), bh.push_back(p.second.h());
  }
  const BoxBatch A{acx, acy, aw, ah}, B{bcx, bcy, bw, bh};
  for (kernels::Isa isa : {kernels::Isa::Scalar, kernels::Isa::Avx2}) {
    if (!kernels::force(isa)) continue;
    std::vector<double> io(n), so(n);
    diou_batch(A, B, 1.0, io, so);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(io[k] == doctest::Approx(iou(pairs[k].first, pairs[k].second)).epsilon(1e-14));
      CHECK(so[k] ==
            doctest::Approx(diou_score(pairs[k].first, pairs[k].second)).epsilon(1e-14));
    }
  }
  std::vector<double> small(3);
  CHECK_THROWS_AS(diou_batch(A, B, 1.0, small, small), ContractViolation);
}
