#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dtrack/errors.hpp"
#include "dtrack/metrics.hpp"

using namespace dtrack;
using namespace dtrack::metrics;

namespace {

std::vector<Box2D> track(std::size_t n) {
  std::vector<Box2D> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back(50.0 + i, 40.0 + 0.5 * i, 20.0, 16.0);
  return v;
}

std::vector<Box2D> shifted(const std::vector<Box2D>& v, double dx) {
  std::vector<Box2D> out;
  for (const Box2D& b : v) out.emplace_back(b.cx() + dx, b.cy(), b.w(), b.h());
  return out;
}

}  // namespace

TEST_CASE("perfect tracking") {
  const auto gt = track(12);
  const EvalReport r = evaluate(gt, gt);
  REQUIRE(r.precision.curve.size() == 51);
  for (double v : r.precision.curve) CHECK(v == 1.0);
  CHECK(r.precision.at20 == 1.0);
  CHECK(r.success.curve.size() == 21);
  CHECK(r.success.auc == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.mean_iou == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("constant 30 px offset") {
  const auto gt = track(8);
  const PrecisionCurve p = precision_curve(shifted(gt, 30.0), gt);
  CHECK(p.at20 == 0.0);
  CHECK(p.curve[29] == 0.0);
  CHECK(p.curve[30] == 1.0);
}

TEST_CASE("half at 10 px, half at 25 px") {
  const auto gt = track(10);
  std::vector<Box2D> pred;
  for (std::size_t i = 0; i < 10; ++i) {
    const double dx = i % 2 == 0 ? 10.0 : 25.0;
    pred.emplace_back(gt[i].cx() + dx, gt[i].cy(), gt[i].w(), gt[i].h());
  }
  const PrecisionCurve p = precision_curve(pred, gt);
  CHECK(p.at20 == 0.5);
  CHECK(p.curve[9] == 0.0);
  CHECK(p.curve[10] == 0.5);
  CHECK(p.curve[25] == 1.0);
}

TEST_CASE("success grid arithmetic") {
  const SuccessCurve zero = success_from_ious(std::vector<double>(7, 0.0));
  CHECK(zero.curve[0] == 1.0);
  for (std::size_t k = 1; k < 21; ++k) CHECK(zero.curve[k] == 0.0);
  CHECK(zero.auc == doctest::Approx(1.0 / 21.0).epsilon(1e-15));

  const SuccessCurve half = success_from_ious(std::vector<double>(7, 0.5));
  CHECK(half.thresholds[10] == 0.5);
  CHECK(half.curve[10] == 1.0);
  CHECK(half.curve[11] == 0.0);
  CHECK(half.auc == doctest::Approx(11.0 / 21.0).epsilon(1e-15));

  // Disjoint boxes have IoU exactly 0.
  const auto gt = track(3);
  CHECK(success_auc(shifted(gt, 100.0), gt).auc == doctest::Approx(1.0 / 21.0).epsilon(1e-15));
}

TEST_CASE("curves are monotone and AUC is in [0, 1] on arbitrary inputs") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0), e(0.0, 80.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> ious(1 + trial % 37), errs(1 + trial % 41);
    for (double& v : ious) v = trial % 5 == 0 ? std::round(u(rng) * 20.0) / 20.0 : u(rng);
    for (double& v : errs) v = trial % 7 == 0 ? std::round(e(rng)) : e(rng);
    const SuccessCurve s = success_from_ious(ious);
    const PrecisionCurve p = precision_from_errors(errs);
    for (std::size_t k = 1; k < s.curve.size(); ++k) CHECK(s.curve[k] <= s.curve[k - 1]);
    for (std::size_t k = 1; k < p.curve.size(); ++k) CHECK(p.curve[k] >= p.curve[k - 1]);
    CHECK(s.auc >= 0.0);
    CHECK(s.auc <= 1.0);
  }
}

TEST_CASE("length and emptiness contracts") {
  const auto gt = track(4);
  const std::vector<Box2D> short_pred(gt.begin(), gt.begin() + 3);
  CHECK_THROWS_AS(precision_curve(short_pred, gt), ContractViolation);
  CHECK_THROWS_AS(success_auc(short_pred, gt), ContractViolation);
  CHECK_THROWS_AS(evaluate(std::vector<Box2D>{}, std::vector<Box2D>{}), ContractViolation);
  CHECK_THROWS_AS(median({}), ContractViolation);
  CHECK_THROWS_AS(spearman(std::vector<double>{1.0}, std::vector<double>{2.0}), ContractViolation);
}

TEST_CASE("spearman and median") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  CHECK(spearman(a, std::vector<double>{10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK(spearman(a, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Monotone transform leaves the rank correlation unchanged.
  CHECK(spearman(a, std::vector<double>{1, 8, 27, 64, 125}) == doctest::Approx(1.0));
  // Ties get average ranks: ranks (0, 1.5, 1.5, 3) vs (0, 1, 2, 3).
  const double r = spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4});
  CHECK(r == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  CHECK(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
}
