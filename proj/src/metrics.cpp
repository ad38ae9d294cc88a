#include "dtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dtrack/errors.hpp"

namespace dtrack::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw ContractViolation(std::string(op) + ": length mismatch");
  if (a == 0) throw ContractViolation(std::string(op) + ": empty input");
}

}  // namespace

std::vector<double> center_errors(std::span<const Box2D> predicted, std::span<const Box2D> gt) {
  check_lengths(predicted.size(), gt.size(), "center_errors");
  std::vector<double> out(predicted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(center_dist_sq(predicted[i], gt[i]));
  }
  return out;
}

std::vector<double> overlaps(std::span<const Box2D> predicted, std::span<const Box2D> gt) {
  check_lengths(predicted.size(), gt.size(), "overlaps");
  std::vector<double> out(predicted.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = iou(predicted[i], gt[i]);
  return out;
}

PrecisionCurve precision_from_errors(std::span<const double> errors) {
  if (errors.empty()) throw ContractViolation("precision: empty input");
  PrecisionCurve pc;
  pc.curve.resize(kPrecisionMaxPx + 1);
  const double n = static_cast<double>(errors.size());
  for (std::size_t t = 0; t <= kPrecisionMaxPx; ++t) {
    const auto hits = std::count_if(errors.begin(), errors.end(),
                                    [t](double e) { return e <= static_cast<double>(t); });
    pc.curve[t] = static_cast<double>(hits) / n;
  }
  pc.at20 = pc.curve[20];
  return pc;
}

SuccessCurve success_from_ious(std::span<const double> ious) {
  if (ious.empty()) throw ContractViolation("success: empty input");
  SuccessCurve sc;
  const double n = static_cast<double>(ious.size());
  for (std::size_t k = 0; k < kSuccessThresholds; ++k) {
    // k / 20 exactly, so 0.5 is the exact double 0.5.
    const double tau = static_cast<double>(k) / static_cast<double>(kSuccessThresholds - 1);
    const auto hits = std::count_if(ious.begin(), ious.end(), [tau](double v) { return v >= tau; });
    sc.thresholds.push_back(tau);
    sc.curve.push_back(static_cast<double>(hits) / n);
  }
  sc.auc = std::accumulate(sc.curve.begin(), sc.curve.end(), 0.0) /
           static_cast<double>(kSuccessThresholds);
  return sc;
}

PrecisionCurve precision_curve(std::span<const Box2D> predicted, std::span<const Box2D> gt) {
  return precision_from_errors(center_errors(predicted, gt));
}

SuccessCurve success_auc(std::span<const Box2D> predicted, std::span<const Box2D> gt) {
  return success_from_ious(overlaps(predicted, gt));
}

EvalReport evaluate(std::span<const Box2D> predicted, std::span<const Box2D> gt) {
  EvalReport r;
  r.center_errors = center_errors(predicted, gt);
  r.ious = overlaps(predicted, gt);
  r.precision = precision_from_errors(r.center_errors);
  r.success = success_from_ious(r.ious);
  r.mean_iou = std::accumulate(r.ious.begin(), r.ious.end(), 0.0) /
               static_cast<double>(r.ious.size());
  return r;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size(), "spearman");
  if (a.size() < 2) throw ContractViolation("spearman: need at least 2 points");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractViolation("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace dtrack::metrics
