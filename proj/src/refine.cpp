#include "dtrack/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtrack/errors.hpp"

namespace dtrack::refine {

void RefineConfig::validate() const {
  if (n_candidates == 0) throw ConfigError("refine: n_candidates must be >= 1");
  if (top_k == 0 || top_k > n_candidates) throw ConfigError("refine: need 1 <= top_k <= n_candidates");
  if (!(step_scale > 0.0)) throw ConfigError("refine: step_scale must be > 0");
  if (!(center_sigma >= 0.0) || !(log_size_sigma >= 0.0)) {
    throw ConfigError("refine: jitter sigmas must be >= 0");
  }
  if (!(min_side > 0.0)) throw ConfigError("refine: min_side must be > 0");
}

std::vector<Box2D> sample_candidates(double peak_x, double peak_y, const Box2D& prev,
                                     const RefineConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const Box2D base(peak_x, peak_y, std::max(prev.w(), cfg.min_side),
                   std::max(prev.h(), cfg.min_side));
  std::vector<Box2D> out;
  out.reserve(cfg.n_candidates);
  out.push_back(base);
  const double s = std::sqrt(base.w() * base.h());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 1; i < cfg.n_candidates; ++i) {
    const double dx = normal(rng), dy = normal(rng), dw = normal(rng), dh = normal(rng);
    out.emplace_back(base.cx() + cfg.center_sigma * s * dx, base.cy() + cfg.center_sigma * s * dy,
                     std::max(cfg.min_side, base.w() * std::exp(cfg.log_size_sigma * dw)),
                     std::max(cfg.min_side, base.h() * std::exp(cfg.log_size_sigma * dh)));
  }
  return out;
}

std::vector<Refined> refine_boxes(std::span<const Box2D> candidates, const ScoreFn& score_fn,
                                  const RefineConfig& cfg) {
  cfg.validate();
  std::vector<Refined> out;
  out.reserve(candidates.size());
  for (const Box2D& start : candidates) {
    Refined r{start, -std::numeric_limits<double>::infinity(), {}};
    try {
      Box2D box = start;
      ScoreAndGrad sg = score_fn(box);
      r.trace.push_back(sg.score);
      double eta = cfg.step_scale;
      for (std::size_t step = 0; step < cfg.ascent_steps; ++step) {
        const double w = box.w(), h = box.h();
        const Box2D trial(box.cx() + eta * w * sg.grad.d_cx, box.cy() + eta * h * sg.grad.d_cy,
                          std::max(cfg.min_side, w + eta * w * sg.grad.d_w),
                          std::max(cfg.min_side, h + eta * h * sg.grad.d_h));
        const ScoreAndGrad next = score_fn(trial);
        if (cfg.always_accept || next.score >= sg.score) {
          box = trial;
          sg = next;
        } else {
          eta *= 0.5;
        }
        r.trace.push_back(sg.score);
      }
      if (std::isfinite(sg.score)) {
        r.box = box;
        r.score = sg.score;
      }
    } catch (const std::exception&) {
      // Excluded from fusion through its -inf score.
      r.box = start;
      r.score = -std::numeric_limits<double>::infinity();
    }
    out.push_back(std::move(r));
  }
  return out;
}

Box2D fuse_topk(std::span<const Refined> refined, std::size_t k) {
  if (k == 0) throw ContractViolation("fuse_topk: k must be >= 1");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < refined.size(); ++i) {
    if (std::isfinite(refined[i].score)) idx.push_back(i);
  }
  if (idx.empty()) throw EstimationFailure("fuse_topk: no candidate with a finite score");
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return refined[a].score > refined[b].score;
  });
  const std::size_t n = std::min(k, idx.size());
  // Mean written as an offset from the best box, so equal boxes fuse exactly.
  const Box2D& ref = refined[idx[0]].box;
  const double inv = 1.0 / static_cast<double>(n);
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Box2D& b = refined[idx[i]].box;
    cx += b.cx() - ref.cx();
    cy += b.cy() - ref.cy();
    w += b.w() - ref.w();
    h += b.h() - ref.h();
  }
  return {ref.cx() + cx * inv, ref.cy() + cy * inv, ref.w() + w * inv, ref.h() + h * inv};
}

}  // namespace dtrack::refine
