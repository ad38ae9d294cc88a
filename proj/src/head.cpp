#include "dtrack/head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "dtrack/errors.hpp"
#include "dtrack/kernels.hpp"

namespace dtrack::head {

// ---------------------------------------------------------------------------
// Pooling

namespace {

struct Interp {
  std::size_t i0, i1;
  double t;
  double slope;  // d(coordinate weight)/d(cell coordinate): 1 inside, 0 when clamped
};

// Linear interpolation weights at continuous cell coordinate u on [0, n-1],
// clamped outside. At integer u the right-hand neighbor is used, so the
// derivative is the one for a positive perturbation.
Interp interp(double u, std::size_t n) {
  const double hi = static_cast<double>(n - 1);
  if (n == 1 || u < 0.0) return {0, 0, 0.0, 0.0};
  if (u >= hi) return {n - 1, n - 1, 0.0, 0.0};
  const auto i0 = static_cast<std::size_t>(std::floor(u));
  return {i0, i0 + 1, u - static_cast<double>(i0), 1.0};
}

template <bool WithJacobian>
void pool_impl(const FeatureMap& fm, const Box2D& box, PooledRegion& out) {
  const double extent = fm.extent();
  if (!(box.cx() >= 0.0 && box.cx() <= extent && box.cy() >= 0.0 &&
        box.cy() <= static_cast<double>(fm.height * fm.stride))) {
    throw OutOfSupport("pool_region: box center outside the feature map");
  }
  const std::size_t C = fm.channels;
  const std::size_t n = kPoolGrid * kPoolGrid;
  out.descriptor.values.assign(C * n, 0.0);
  if constexpr (WithJacobian) {
    for (auto& j : out.jacobian) j.assign(C * n, 0.0);
  }
  const double inv_stride = 1.0 / static_cast<double>(fm.stride);
  for (std::size_t gy = 0; gy < kPoolGrid; ++gy) {
    // Relative position of the sample inside the box, in (-0.5, 0.5).
    const double ry = (static_cast<double>(gy) + 0.5) / kPoolGrid - 0.5;
    const double py = box.cy() + ry * box.h();
    const Interp iy = interp(fm.pixel_to_cell(py), fm.height);
    for (std::size_t gx = 0; gx < kPoolGrid; ++gx) {
      const double rx = (static_cast<double>(gx) + 0.5) / kPoolGrid - 0.5;
      const double px = box.cx() + rx * box.w();
      const Interp ix = interp(fm.pixel_to_cell(px), fm.width);
      const std::size_t k = gy * kPoolGrid + gx;
      for (std::size_t c = 0; c < C; ++c) {
        const double f00 = fm.at(c, iy.i0, ix.i0);
        const double f01 = fm.at(c, iy.i0, ix.i1);
        const double f10 = fm.at(c, iy.i1, ix.i0);
        const double f11 = fm.at(c, iy.i1, ix.i1);
        const double top = (1.0 - ix.t) * f00 + ix.t * f01;
        const double bottom = (1.0 - ix.t) * f10 + ix.t * f11;
        out.descriptor.values[c * n + k] = (1.0 - iy.t) * top + iy.t * bottom;
        if constexpr (WithJacobian) {
          // d value / d pixel x and y at the sample point.
          const double dvx = ix.slope * inv_stride *
                             ((1.0 - iy.t) * (f01 - f00) + iy.t * (f11 - f10));
          const double dvy = iy.slope * inv_stride * (bottom - top);
          out.jacobian[0][c * n + k] = dvx;
          out.jacobian[1][c * n + k] = dvy;
          out.jacobian[2][c * n + k] = dvx * rx;
          out.jacobian[3][c * n + k] = dvy * ry;
        }
      }
    }
  }
}

}  // namespace

RegionDescriptor pool_region(const FeatureMap& features, const Box2D& box) {
  PooledRegion out;
  pool_impl<false>(features, box, out);
  return std::move(out.descriptor);
}

PooledRegion pool_region_with_jacobian(const FeatureMap& features, const Box2D& box) {
  PooledRegion out;
  pool_impl<true>(features, box, out);
  return out;
}

// ---------------------------------------------------------------------------
// Network

double target_lambda(TargetKind kind) noexcept { return kind == TargetKind::Diou ? 1.0 : 0.0; }

HeadParams HeadParams::zeros(std::size_t descriptor_dim, std::size_t h1, std::size_t h2) {
  HeadParams p;
  p.input_dim = descriptor_dim + 4;
  p.hidden1 = h1;
  p.hidden2 = h2;
  p.input_shift.assign(p.input_dim, 0.0);
  p.input_scale.assign(p.input_dim, 1.0);
  p.W1.assign(h1 * p.input_dim, 0.0);
  p.b1.assign(h1, 0.0);
  p.W2.assign(h2 * h1, 0.0);
  p.b2.assign(h2, 0.0);
  p.W3.assign(h2, 0.0);
  return p;
}

std::size_t HeadParams::parameter_count() const noexcept {
  return W1.size() + b1.size() + W2.size() + b2.size() + W3.size() + 1;
}

std::array<double, 4> box_offset(const Box2D& box, double extent, double size_factor) {
  const double ref = extent / size_factor;
  return {(box.cx() - 0.5 * extent) / ref, (box.cy() - 0.5 * extent) / ref,
          std::log(box.w() / ref), std::log(box.h() / ref)};
}

std::vector<double> channel_normalized(std::span<const double> values,
                                       std::vector<double>* norms) {
  const std::size_t n = kPoolGrid * kPoolGrid;
  if (values.size() % n != 0) {
    throw ContractViolation("channel_normalized: size is not a multiple of the pooling grid");
  }
  const std::size_t C = values.size() / n;
  std::vector<double> out(values.size());
  if (norms != nullptr) norms->assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double sq = kChannelNormEpsilon;
    for (std::size_t k = 0; k < n; ++k) sq += values[c * n + k] * values[c * n + k];
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < n; ++k) out[c * n + k] = values[c * n + k] / norm;
    if (norms != nullptr) (*norms)[c] = norm;
  }
  return out;
}

std::vector<double> head_input(const RegionDescriptor& tmpl, const RegionDescriptor& cand,
                               const Box2D& box, double extent, double size_factor) {
  if (tmpl.values.size() != cand.values.size()) {
    throw ContractViolation("head_input: template and candidate descriptor sizes differ");
  }
  const std::vector<double> t = channel_normalized(tmpl.values, nullptr);
  const std::vector<double> c = channel_normalized(cand.values, nullptr);
  std::vector<double> x(t.size() + 4);
  for (std::size_t k = 0; k < t.size(); ++k) x[k] = t[k] * c[k];
  const auto off = box_offset(box, extent, size_factor);
  std::copy(off.begin(), off.end(), x.end() - 4);
  return x;
}

namespace {

double elu(double z) noexcept { return z > 0.0 ? z : std::expm1(z); }
double elu_slope(double z) noexcept { return z > 0.0 ? 1.0 : std::exp(z); }

struct Activations {
  std::vector<double> x, z1, a1, z2, a2;
  double out = 0.0;
};

void standardize(const HeadParams& p, std::span<const double> raw, std::vector<double>& x) {
  if (raw.size() != p.input_dim) {
    throw ContractViolation("head: input has " + std::to_string(raw.size()) +
                            " values, network expects " + std::to_string(p.input_dim));
  }
  x.resize(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    x[k] = (raw[k] - p.input_shift[k]) * p.input_scale[k];
  }
}

void run_forward(const HeadParams& p, Activations& a) {
  const auto& k = kernels::active();
  a.z1.resize(p.hidden1);
  a.a1.resize(p.hidden1);
  a.z2.resize(p.hidden2);
  a.a2.resize(p.hidden2);
  k.gemv(p.W1.data(), p.hidden1, p.input_dim, a.x.data(), a.z1.data());
  for (std::size_t i = 0; i < p.hidden1; ++i) {
    a.z1[i] += p.b1[i];
    a.a1[i] = elu(a.z1[i]);
  }
  k.gemv(p.W2.data(), p.hidden2, p.hidden1, a.a1.data(), a.z2.data());
  for (std::size_t i = 0; i < p.hidden2; ++i) {
    a.z2[i] += p.b2[i];
    a.a2[i] = elu(a.z2[i]);
  }
  a.out = k.dot(p.W3.data(), a.a2.data(), p.hidden2) + p.b3;
}

struct Gradients {
  std::vector<double> W1, b1, W2, b2, W3;
  double b3 = 0.0;

  explicit Gradients(const HeadParams& p)
      : W1(p.W1.size(), 0.0), b1(p.b1.size(), 0.0), W2(p.W2.size(), 0.0),
        b2(p.b2.size(), 0.0), W3(p.W3.size(), 0.0) {}

  void clear() {
    for (auto* v : {&W1, &b1, &W2, &b2, &W3}) std::fill(v->begin(), v->end(), 0.0);
    b3 = 0.0;
  }
};

// Back-propagates d(out) = g. Accumulates parameter gradients when `grads` is
// given and returns d(out)/d(x) in `gx` when it is given.
void run_backward(const HeadParams& p, const Activations& a, double g, Gradients* grads,
                  std::vector<double>* gx) {
  const auto& k = kernels::active();
  std::vector<double> gz2(p.hidden2), gz1(p.hidden1, 0.0);
  for (std::size_t i = 0; i < p.hidden2; ++i) gz2[i] = g * p.W3[i] * elu_slope(a.z2[i]);
  k.gemv_t_acc(p.W2.data(), p.hidden2, p.hidden1, gz2.data(), gz1.data());
  for (std::size_t i = 0; i < p.hidden1; ++i) gz1[i] *= elu_slope(a.z1[i]);
  if (grads != nullptr) {
    k.axpy(g, a.a2.data(), grads->W3.data(), p.hidden2);
    grads->b3 += g;
    k.ger(1.0, gz2.data(), p.hidden2, a.a1.data(), p.hidden1, grads->W2.data());
    k.axpy(1.0, gz2.data(), grads->b2.data(), p.hidden2);
    k.ger(1.0, gz1.data(), p.hidden1, a.x.data(), p.input_dim, grads->W1.data());
    k.axpy(1.0, gz1.data(), grads->b1.data(), p.hidden1);
  }
  if (gx != nullptr) {
    gx->assign(p.input_dim, 0.0);
    k.gemv_t_acc(p.W1.data(), p.hidden1, p.input_dim, gz1.data(), gx->data());
  }
}

}  // namespace

double predict(const HeadParams& params, std::span<const double> raw_input) {
  Activations a;
  standardize(params, raw_input, a.x);
  run_forward(params, a);
  return a.out;
}

ScoreAndGrad predict_with_grad(const HeadParams& params, const RegionDescriptor& tmpl,
                               const FeatureMap& features, const Box2D& box) {
  const PooledRegion pooled = pool_region_with_jacobian(features, box);
  const double extent = features.extent();
  const std::vector<double> raw =
      head_input(tmpl, pooled.descriptor, box, extent, params.size_factor);
  Activations a;
  standardize(params, raw, a.x);
  run_forward(params, a);
  std::vector<double> gx;
  run_backward(params, a, 1.0, nullptr, &gx);

  // Back through the candidate's per-channel normalization c_hat = c / |c|:
  // d c_hat = (I - c_hat c_hat^T) d c / |c|.
  const std::size_t nd = tmpl.values.size();
  const std::size_t n = kPoolGrid * kPoolGrid;
  const std::vector<double> t_hat = channel_normalized(tmpl.values, nullptr);
  std::vector<double> norms;
  const std::vector<double> c_hat = channel_normalized(pooled.descriptor.values, &norms);
  std::array<double, 4> g{};
  std::vector<double> d_hat(n);
  for (std::size_t c = 0; c < norms.size(); ++c) {
    double proj = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = c * n + k;
      d_hat[k] = gx[i] * params.input_scale[i] * t_hat[i];
      proj += d_hat[k] * c_hat[i];
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = c * n + k;
      const double d_raw = (d_hat[k] - c_hat[i] * proj) / norms[c];
      if (d_raw == 0.0) continue;
      for (std::size_t j = 0; j < 4; ++j) g[j] += d_raw * pooled.jacobian[j][i];
    }
  }
  const double ref = extent / params.size_factor;
  g[0] += gx[nd + 0] * params.input_scale[nd + 0] / ref;
  g[1] += gx[nd + 1] * params.input_scale[nd + 1] / ref;
  g[2] += gx[nd + 2] * params.input_scale[nd + 2] / box.w();
  g[3] += gx[nd + 3] * params.input_scale[nd + 3] / box.h();
  return {a.out, {g[0], g[1], g[2], g[3]}};
}

ScoreHead ScoreHead::learned(std::shared_ptr<const HeadParams> params) {
  if (params == nullptr) throw ContractViolation("ScoreHead::learned: null parameters");
  ScoreHead h;
  h.params_ = std::move(params);
  return h;
}

ScoreHead ScoreHead::oracle(TargetKind kind) {
  ScoreHead h;
  h.oracle_kind_ = kind;
  return h;
}

TargetKind ScoreHead::target() const noexcept {
  return params_ ? params_->target : oracle_kind_;
}

ScoreAndGrad ScoreHead::predict_with_grad(const RegionDescriptor& tmpl,
                                          const FeatureMap& features, const Box2D& box,
                                          const std::optional<Box2D>& reference) const {
  if (params_) return head::predict_with_grad(*params_, tmpl, features, box);
  if (!reference) throw ContractViolation("ScoreHead: oracle mode needs a reference box");
  return diou_score_grad(box, *reference, target_lambda(oracle_kind_));
}

// ---------------------------------------------------------------------------
// Training data

std::vector<double> HeadDataset::input(std::size_t example) const {
  const HeadExample& e = examples.at(example);
  const HeadPair& p = pairs.at(e.pair);
  return head_input(p.template_descriptor, pool_region(p.features, e.candidate), e.candidate,
                    p.features.extent(), size_factor);
}

HeadDataset sample_training_pairs(std::span<const Sequence> sequences,
                                  const PairSamplingConfig& cfg, std::uint64_t seed) {
  std::vector<std::size_t> usable;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (sequences[s].size() >= 2 && sequences[s].ground_truth.size() == sequences[s].size()) {
      usable.push_back(s);
    }
  }
  if (usable.empty()) {
    throw ContractViolation("sample_training_pairs: need a sequence with at least 2 frames");
  }

  HeadDataset ds;
  ds.target = cfg.target;
  ds.size_factor = cfg.size_factor;
  const double lambda = target_lambda(cfg.target);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto degenerate = [](const Box2D& b, const GrayImage& frame) {
    return b.w() < 2.0 || b.h() < 2.0 || b.cx() < 0.0 || b.cy() < 0.0 ||
           b.cx() > static_cast<double>(frame.width()) ||
           b.cy() > static_cast<double>(frame.height());
  };

  for (std::size_t p = 0; p < cfg.pairs; ++p) {
    const Sequence& seq =
        sequences[usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)]];
    const std::size_t n = seq.size();
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const std::size_t lo = t >= cfg.max_frame_gap ? t - cfg.max_frame_gap : 0;
    const std::size_t hi = std::min(n - 1, t + cfg.max_frame_gap);
    std::size_t u = std::uniform_int_distribution<std::size_t>(lo, hi - 1)(rng);
    if (u >= t) ++u;  // skip the template frame itself

    const Box2D& gt_t = seq.ground_truth[t];
    const Box2D& gt_u = seq.ground_truth[u];
    const double crop_dx = normal(rng), crop_dy = normal(rng), crop_ds = normal(rng);
    if (degenerate(gt_t, seq.frames[t]) || degenerate(gt_u, seq.frames[u])) {
      ++ds.skipped_pairs;
      continue;
    }

    const Crop tcrop = crop_resize(seq.frames[t], gt_t.cx(), gt_t.cy(), gt_t.w(), gt_t.h(),
                                   cfg.size_factor, cfg.out_size);
    const FeatureMap tfm = featurize(tcrop.patch, cfg.features);
    RegionDescriptor tmpl = pool_region(tfm, tcrop.mapping.box_to_patch(gt_t));

    const double su = std::sqrt(gt_u.w() * gt_u.h());
    const double scale = std::exp(cfg.crop_log_scale_sigma * crop_ds);
    const Crop ucrop = crop_resize(
        seq.frames[u], gt_u.cx() + cfg.crop_center_sigma * su * crop_dx,
        gt_u.cy() + cfg.crop_center_sigma * su * crop_dy, gt_u.w() * scale, gt_u.h() * scale,
        cfg.size_factor, cfg.out_size);
    HeadPair pair{std::move(tmpl), featurize(ucrop.patch, cfg.features),
                  ucrop.mapping.box_to_patch(gt_u)};
    const Box2D gt = pair.ground_truth;
    const double extent = pair.features.extent();
    const double sg = std::sqrt(gt.w() * gt.h());

    std::vector<HeadExample> items;
    for (std::size_t j = 0; j < cfg.jitters_per_pair; ++j) {
      std::optional<Box2D> cand;
      if (cfg.zero_jitter) {
        cand = gt;
      } else {
        for (int attempt = 0; attempt < 1000 && !cand; ++attempt) {
          const double dx = normal(rng), dy = normal(rng), dw = normal(rng), dh = normal(rng);
          const Box2D b(gt.cx() + cfg.center_sigma * sg * dx, gt.cy() + cfg.center_sigma * sg * dy,
                        gt.w() * std::exp(cfg.log_size_sigma * dw),
                        gt.h() * std::exp(cfg.log_size_sigma * dh));
          const bool inside = b.cx() >= 0.0 && b.cx() <= extent && b.cy() >= 0.0 &&
                              b.cy() <= extent;
          if (inside && iou(b, gt) >= cfg.min_iou) cand = b;
        }
      }
      if (!cand) continue;
      items.push_back({ds.pairs.size(), *cand, diou_score(*cand, gt, lambda)});
    }
    ds.pairs.push_back(std::move(pair));
    ds.examples.insert(ds.examples.end(), items.begin(), items.end());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Offline training

double HeadTrainConfig::learning_rate_at(std::size_t epoch) const noexcept {
  const std::size_t drops = decay_every == 0 ? 0 : epoch / decay_every;
  return learning_rate * std::pow(decay_factor, static_cast<double>(drops));
}

void HeadTrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("head training: epochs and batch size must be >= 1");
  if (!(learning_rate > 0.0) || !(decay_factor > 0.0)) {
    throw ConfigError("head training: learning rate and decay factor must be > 0");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("head training: holdout_fraction must be in [0, 1)");
  }
  if (hidden1 == 0 || hidden2 == 0) throw ConfigError("head training: hidden sizes must be >= 1");
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& w, const std::vector<double>& g, double scale, double lr,
            const HeadTrainConfig& cfg, double bc1, double bc2) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
    }
  }
};

// Uniform in +-1/sqrt(fan_in). Small first-layer weights keep the wide
// descriptor input from dominating early training, which generalizes better
// across sequences than variance-preserving initializations.
void fan_in_uniform(std::vector<double>& w, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& x : w) x = u(rng);
}

}  // namespace

HeadTrainResult train_offline(const HeadDataset& dataset, const HeadTrainConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  if (dataset.examples.empty()) throw ContractViolation("train_offline: empty dataset");
  std::mt19937_64 rng(seed);

  // Held-out split by pair so no search patch is shared across the split.
  std::vector<std::size_t> order(dataset.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_hold = static_cast<std::size_t>(cfg.holdout_fraction *
                                         static_cast<double>(dataset.pairs.size()));
  if (n_hold >= dataset.pairs.size()) n_hold = dataset.pairs.size() - 1;
  std::vector<char> held(dataset.pairs.size(), 0);
  for (std::size_t i = 0; i < n_hold; ++i) held[order[i]] = 1;

  std::vector<std::vector<double>> train_x, hold_x;
  std::vector<double> train_y, hold_y;
  for (std::size_t e = 0; e < dataset.examples.size(); ++e) {
    auto& xs = held[dataset.examples[e].pair] ? hold_x : train_x;
    auto& ys = held[dataset.examples[e].pair] ? hold_y : train_y;
    xs.push_back(dataset.input(e));
    ys.push_back(dataset.examples[e].target);
  }
  if (train_x.empty()) throw ContractViolation("train_offline: no training examples after split");

  const std::size_t in_dim = train_x.front().size();
  HeadParams p = HeadParams::zeros(in_dim - 4, cfg.hidden1, cfg.hidden2);
  p.target = dataset.target;
  p.size_factor = dataset.size_factor;

  // Input standardization from training statistics.
  for (std::size_t k = 0; k < in_dim; ++k) {
    double mean = 0.0;
    for (const auto& x : train_x) mean += x[k];
    mean /= static_cast<double>(train_x.size());
    double var = 0.0;
    for (const auto& x : train_x) var += (x[k] - mean) * (x[k] - mean);
    var /= static_cast<double>(train_x.size());
    p.input_shift[k] = mean;
    p.input_scale[k] = var > 1e-18 ? 1.0 / std::sqrt(var) : 1.0;
  }

  fan_in_uniform(p.W1, in_dim, rng);
  fan_in_uniform(p.W2, p.hidden1, rng);
  fan_in_uniform(p.W3, p.hidden2, rng);

  std::vector<std::vector<double>> std_x(train_x.size());
  for (std::size_t i = 0; i < train_x.size(); ++i) standardize(p, train_x[i], std_x[i]);

  Gradients g(p);
  AdamState sW1(p.W1.size()), sb1(p.b1.size()), sW2(p.W2.size()), sb2(p.b2.size()),
      sW3(p.W3.size()), sb3(1);
  std::vector<double> b3v(1), gb3(1);

  HeadTrainResult result;
  std::vector<std::size_t> idx(train_x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t step = 0;
  Activations a;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const double lr = cfg.learning_rate_at(epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(idx.size(), start + cfg.batch_size);
      g.clear();
      for (std::size_t b = start; b < stop; ++b) {
        a.x = std_x[idx[b]];
        run_forward(p, a);
        const double err = a.out - train_y[idx[b]];
        epoch_loss += err * err;
        run_backward(p, a, 2.0 * err, &g, nullptr);
      }
      if (!std::isfinite(epoch_loss)) {
        throw SolverDivergence("train_offline: non-finite loss", epoch);
      }
      ++step;
      const double scale = 1.0 / static_cast<double>(stop - start);
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      sW1.step(p.W1, g.W1, scale, lr, cfg, bc1, bc2);
      sb1.step(p.b1, g.b1, scale, lr, cfg, bc1, bc2);
      sW2.step(p.W2, g.W2, scale, lr, cfg, bc1, bc2);
      sb2.step(p.b2, g.b2, scale, lr, cfg, bc1, bc2);
      sW3.step(p.W3, g.W3, scale, lr, cfg, bc1, bc2);
      b3v[0] = p.b3;
      gb3[0] = g.b3;
      sb3.step(b3v, gb3, scale, lr, cfg, bc1, bc2);
      p.b3 = b3v[0];
    }
    result.report.epoch_losses.push_back(epoch_loss / static_cast<double>(idx.size()));
  }

  double mae = 0.0;
  for (std::size_t i = 0; i < hold_x.size(); ++i) mae += std::abs(predict(p, hold_x[i]) - hold_y[i]);
  result.report.heldout_count = hold_x.size();
  result.report.heldout_mae = hold_x.empty() ? 0.0 : mae / static_cast<double>(hold_x.size());
  result.params = std::move(p);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kMagic = "dtrack-head";
constexpr int kVersion = 2;

void write_vec(std::ostream& os, const char* key, const std::vector<double>& v) {
  os << key << ' ' << v.size();
  for (double x : v) os << ' ' << x;
  os << '\n';
}

std::vector<double> read_vec(std::istream& is, const char* key, std::size_t expected,
                             const std::string& path) {
  std::string k;
  std::size_t n = 0;
  if (!(is >> k >> n) || k != key) {
    throw FormatError(path + ": expected section '" + key + "'");
  }
  if (n != expected) {
    throw FormatError(path + ": section '" + std::string(key) + "' has " + std::to_string(n) +
                      " values, expected " + std::to_string(expected));
  }
  std::vector<double> v(n);
  for (double& x : v) {
    if (!(is >> x)) throw FormatError(path + ": bad number in section '" + key + "'");
  }
  return v;
}

}  // namespace

void save_head(const HeadParams& p, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << std::setprecision(17);
  os << kMagic << ' ' << kVersion << '\n';
  os << "target " << (p.target == TargetKind::Diou ? "diou" : "iou") << '\n';
  os << "size_factor " << p.size_factor << '\n';
  os << "dims " << p.input_dim << ' ' << p.hidden1 << ' ' << p.hidden2 << '\n';
  write_vec(os, "input_shift", p.input_shift);
  write_vec(os, "input_scale", p.input_scale);
  write_vec(os, "W1", p.W1);
  write_vec(os, "b1", p.b1);
  write_vec(os, "W2", p.W2);
  write_vec(os, "b2", p.b2);
  write_vec(os, "W3", p.W3);
  os << "b3 " << p.b3 << '\n';
  if (!os) throw FormatError("write failed: " + path.string());
}

HeadParams load_head(const std::filesystem::path& path) {
  std::ifstream is(path);
  const std::string ps = path.string();
  if (!is) throw FormatError("cannot open " + ps);
  std::string magic, key, target;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw FormatError(ps + ": not a head file");
  if (version != kVersion) throw FormatError(ps + ": unsupported version " + std::to_string(version));
  HeadParams p;
  if (!(is >> key >> target) || key != "target" || (target != "diou" && target != "iou")) {
    throw FormatError(ps + ": bad target line");
  }
  p.target = target == "diou" ? TargetKind::Diou : TargetKind::Iou;
  if (!(is >> key >> p.size_factor) || key != "size_factor" || !(p.size_factor > 1.0)) {
    throw FormatError(ps + ": bad size_factor line");
  }
  if (!(is >> key >> p.input_dim >> p.hidden1 >> p.hidden2) || key != "dims" ||
      p.input_dim <= 4 || p.hidden1 == 0 || p.hidden2 == 0) {
    throw FormatError(ps + ": bad dims line");
  }
  p.input_shift = read_vec(is, "input_shift", p.input_dim, ps);
  p.input_scale = read_vec(is, "input_scale", p.input_dim, ps);
  p.W1 = read_vec(is, "W1", p.hidden1 * p.input_dim, ps);
  p.b1 = read_vec(is, "b1", p.hidden1, ps);
  p.W2 = read_vec(is, "W2", p.hidden2 * p.hidden1, ps);
  p.b2 = read_vec(is, "b2", p.hidden2, ps);
  p.W3 = read_vec(is, "W3", p.hidden2, ps);
  if (!(is >> key >> p.b3) || key != "b3") throw FormatError(ps + ": bad b3 line");
  return p;
}

}  // namespace dtrack::head
