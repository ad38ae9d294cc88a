#include "dtrack/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dtrack/errors.hpp"
#include "dtrack/kernels.hpp"

namespace dtrack::classifier {

ClassifierWeights::ClassifierWeights(std::size_t c, std::size_t d, double a)
    : in_channels(c), hidden(d), alpha(a), w1(d * c, 0.0), w2(kKernelTaps * d, 0.0) {}

void ClassifierConfig::validate() const {
  if (hidden_channels == 0) throw ConfigError("classifier: hidden_channels must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("classifier: alpha must be > 0");
  if (!(zeta >= 0.0)) throw ConfigError("classifier: zeta must be >= 0");
  if (!(label_sigma > 0.0)) throw ConfigError("classifier: label_sigma must be > 0");
  if (update_period == 0) throw ConfigError("classifier: update_period must be >= 1");
  if (init_samples == 0) throw ConfigError("classifier: init_samples must be >= 1");
  if (!(gd_learning_rate > 0.0)) throw ConfigError("classifier: gd_learning_rate must be > 0");
}

double phi2(double t, double alpha) noexcept {
  return t > 0.0 ? t : alpha * std::expm1(t / alpha);
}

double phi2_derivative(double t, double alpha) noexcept {
  return t > 0.0 ? 1.0 : std::exp(t / alpha);
}

std::vector<double> gaussian_label(double peak_row, double peak_col, std::size_t H,
                                   std::size_t W, double sigma) {
  if (!(sigma > 0.0)) throw ContractViolation("gaussian_label: sigma must be > 0");
  std::vector<double> y(H * W);
  const double k = -0.5 / (sigma * sigma);
  for (std::size_t i = 0; i < H; ++i) {
    const double di = static_cast<double>(i) - peak_row;
    for (std::size_t j = 0; j < W; ++j) {
      const double dj = static_cast<double>(j) - peak_col;
      y[i * W + j] = std::exp(k * (di * di + dj * dj));
    }
  }
  return y;
}

ClassifierWeights initial_weights(std::size_t in_channels, const ClassifierConfig& cfg,
                                  std::uint64_t seed) {
  ClassifierWeights w(in_channels, cfg.hidden_channels, cfg.alpha);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(in_channels)));
  for (double& x : w.w1) x = n1(rng);
  std::normal_distribution<double> n2(0.0, cfg.w2_init_std);
  for (double& x : w.w2) x = n2(rng);
  return w;
}

namespace {

void check_features(const ClassifierWeights& w, const FeatureMap& z) {
  if (z.channels != w.in_channels) {
    throw ContractViolation("classifier: feature channels (" + std::to_string(z.channels) +
                            ") do not match w1 input channels (" +
                            std::to_string(w.in_channels) + ")");
  }
}

// a = W1 z per pixel; h = max(a, 0).
void first_layer(const std::vector<double>& z_pm, std::size_t P, std::size_t C,
                 std::size_t D, const double* w1, double* pre, double* hidden) {
  kernels::active().project(z_pm.data(), P, C, w1, D, pre);
  for (std::size_t e = 0; e < P * D; ++e) hidden[e] = std::max(pre[e], 0.0);
}

}  // namespace

void fit_input_normalization(ClassifierWeights& w, std::span<const TrainSample> samples) {
  if (samples.empty()) throw ContractViolation("fit_input_normalization: no samples");
  const std::size_t C = w.in_channels;
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  double count = 0.0;
  for (const TrainSample& s : samples) {
    check_features(w, s.features);
    const std::size_t n = s.features.cells();
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < n; ++k) {
        const double v = s.features.values[c * n + k];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += static_cast<double>(n);
  }
  w.input_mean.assign(C, 0.0);
  w.input_inv_std.assign(C, 1.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - mean * mean);
    w.input_mean[c] = mean;
    if (var > 1e-12) w.input_inv_std[c] = 1.0 / std::sqrt(var);
  }
}

std::vector<double> prepare_input(const ClassifierWeights& w, const FeatureMap& z) {
  check_features(w, z);
  std::vector<double> out = z.pixel_major();
  if (w.input_mean.empty()) return out;
  if (w.input_mean.size() != w.in_channels || w.input_inv_std.size() != w.in_channels) {
    throw ContractViolation("classifier: input normalization has wrong size");
  }
  const std::size_t C = w.in_channels;
  for (std::size_t p = 0; p < z.cells(); ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      double& v = out[p * C + c];
      v = (v - w.input_mean[c]) * w.input_inv_std[c];
    }
  }
  return out;
}

std::vector<double> forward(const ClassifierWeights& w, const FeatureMap& z) {
  const std::size_t P = z.cells();
  const std::size_t D = w.hidden;
  const std::vector<double> z_pm = prepare_input(w, z);
  std::vector<double> pre(P * D), hidden(P * D), out(P);
  first_layer(z_pm, P, w.in_channels, D, w.w1.data(), pre.data(), hidden.data());
  kernels::active().conv4_forward(hidden.data(), z.height, z.width, D, w.w2.data(),
                                  out.data());
  for (double& v : out) v = phi2(v, w.alpha);
  return out;
}

ClassifierProblem::ClassifierProblem(std::vector<const TrainSample*> samples, double zeta,
                                     Trainable which, const ClassifierWeights& base)
    : samples_(std::move(samples)), zeta_(zeta), which_(which), base_(base) {
  if (samples_.empty()) throw ContractViolation("ClassifierProblem: empty sample set");
  if (!(zeta >= 0.0)) throw ContractViolation("ClassifierProblem: zeta must be >= 0");
  const FeatureMap& f0 = samples_.front()->features;
  H_ = f0.height;
  W_ = f0.width;
  C_ = base.in_channels;
  D_ = base.hidden;
  cells_ = H_ * W_;
  inputs_.reserve(samples_.size());
  for (const TrainSample* s : samples_) {
    check_features(base_, s->features);
    if (s->features.height != H_ || s->features.width != W_ || s->label.size() != cells_) {
      throw ContractViolation("ClassifierProblem: inconsistent sample dimensions");
    }
    if (!(s->weight >= 0.0)) throw ContractViolation("ClassifierProblem: negative weight");
    inputs_.push_back(prepare_input(base_, s->features));
  }
  cache_.resize(samples_.size());
  if (!trains_w1()) {
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      compute_hidden(i, base_.w1.data(), cache_[i]);
    }
  }
}

std::size_t ClassifierProblem::parameter_dim() const {
  return (trains_w1() ? D_ * C_ : 0) + (trains_w2() ? kKernelTaps * D_ : 0);
}

std::size_t ClassifierProblem::residual_dim() const { return label_rows() + parameter_dim(); }

const double* ClassifierProblem::w1_of(std::span<const double> w) const noexcept {
  return trains_w1() ? w.data() : base_.w1.data();
}

const double* ClassifierProblem::w2_of(std::span<const double> w) const noexcept {
  if (!trains_w2()) return base_.w2.data();
  return trains_w1() ? w.data() + D_ * C_ : w.data();
}

std::vector<double> ClassifierProblem::pack(const ClassifierWeights& w) const {
  std::vector<double> out;
  if (trains_w1()) out.insert(out.end(), w.w1.begin(), w.w1.end());
  if (trains_w2()) out.insert(out.end(), w.w2.begin(), w.w2.end());
  return out;
}

ClassifierWeights ClassifierProblem::unpack(std::span<const double> params) const {
  if (params.size() != parameter_dim()) {
    throw ContractViolation("ClassifierProblem::unpack: wrong parameter count");
  }
  ClassifierWeights w = base_;
  auto it = params.begin();
  if (trains_w1()) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(w.w1.size()), w.w1.begin());
    it += static_cast<std::ptrdiff_t>(w.w1.size());
  }
  if (trains_w2()) std::copy(it, params.end(), w.w2.begin());
  return w;
}

void ClassifierProblem::compute_hidden(std::size_t i, const double* w1,
                                       SampleCache& c) const {
  c.pre.resize(cells_ * D_);
  c.hidden.resize(cells_ * D_);
  first_layer(inputs_[i], cells_, C_, D_, w1, c.pre.data(), c.hidden.data());
}

void ClassifierProblem::linearize(std::span<const double> w) const {
  if (w.size() != parameter_dim()) {
    throw ContractViolation("ClassifierProblem: parameter vector has wrong dimension");
  }
  if (has_lin_ && std::equal(w.begin(), w.end(), lin_point_.begin())) return;
  const double* w1 = w1_of(w);
  const double* w2 = w2_of(w);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    SampleCache& c = cache_[i];
    if (trains_w1()) compute_hidden(i, w1, c);
    c.out.resize(cells_);
    c.dphi.resize(cells_);
    k.conv4_forward(c.hidden.data(), H_, W_, D_, w2, c.out.data());
    for (std::size_t p = 0; p < cells_; ++p) {
      c.dphi[p] = phi2_derivative(c.out[p], base_.alpha);
      c.out[p] = phi2(c.out[p], base_.alpha);
    }
  }
  lin_point_.assign(w.begin(), w.end());
  has_lin_ = true;
}

void ClassifierProblem::residual(std::span<const double> w, std::span<double> r) const {
  if (r.size() != residual_dim()) throw ContractViolation("residual: wrong output size");
  linearize(w);
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const double sb = std::sqrt(samples_[i]->weight);
    const auto& y = samples_[i]->label;
    for (std::size_t p = 0; p < cells_; ++p) {
      r[i * cells_ + p] = sb * (cache_[i].out[p] - y[p]);
    }
  }
  const double sz = std::sqrt(zeta_);
  for (std::size_t j = 0; j < w.size(); ++j) r[label_rows() + j] = sz * w[j];
}

void ClassifierProblem::jvp(std::span<const double> w, std::span<const double> p,
                            std::span<double> out) const {
  if (p.size() != parameter_dim() || out.size() != residual_dim()) {
    throw ContractViolation("jvp: dimension mismatch");
  }
  linearize(w);
  const auto& k = kernels::active();
  const double* w2 = w2_of(w);
  const double* dw1 = p.data();
  const double* dw2 = trains_w1() ? p.data() + D_ * C_ : p.data();

  std::vector<double> dh(trains_w1() ? cells_ * D_ : 0);
  std::vector<double> tmp(cells_);
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const SampleCache& c = cache_[i];
    double* o = out.data() + i * cells_;
    if (trains_w2()) {
      k.conv4_forward(c.hidden.data(), H_, W_, D_, dw2, o);
    } else {
      std::fill(o, o + cells_, 0.0);
    }
    if (trains_w1()) {
      k.project(inputs_[i].data(), cells_, C_, dw1, D_, dh.data());
      for (std::size_t e = 0; e < cells_ * D_; ++e) {
        if (!(c.pre[e] > 0.0)) dh[e] = 0.0;
      }
      k.conv4_forward(dh.data(), H_, W_, D_, w2, tmp.data());
      for (std::size_t q = 0; q < cells_; ++q) o[q] += tmp[q];
    }
    const double sb = std::sqrt(samples_[i]->weight);
    for (std::size_t q = 0; q < cells_; ++q) o[q] *= sb * c.dphi[q];
  }
  const double sz = std::sqrt(zeta_);
  for (std::size_t j = 0; j < p.size(); ++j) out[label_rows() + j] = sz * p[j];
}

void ClassifierProblem::vjp(std::span<const double> w, std::span<const double> u,
                            std::span<double> out) const {
  if (u.size() != residual_dim() || out.size() != parameter_dim()) {
    throw ContractViolation("vjp: dimension mismatch");
  }
  linearize(w);
  const auto& k = kernels::active();
  const double* w2 = w2_of(w);
  std::fill(out.begin(), out.end(), 0.0);
  double* gw1 = out.data();
  double* gw2 = trains_w1() ? out.data() + D_ * C_ : out.data();

  std::vector<double> gs(cells_);
  std::vector<double> gh(trains_w1() ? cells_ * D_ : 0);
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const SampleCache& c = cache_[i];
    const double sb = std::sqrt(samples_[i]->weight);
    const double* ui = u.data() + i * cells_;
    for (std::size_t q = 0; q < cells_; ++q) gs[q] = sb * c.dphi[q] * ui[q];
    if (trains_w2()) k.conv4_backward_kernel(c.hidden.data(), H_, W_, D_, gs.data(), gw2);
    if (trains_w1()) {
      std::fill(gh.begin(), gh.end(), 0.0);
      k.conv4_backward_input(gs.data(), H_, W_, D_, w2, gh.data());
      for (std::size_t e = 0; e < cells_ * D_; ++e) {
        if (!(c.pre[e] > 0.0)) gh[e] = 0.0;
      }
      k.outer_acc(gh.data(), inputs_[i].data(), cells_, D_, C_, gw1);
    }
  }
  const double sz = std::sqrt(zeta_);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += sz * u[label_rows() + j];
}

namespace {

gn::SolveResult optimize(const ClassifierProblem& problem, const std::vector<double>& w0,
                         const Schedule& schedule, const ClassifierConfig& cfg) {
  if (cfg.optimizer == Optimizer::GaussNewtonCg) {
    gn::GnConfig gc;
    gc.outer_iterations = schedule.gn_rounds;
    gc.cg_iterations = schedule.cg_iterations;
    return gn::solve_nlls(problem, w0, gc);
  }
  // Equal budget: one descent step per CG iteration the other arm may spend.
  const double lr = cfg.gd_learning_rate / static_cast<double>(problem.label_rows());
  return gn::gradient_descent(problem, w0, schedule.gn_rounds * schedule.cg_iterations, lr);
}

}  // namespace

TrainResult train_initial(std::span<const TrainSample> samples, const ClassifierConfig& cfg,
                          const ClassifierWeights& start) {
  cfg.validate();
  if (samples.size() != cfg.init_samples) {
    throw ContractViolation("train_initial: expected " + std::to_string(cfg.init_samples) +
                            " samples, got " + std::to_string(samples.size()));
  }
  ClassifierWeights w0 = start;
  if (cfg.normalize_inputs) fit_input_normalization(w0, samples);
  std::vector<const TrainSample*> ptrs;
  for (const TrainSample& s : samples) ptrs.push_back(&s);
  const Trainable which = cfg.train_w2_at_init ? Trainable::Both : Trainable::W1Only;
  ClassifierProblem problem(std::move(ptrs), cfg.zeta, which, w0);
  gn::SolveResult res = optimize(problem, problem.pack(w0), cfg.init, cfg);
  return {problem.unpack(res.w), std::move(res.report)};
}

void SampleMemory::push(TrainSample sample) {
  if (capacity_ == 0) return;
  if (recent_.size() == capacity_) recent_.pop_front();
  recent_.push_back(std::move(sample));
}

std::vector<const TrainSample*> SampleMemory::all() const {
  std::vector<const TrainSample*> out;
  out.reserve(size());
  for (const TrainSample& s : initial_) out.push_back(&s);
  for (const TrainSample& s : recent_) out.push_back(&s);
  return out;
}

UpdateResult update_periodic(const ClassifierWeights& weights, SampleMemory& memory,
                             TrainSample sample, std::size_t frame_index,
                             const ClassifierConfig& cfg) {
  if (frame_index == 0) throw ContractViolation("update_periodic: frame_index must be >= 1");
  memory.push(std::move(sample));
  UpdateResult out{weights, false, std::nullopt};
  if (frame_index % cfg.update_period != 0 || memory.size() == 0) return out;

  ClassifierProblem problem(memory.all(), cfg.zeta, Trainable::W2Only, weights);
  gn::SolveResult res = optimize(problem, problem.pack(weights), cfg.update, cfg);
  out.weights = problem.unpack(res.w);
  out.optimized = true;
  out.report = std::move(res.report);
  return out;
}

double memory_loss(const ClassifierWeights& w, std::span<const TrainSample* const> samples,
                   double zeta) {
  double total = 0.0;
  for (const TrainSample* s : samples) {
    const std::vector<double> f = forward(w, s->features);
    double acc = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p) {
      const double d = f[p] - s->label[p];
      acc += d * d;
    }
    total += s->weight * acc;
  }
  double reg = 0.0;
  for (double x : w.w1) reg += x * x;
  for (double x : w.w2) reg += x * x;
  return total + zeta * reg;
}

}  // namespace dtrack::classifier
