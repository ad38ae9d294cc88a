#include "dtrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dtrack/errors.hpp"

namespace dtrack::tracker {

void TrackerConfig::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("tracker: delta must be in [0, 1]");
  if (!(size_factor > 0.0)) throw ConfigError("tracker: size_factor must be > 0");
  if (features.stride == 0 || out_size % features.stride != 0) {
    throw ConfigError("tracker: out_size must be a multiple of the feature stride");
  }
  if (out_size < GrayImage::kMinSide) throw ConfigError("tracker: out_size must be >= 8");
  if (!(min_box_side > 0.0)) throw ConfigError("tracker: min_box_side must be > 0");
  if (!(augment.translation >= 0.0 && augment.translation < 0.5) ||
      !(augment.noise_sigma >= 0.0) || !(augment.intensity >= 0.0 && augment.intensity < 1.0)) {
    throw ConfigError("tracker: augmentation parameters out of range");
  }
  classifier.validate();
  refine.validate();
}

classifier::ClassifierWeights apply_linear_update(const classifier::ClassifierWeights& prev,
                                                  const classifier::ClassifierWeights& next,
                                                  double delta) {
  if (prev.in_channels != next.in_channels || prev.hidden != next.hidden ||
      prev.w1.size() != next.w1.size() || prev.w2.size() != next.w2.size()) {
    throw ContractViolation("apply_linear_update: weight shapes differ");
  }
  if (prev.input_mean != next.input_mean || prev.input_inv_std != next.input_inv_std) {
    throw ContractViolation("apply_linear_update: input normalizations differ");
  }
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw ContractViolation("apply_linear_update: delta must be in [0, 1]");
  }
  // Equal elements are kept as is: (1 - d) a + d a need not round to a, and
  // the layer that was not re-optimized must stay bitwise unchanged.
  auto blend = [delta](double a, double b) { return a == b ? a : (1.0 - delta) * a + delta * b; };
  classifier::ClassifierWeights out = prev;
  for (std::size_t i = 0; i < out.w1.size(); ++i) out.w1[i] = blend(prev.w1[i], next.w1[i]);
  for (std::size_t i = 0; i < out.w2.size(); ++i) out.w2[i] = blend(prev.w2[i], next.w2[i]);
  return out;
}

Peak find_peak(std::span<const double> map, std::size_t H, std::size_t W) {
  if (H == 0 || W == 0 || map.size() != H * W) {
    throw ContractViolation("find_peak: map size does not match H x W");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < map.size(); ++k) {
    if (map[k] > map[best]) best = k;
  }
  const std::size_t i = best / W, j = best % W;
  const double c = map[best];
  // Vertex of the parabola through three samples, kept within half a cell.
  auto offset = [](double l, double m, double r) {
    const double denom = l - 2.0 * m + r;
    if (!(denom < 0.0)) return 0.0;
    return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
  };
  Peak p{static_cast<double>(i), static_cast<double>(j), c};
  if (j > 0 && j + 1 < W) p.col += offset(map[best - 1], c, map[best + 1]);
  if (i > 0 && i + 1 < H) p.row += offset(map[best - W], c, map[best + W]);
  return p;
}

namespace {

Crop search_crop(const GrayImage& frame, const Box2D& box, const TrackerConfig& cfg) {
  return crop_resize(frame, box.cx(), box.cy(), box.w(), box.h(), cfg.size_factor, cfg.out_size);
}

classifier::TrainSample labeled_sample(FeatureMap fm, double patch_x, double patch_y,
                                       const TrackerConfig& cfg) {
  std::vector<double> label =
      classifier::gaussian_label(fm.pixel_to_cell(patch_y), fm.pixel_to_cell(patch_x),
                                 fm.height, fm.width, cfg.classifier.label_sigma);
  return {std::move(fm), std::move(label), 1.0};
}

// Keeps the estimate usable as the next search region.
Box2D clamp_to_frame(const Box2D& b, const GrayImage& frame, double min_side) {
  const double W = static_cast<double>(frame.width()), H = static_cast<double>(frame.height());
  const double w = std::clamp(b.w(), min_side, std::max(min_side, W));
  const double h = std::clamp(b.h(), min_side, std::max(min_side, H));
  return {std::clamp(b.cx(), 0.0, W), std::clamp(b.cy(), 0.0, H), w, h};
}

}  // namespace

TrackerState init(const GrayImage& frame, const Box2D& gt_box, const head::ScoreHead& head,
                  const TrackerConfig& config, std::uint64_t seed) {
  config.validate();
  const double W = static_cast<double>(frame.width()), H = static_cast<double>(frame.height());
  if (!(gt_box.cx() >= 0.0 && gt_box.cx() <= W && gt_box.cy() >= 0.0 && gt_box.cy() <= H)) {
    throw ContractViolation("tracker init: box center outside the frame");
  }
  if (gt_box.w() < config.min_box_side || gt_box.h() < config.min_box_side) {
    throw ContractViolation("tracker init: box smaller than the minimum side");
  }
  if (!head.is_oracle()) {
    if (head.target() != config.score) {
      throw ContractViolation("tracker init: head target kind differs from the score variant");
    }
    if (head.params()->size_factor != config.size_factor) {
      throw ContractViolation("tracker init: head size_factor differs from the tracker's");
    }
  }

  std::mt19937_64 rng(seed);
  const Crop base = search_crop(frame, gt_box, config);
  const FeatureMap fm0 = featurize(base.patch, config.features);
  const Box2D gt_patch = base.mapping.box_to_patch(gt_box);
  head::RegionDescriptor tmpl = head::pool_region(fm0, gt_patch);

  const std::size_t n = config.classifier.init_samples;
  std::vector<classifier::TrainSample> samples;
  samples.reserve(n);
  samples.push_back(labeled_sample(fm0, gt_patch.cx(), gt_patch.cy(), config));
  const AugmentConfig& aug = config.augment;
  const double side = config.size_factor * std::sqrt(gt_box.w() * gt_box.h());
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 1; k < n; ++k) {
    const double dx = aug.translation * side * unit(rng);
    const double dy = aug.translation * side * unit(rng);
    const double gain = 1.0 + aug.intensity * unit(rng);
    const bool flip = aug.flip && coin(rng);
    Crop c = crop_resize(frame, gt_box.cx() + dx, gt_box.cy() + dy, gt_box.w(), gt_box.h(),
                         config.size_factor, config.out_size);
    GrayImage& p = c.patch;
    const std::size_t S = p.width();
    for (std::size_t y = 0; y < p.height(); ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        double v = p.at(x, y) * gain;
        if (aug.noise_sigma > 0.0) v += aug.noise_sigma * normal(rng);
        p.at(x, y) = std::clamp(v, 0.0, 1.0);
      }
      if (flip) {
        for (std::size_t x = 0; x < S / 2; ++x) std::swap(p.at(x, y), p.at(S - 1 - x, y));
      }
    }
    double tx = c.mapping.to_patch_x(gt_box.cx());
    const double ty = c.mapping.to_patch_y(gt_box.cy());
    if (flip) tx = static_cast<double>(S) - tx;
    samples.push_back(labeled_sample(featurize(p, config.features), tx, ty, config));
  }

  const std::uint64_t weight_seed = seed ^ 0x9e3779b97f4a7c15ULL;
  const classifier::ClassifierWeights w0 =
      classifier::initial_weights(fm0.channels, config.classifier, weight_seed);
  classifier::TrainResult trained = classifier::train_initial(samples, config.classifier, w0);

  classifier::SampleMemory memory(config.classifier.memory_capacity);
  memory.set_initial(std::move(samples));
  return TrackerState{config,
                      head,
                      std::move(tmpl),
                      trained.weights,
                      trained.weights,
                      std::move(memory),
                      std::move(trained.report),
                      gt_box,
                      0,
                      std::move(rng)};
}

FrameResult track_frame(TrackerState& state, const GrayImage& frame,
                        const std::optional<Box2D>& oracle_reference) {
  const TrackerConfig& cfg = state.config;
  if (state.head.is_oracle() && !oracle_reference) {
    throw ContractViolation("track_frame: oracle head needs a reference box");
  }
  const std::size_t t = state.frame + 1;
  FrameDiagnostics diag;

  // Classification.
  const Crop crop = search_crop(frame, state.box, cfg);
  FeatureMap fm = featurize(crop.patch, cfg.features);
  std::vector<double> conf = classifier::forward(state.weights, fm);
  const Peak peak = find_peak(conf, fm.height, fm.width);
  const double px = fm.cell_to_pixel(peak.col), py = fm.cell_to_pixel(peak.row);
  diag.peak_score = peak.value;
  diag.peak_x = crop.mapping.to_image_x(px);
  diag.peak_y = crop.mapping.to_image_y(py);
  diag.confidence = std::move(conf);

  // Estimation.
  const Box2D prev_patch = crop.mapping.box_to_patch(state.box);
  std::optional<Box2D> ref_patch;
  if (oracle_reference) ref_patch = crop.mapping.box_to_patch(*oracle_reference);
  Box2D estimate = state.box.recentered(diag.peak_x, diag.peak_y);
  try {
    const std::vector<Box2D> candidates =
        refine::sample_candidates(px, py, prev_patch, cfg.refine, state.rng);
    const refine::ScoreFn score = [&](const Box2D& b) {
      return state.head.predict_with_grad(state.template_descriptor, fm, b, ref_patch);
    };
    const std::vector<refine::Refined> refined = refine::refine_boxes(candidates, score, cfg.refine);
    for (const auto& r : refined) {
      diag.candidate_scores.push_back(r.score);
      diag.ascent_traces.push_back(r.trace);
    }
    estimate = crop.mapping.box_to_image(refine::fuse_topk(refined, cfg.refine.top_k));
  } catch (const EstimationFailure&) {
    diag.estimation_failed = true;
  }
  estimate = clamp_to_frame(estimate, frame, cfg.min_box_side);

  // Model update.
  classifier::TrainSample sample =
      labeled_sample(std::move(fm), crop.mapping.to_patch_x(estimate.cx()),
                     crop.mapping.to_patch_y(estimate.cy()), cfg);
  classifier::UpdateResult upd = classifier::update_periodic(state.weights, state.memory,
                                                             std::move(sample), t, cfg.classifier);
  if (upd.optimized) {
    diag.classifier_optimized = true;
    classifier::ClassifierWeights blended =
        apply_linear_update(state.weights, upd.weights, cfg.delta);
    state.previous_weights = std::move(state.weights);
    state.weights = std::move(blended);
  }

  state.box = estimate;
  state.frame = t;
  return {estimate, std::move(diag)};
}

std::uint64_t state_digest(const TrackerState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_vec = [&](const std::vector<double>& v) { mix(v.data(), v.size() * sizeof(double)); };
  mix_vec(state.weights.w1);
  mix_vec(state.weights.w2);
  mix_vec(state.template_descriptor.values);
  const double box[4] = {state.box.cx(), state.box.cy(), state.box.w(), state.box.h()};
  mix(box, sizeof box);
  mix(&state.frame, sizeof state.frame);
  std::ostringstream rng;
  rng << state.rng;
  const std::string s = rng.str();
  mix(s.data(), s.size());
  return h;
}

TrackRun run_sequence(const std::vector<GrayImage>& frames, const std::vector<Box2D>& gt,
                      const head::ScoreHead& head, const TrackerConfig& config,
                      std::uint64_t seed, bool keep_confidence) {
  if (frames.empty() || gt.empty()) throw ContractViolation("run_sequence: empty sequence");
  if (head.is_oracle() && gt.size() != frames.size()) {
    throw ContractViolation("run_sequence: oracle head needs ground truth for every frame");
  }
  TrackRun run;
  TrackerState state = init(frames[0], gt[0], head, config, seed);
  run.boxes.push_back(gt[0]);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    std::optional<Box2D> ref;
    if (head.is_oracle()) ref = gt[t];
    FrameResult r = track_frame(state, frames[t], ref);
    if (r.diagnostics.estimation_failed) ++run.failed_frames;
    if (!keep_confidence) r.diagnostics.confidence.clear();
    run.boxes.push_back(r.box);
    run.diagnostics.push_back(std::move(r.diagnostics));
  }
  return run;
}

}  // namespace dtrack::tracker
