#include "dtrack/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "dtrack/errors.hpp"

namespace dtrack::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Value codecs. Each parse returns false on malformed text.
bool parse_value(const std::string& s, double& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}
bool parse_value(const std::string& s, std::size_t& out) {
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}
bool parse_value(const std::string& s, bool& out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}
bool parse_value(const std::string& s, classifier::Optimizer& out) {
  if (s == "gncg") return out = classifier::Optimizer::GaussNewtonCg, true;
  if (s == "gd") return out = classifier::Optimizer::GradientDescent, true;
  return false;
}
bool parse_value(const std::string& s, head::TargetKind& out) {
  if (s == "diou") return out = head::TargetKind::Diou, true;
  if (s == "iou") return out = head::TargetKind::Iou, true;
  return false;
}

std::string format_value(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(classifier::Optimizer v) {
  return v == classifier::Optimizer::GaussNewtonCg ? "gncg" : "gd";
}
std::string format_value(head::TargetKind v) {
  return v == head::TargetKind::Diou ? "diou" : "iou";
}

struct Field {
  std::string name;
  std::function<bool(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

template <class Access>
Field make_field(std::string name, Access access) {
  return {std::move(name),
          [access](Settings& s, const std::string& v) { return parse_value(v, access(s)); },
          [access](const Settings& s) { return format_value(access(s)); }};
}

#define DTRACK_FIELD(key, expr) make_field(key, [](auto& s) -> auto& { return s.expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DTRACK_FIELD("world.width", world.width),
      DTRACK_FIELD("world.height", world.height),
      DTRACK_FIELD("world.frames", world.frames),
      DTRACK_FIELD("world.target_w", world.target_w),
      DTRACK_FIELD("world.target_h", world.target_h),
      DTRACK_FIELD("world.start_x", world.start_x),
      DTRACK_FIELD("world.start_y", world.start_y),
      DTRACK_FIELD("world.texture_seed", world.texture_seed),
      DTRACK_FIELD("world.velocity_x", world.velocity_x),
      DTRACK_FIELD("world.velocity_y", world.velocity_y),
      DTRACK_FIELD("world.random_walk_sigma", world.random_walk_sigma),
      DTRACK_FIELD("world.scale_drift_sigma", world.scale_drift_sigma),
      DTRACK_FIELD("world.scale_rate", world.scale_rate),
      DTRACK_FIELD("world.occlusion_first", world.occlusion_first),
      DTRACK_FIELD("world.occlusion_on", world.occlusion_on),
      DTRACK_FIELD("world.occlusion_off", world.occlusion_off),
      DTRACK_FIELD("world.occlusion_coverage", world.occlusion_coverage),
      DTRACK_FIELD("world.clutter_density", world.clutter_density),
      DTRACK_FIELD("world.background_level", world.background_level),
      DTRACK_FIELD("world.background_amplitude", world.background_amplitude),
      DTRACK_FIELD("world.illumination_amplitude", world.illumination_amplitude),
      DTRACK_FIELD("world.illumination_period", world.illumination_period),
      DTRACK_FIELD("world.noise_sigma", world.noise_sigma),
      DTRACK_FIELD("world.seed", world.seed),

      DTRACK_FIELD("tracker.delta", tracker.delta),
      DTRACK_FIELD("tracker.size_factor", tracker.size_factor),
      DTRACK_FIELD("tracker.out_size", tracker.out_size),
      DTRACK_FIELD("tracker.min_box_side", tracker.min_box_side),
      DTRACK_FIELD("tracker.score", tracker.score),
      DTRACK_FIELD("features.stride", tracker.features.stride),
      DTRACK_FIELD("features.orientation_bins", tracker.features.orientation_bins),
      DTRACK_FIELD("augment.translation", tracker.augment.translation),
      DTRACK_FIELD("augment.flip", tracker.augment.flip),
      DTRACK_FIELD("augment.noise_sigma", tracker.augment.noise_sigma),
      DTRACK_FIELD("augment.intensity", tracker.augment.intensity),

      DTRACK_FIELD("classifier.hidden_channels", tracker.classifier.hidden_channels),
      DTRACK_FIELD("classifier.alpha", tracker.classifier.alpha),
      DTRACK_FIELD("classifier.zeta", tracker.classifier.zeta),
      DTRACK_FIELD("classifier.label_sigma", tracker.classifier.label_sigma),
      DTRACK_FIELD("classifier.init_gn_rounds", tracker.classifier.init.gn_rounds),
      DTRACK_FIELD("classifier.init_cg_iterations", tracker.classifier.init.cg_iterations),
      DTRACK_FIELD("classifier.update_gn_rounds", tracker.classifier.update.gn_rounds),
      DTRACK_FIELD("classifier.update_cg_iterations", tracker.classifier.update.cg_iterations),
      DTRACK_FIELD("classifier.update_period", tracker.classifier.update_period),
      DTRACK_FIELD("classifier.init_samples", tracker.classifier.init_samples),
      DTRACK_FIELD("classifier.memory_capacity", tracker.classifier.memory_capacity),
      DTRACK_FIELD("classifier.train_w2_at_init", tracker.classifier.train_w2_at_init),
      DTRACK_FIELD("classifier.w2_init_std", tracker.classifier.w2_init_std),
      DTRACK_FIELD("classifier.normalize_inputs", tracker.classifier.normalize_inputs),
      DTRACK_FIELD("classifier.optimizer", tracker.classifier.optimizer),
      DTRACK_FIELD("classifier.gd_learning_rate", tracker.classifier.gd_learning_rate),

      DTRACK_FIELD("refine.n_candidates", tracker.refine.n_candidates),
      DTRACK_FIELD("refine.ascent_steps", tracker.refine.ascent_steps),
      DTRACK_FIELD("refine.step_scale", tracker.refine.step_scale),
      DTRACK_FIELD("refine.top_k", tracker.refine.top_k),
      DTRACK_FIELD("refine.center_sigma", tracker.refine.center_sigma),
      DTRACK_FIELD("refine.log_size_sigma", tracker.refine.log_size_sigma),
      DTRACK_FIELD("refine.min_side", tracker.refine.min_side),
      DTRACK_FIELD("refine.always_accept", tracker.refine.always_accept),

      DTRACK_FIELD("pairs.pairs", pairs.pairs),
      DTRACK_FIELD("pairs.jitters_per_pair", pairs.jitters_per_pair),
      DTRACK_FIELD("pairs.max_frame_gap", pairs.max_frame_gap),
      DTRACK_FIELD("pairs.center_sigma", pairs.center_sigma),
      DTRACK_FIELD("pairs.log_size_sigma", pairs.log_size_sigma),
      DTRACK_FIELD("pairs.min_iou", pairs.min_iou),
      DTRACK_FIELD("pairs.crop_center_sigma", pairs.crop_center_sigma),
      DTRACK_FIELD("pairs.crop_log_scale_sigma", pairs.crop_log_scale_sigma),
      DTRACK_FIELD("pairs.sequences", ablation.training_sequences),

      DTRACK_FIELD("head_train.epochs", head_train.epochs),
      DTRACK_FIELD("head_train.batch_size", head_train.batch_size),
      DTRACK_FIELD("head_train.learning_rate", head_train.learning_rate),
      DTRACK_FIELD("head_train.decay_factor", head_train.decay_factor),
      DTRACK_FIELD("head_train.decay_every", head_train.decay_every),
      DTRACK_FIELD("head_train.holdout_fraction", head_train.holdout_fraction),
      DTRACK_FIELD("head_train.hidden1", head_train.hidden1),
      DTRACK_FIELD("head_train.hidden2", head_train.hidden2),

      DTRACK_FIELD("ablation.suite_size", ablation.suite_size),
      DTRACK_FIELD("ablation.suite_seed", ablation.suite_seed),
      DTRACK_FIELD("ablation.seeds", ablation.seeds),
      DTRACK_FIELD("ablation.workers", ablation.workers),
  };
  return table;
}

#undef DTRACK_FIELD

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.name == key) return &f;
  }
  return nullptr;
}

}  // namespace

std::vector<KeyValue> parse(std::string_view text, const std::string& source) {
  std::vector<KeyValue> out;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    KeyValue kv{trim(std::string_view(content).substr(0, eq)),
                trim(std::string_view(content).substr(eq + 1)), lineno};
    if (kv.key.empty() || kv.value.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key or value");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void apply(Settings& settings, const std::vector<KeyValue>& entries, const std::string& source) {
  for (const KeyValue& kv : entries) {
    const std::string where = source + ":" + std::to_string(kv.line);
    const Field* f = find_field(kv.key);
    if (f == nullptr) throw ConfigError(where + ": unknown key '" + kv.key + "'");
    if (!f->set(settings, kv.value)) {
      throw ConfigError(where + ": invalid value '" + kv.value + "' for '" + kv.key + "'");
    }
  }
}

std::string to_text(const Settings& settings) {
  std::string out;
  for (const Field& f : fields()) out += f.name + " = " + f.get(settings) + "\n";
  return out;
}

std::string world_to_text(const world::WorldConfig& cfg) {
  Settings s;
  s.world = cfg;
  std::string out;
  for (const Field& f : fields()) {
    if (f.name.starts_with("world.")) out += f.name + " = " + f.get(s) + "\n";
  }
  return out;
}

world::WorldConfig world_from_text(std::string_view text, const std::string& source) {
  Settings s;
  const std::vector<KeyValue> entries = parse(text, source);
  for (const KeyValue& kv : entries) {
    if (!kv.key.starts_with("world.")) {
      throw ConfigError(source + ":" + std::to_string(kv.line) + ": not a world key '" +
                        kv.key + "'");
    }
  }
  apply(s, entries, source);
  return s.world;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.name);
  return out;
}

std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dtrack::config
