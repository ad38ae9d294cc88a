// dtrack: generate synthetic sequences, train overlap heads, track, evaluate
// and run the optimizer/score ablation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dtrack/ablation.hpp"
#include "dtrack/config.hpp"
#include "dtrack/errors.hpp"
#include "dtrack/head.hpp"
#include "dtrack/kernels.hpp"
#include "dtrack/metrics.hpp"
#include "dtrack/tracker.hpp"
#include "dtrack/world.hpp"

namespace fs = std::filesystem;
using namespace dtrack;

namespace {

constexpr const char* kVersion = "dtrack 0.1.0";

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string variant;
  std::string optimizer;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--seed", c.seed, "Random seed (unsigned 64-bit)");
  cmd->add_option("--config", c.config, "Flat 'key = value' configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--variant", c.variant, "Score variant")->check(CLI::IsMember({"diou", "iou"}));
  cmd->add_option("--optimizer", c.optimizer, "Classifier optimizer")
      ->check(CLI::IsMember({"gncg", "gd"}));
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

// Defaults, then the config file, then explicit flags.
config::Settings settings_from(const Common& c) {
  config::Settings s;
  if (!c.config.empty()) config::apply(s, config::load_file(c.config), c.config);
  if (c.variant == "diou") s.tracker.score = head::TargetKind::Diou;
  if (c.variant == "iou") s.tracker.score = head::TargetKind::Iou;
  if (c.optimizer == "gncg") s.tracker.classifier.optimizer = classifier::Optimizer::GaussNewtonCg;
  if (c.optimizer == "gd") s.tracker.classifier.optimizer = classifier::Optimizer::GradientDescent;
  // The head always sees crops made exactly like the tracker's.
  s.pairs.target = s.tracker.score;
  s.pairs.size_factor = s.tracker.size_factor;
  s.pairs.out_size = s.tracker.out_size;
  s.pairs.features = s.tracker.features;
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path.string() + ": write failed");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string report_text(const metrics::EvalReport& r) {
  std::string out;
  out += "precision_at_20 = " + fmt(r.precision.at20) + "\n";
  out += "success_auc = " + fmt(r.success.auc) + "\n";
  out += "mean_iou = " + fmt(r.mean_iou) + "\n";
  out += "frames = " + std::to_string(r.ious.size()) + "\n";
  out += "precision_curve = ";
  for (std::size_t t = 0; t < r.precision.curve.size(); ++t) {
    out += (t ? "," : "") + fmt(r.precision.curve[t]);
  }
  out += "\nsuccess_curve = ";
  for (std::size_t k = 0; k < r.success.curve.size(); ++k) {
    out += (k ? "," : "") + fmt(r.success.curve[k]);
  }
  return out + "\n";
}

int cmd_gen(const Common& c) {
  config::Settings s = settings_from(c);
  if (c.seed) s.world.seed = *c.seed;
  const Sequence seq = world::generate_sequence(s.world);
  world::save_sequence(seq, c.out);
  std::cout << "wrote " << seq.size() << " frames to " << c.out << "\n";
  return 0;
}

int cmd_train_head(const Common& c, const std::vector<std::string>& dirs, std::size_t generate) {
  config::Settings s = settings_from(c);
  const std::uint64_t seed = c.seed.value_or(1);
  head::HeadTrainResult res;
  if (dirs.empty()) {
    const std::size_t n = generate ? generate : s.ablation.training_sequences;
    res = ablation::train_synthetic_head(s.pairs, s.head_train, n, seed);
  } else {
    std::vector<Sequence> seqs;
    for (const auto& d : dirs) seqs.push_back(world::load_sequence(d));
    const head::HeadDataset ds = head::sample_training_pairs(seqs, s.pairs, seed);
    res = head::train_offline(ds, s.head_train, seed);
  }
  head::save_head(res.params, c.out);
  std::cout << "final_train_mse = " << fmt(res.report.epoch_losses.back()) << "\n"
            << "heldout_mae = " << fmt(res.report.heldout_mae) << "\n"
            << "heldout_count = " << res.report.heldout_count << "\n";
  return 0;
}

int cmd_track(const Common& c, const std::string& seq_dir, const std::string& head_path,
              bool oracle) {
  config::Settings s = settings_from(c);
  const std::uint64_t seed = c.seed.value_or(1);
  if (oracle == !head_path.empty()) {
    throw ConfigError("track: give exactly one of --head or --oracle");
  }
  const Sequence seq = world::load_sequence(seq_dir);
  head::ScoreHead h = oracle ? head::ScoreHead::oracle(s.tracker.score)
                             : head::ScoreHead::learned(std::make_shared<const head::HeadParams>(
                                   head::load_head(head_path)));
  const auto t0 = std::chrono::steady_clock::now();
  const tracker::TrackRun run = tracker::run_sequence(seq.frames, seq.ground_truth, h,
                                                      s.tracker, seed);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  world::write_boxes(run.boxes, c.out);

  const std::string cfg_text = config::to_text(s);
  std::string side;
  side += "version = " + std::string(kVersion) + "\n";
  side += "sequence = " + seq_dir + "\n";
  side += "seed = " + std::to_string(seed) + "\n";
  side += "head = " + (oracle ? std::string("oracle") : head_path) + "\n";
  side += "config_digest = " + hex(config::fnv1a(cfg_text)) + "\n";
  side += "failed_frames = " + std::to_string(run.failed_frames) + "\n";
  side += report_text(metrics::evaluate(run.boxes, seq.ground_truth));
  write_text(c.out + ".report", side);
  std::cout << "tracked " << seq.size() << " frames in " << fmt(secs) << " s ("
            << fmt(static_cast<double>(seq.size()) / secs) << " frames/s), kernels "
            << kernels::name(kernels::active().isa) << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& results, const std::string& gt) {
  const std::vector<Box2D> pred = world::read_boxes(results);
  const std::vector<Box2D> truth = world::read_boxes(gt);
  if (pred.size() != truth.size()) {
    throw FormatError(results + ": " + std::to_string(pred.size()) + " boxes but " + gt +
                      " has " + std::to_string(truth.size()));
  }
  const std::string text = "version = " + std::string(kVersion) + "\n" +
                           report_text(metrics::evaluate(pred, truth));
  if (c.out.empty()) {
    std::cout << text;
  } else {
    write_text(c.out, text);
  }
  return 0;
}

int cmd_ablate(const Common& c, bool oracle, const std::string& diou_head,
               const std::string& iou_head, std::optional<std::size_t> workers) {
  config::Settings s = settings_from(c);
  const std::uint64_t seed = c.seed.value_or(s.ablation.suite_seed);
  ablation::HeadSet heads;
  if (oracle) {
    heads = {head::ScoreHead::oracle(head::TargetKind::Diou),
             head::ScoreHead::oracle(head::TargetKind::Iou)};
  } else {
    auto load_or_train = [&](const std::string& path, head::TargetKind kind) {
      if (!path.empty()) {
        return head::ScoreHead::learned(
            std::make_shared<const head::HeadParams>(head::load_head(path)));
      }
      head::PairSamplingConfig pairs = s.pairs;
      pairs.target = kind;
      return head::ScoreHead::learned(std::make_shared<const head::HeadParams>(
          ablation::train_synthetic_head(pairs, s.head_train, s.ablation.training_sequences,
                                         seed + 7919)
              .params));
    };
    heads = {load_or_train(diou_head, head::TargetKind::Diou),
             load_or_train(iou_head, head::TargetKind::Iou)};
  }
  const auto suite = world::standard_suite(s.ablation.suite_size, seed);
  const auto seeds = ablation::default_seeds(s.ablation.seeds);
  const auto variants = ablation::table_variants();
  const ablation::AblationTable table = ablation::run_ablation(
      suite, seeds, variants, heads, s.tracker, workers.value_or(s.ablation.workers));
  const std::string text = table.to_text();
  write_text(c.out, text);
  std::cout << text;
  for (const auto& row : table.rows) {
    if (row.failed) std::cerr << "row " << ablation::variant_name(row.variant) << " failed: "
                              << row.error << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale DIoU tracker: synthetic worlds, head training, tracking, metrics"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common gen_c, train_c, track_c, eval_c, ablate_c;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic sequence directory");
  add_common(gen, gen_c, true);

  auto* train = app.add_subcommand("train-head", "Train an overlap head");
  add_common(train, train_c, true);
  std::vector<std::string> train_dirs;
  std::size_t generate = 0;
  train->add_option("sequences", train_dirs, "Training sequence directories")
      ->check(CLI::ExistingDirectory);
  train->add_option("--generate", generate,
                    "Train on this many generated sequences instead of directories");

  auto* track = app.add_subcommand("track", "Track a sequence");
  add_common(track, track_c, true);
  std::string track_dir, head_path;
  bool oracle = false;
  track->add_option("sequence", track_dir, "Sequence directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  track->add_option("--head", head_path, "Trained head file")->check(CLI::ExistingFile);
  track->add_flag("--oracle", oracle, "Score with the analytic overlap against ground truth");

  auto* eval = app.add_subcommand("eval", "Evaluate a results file against ground truth");
  add_common(eval, eval_c, false);
  std::string results, gt;
  eval->add_option("results", results, "Results file")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "Ground-truth file")->required()->check(CLI::ExistingFile);

  auto* ablate = app.add_subcommand("ablate", "Run the score/optimizer ablation");
  add_common(ablate, ablate_c, true);
  bool ablate_oracle = false;
  std::string diou_head, iou_head;
  std::optional<std::size_t> workers;
  ablate->add_flag("--oracle", ablate_oracle, "Use analytic overlap heads");
  ablate->add_option("--diou-head", diou_head, "DIoU head file")->check(CLI::ExistingFile);
  ablate->add_option("--iou-head", iou_head, "IoU head file")->check(CLI::ExistingFile);
  ablate->add_option("--workers", workers, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen(gen_c);
    if (*train) return cmd_train_head(train_c, train_dirs, generate);
    if (*track) return cmd_track(track_c, track_dir, head_path, oracle);
    if (*eval) return cmd_eval(eval_c, results, gt);
    if (*ablate) return cmd_ablate(ablate_c, ablate_oracle, diou_head, iou_head, workers);
  } catch (const std::exception& e) {
    std::cerr << "dtrack: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
