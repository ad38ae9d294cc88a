#pragma once

// Two-by-two ablation over {DIoU, IoU} score heads and {GN-CG, gradient
// descent} classifier optimizers. Runs fan out over a worker pool; results
// are gathered by (variant, sequence, seed), so the table does not depend on
// scheduling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dtrack/classifier.hpp"
#include "dtrack/head.hpp"
#include "dtrack/tracker.hpp"
#include "dtrack/world.hpp"

namespace dtrack::ablation {

struct AblationSettings {
  std::size_t suite_size = 10;
  std::uint64_t suite_seed = 1;
  std::size_t seeds = 5;
  std::size_t workers = 0;  // 0: hardware concurrency
  std::size_t training_sequences = 300;  // sequences used to train heads
};

struct Variant {
  head::TargetKind score = head::TargetKind::Diou;
  classifier::Optimizer optimizer = classifier::Optimizer::GaussNewtonCg;
};

/// The four rows in table order: (IoU, GD), (IoU, GN-CG), (DIoU, GD), (DIoU, GN-CG).
std::vector<Variant> table_variants();

std::string variant_name(const Variant& v);

/// Score heads per target kind; either may be an oracle.
struct HeadSet {
  head::ScoreHead diou;
  head::ScoreHead iou;
  const head::ScoreHead& for_kind(head::TargetKind k) const noexcept {
    return k == head::TargetKind::Diou ? diou : iou;
  }
};

struct AblationRow {
  Variant variant;
  double median_precision20 = 0.0;
  double median_auc = 0.0;
  std::size_t runs = 0;
  bool failed = false;
  std::string error;  // first failure, if any
  std::vector<double> precision20;  // per (sequence, seed), sequence-major
  std::vector<double> auc;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::size_t sequences = 0;
  std::size_t seeds = 0;

  const AblationRow& row(const Variant& v) const;
  /// Machine-readable CSV, fixed 6-decimal formatting.
  std::string to_text() const;
};

AblationTable run_ablation(std::span<const world::WorldConfig> suite,
                           std::span<const std::uint64_t> seeds,
                           std::span<const Variant> variants, const HeadSet& heads,
                           const tracker::TrackerConfig& base, std::size_t workers);

/// Generates `sequences` training worlds from `seed`, samples pairs and trains
/// a head for `pairs.target`.
head::HeadTrainResult train_synthetic_head(const head::PairSamplingConfig& pairs,
                                           const head::HeadTrainConfig& train,
                                           std::size_t sequences, std::uint64_t seed);

/// Tracker seeds 1..count.
std::vector<std::uint64_t> default_seeds(std::size_t count);

}  // namespace dtrack::ablation
