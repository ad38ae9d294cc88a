#include "dtrack/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <iterator>
#include <optional>
#include <thread>

#include "dtrack/errors.hpp"
#include "dtrack/metrics.hpp"

namespace dtrack::ablation {

std::vector<Variant> table_variants() {
  using head::TargetKind;
  using classifier::Optimizer;
  return {{TargetKind::Iou, Optimizer::GradientDescent},
          {TargetKind::Iou, Optimizer::GaussNewtonCg},
          {TargetKind::Diou, Optimizer::GradientDescent},
          {TargetKind::Diou, Optimizer::GaussNewtonCg}};
}

std::string variant_name(const Variant& v) {
  return std::string(v.score == head::TargetKind::Diou ? "diou" : "iou") + "+" +
         (v.optimizer == classifier::Optimizer::GaussNewtonCg ? "gncg" : "gd");
}

const AblationRow& AblationTable::row(const Variant& v) const {
  for (const AblationRow& r : rows) {
    if (r.variant.score == v.score && r.variant.optimizer == v.optimizer) return r;
  }
  throw ContractViolation("AblationTable::row: variant not in table");
}

std::string AblationTable::to_text() const {
  std::string out = "# sequences=" + std::to_string(sequences) +
                    " seeds=" + std::to_string(seeds) + "\n";
  out += "diou_loss,conjugate_gradient,median_precision20,median_success_auc,runs,status\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%zu,%s\n",
                  r.variant.score == head::TargetKind::Diou ? "yes" : "no",
                  r.variant.optimizer == classifier::Optimizer::GaussNewtonCg ? "yes" : "no",
                  r.median_precision20, r.median_auc, r.runs, r.failed ? "failed" : "ok");
    out += buf;
  }
  return out;
}

head::HeadTrainResult train_synthetic_head(const head::PairSamplingConfig& pairs,
                                           const head::HeadTrainConfig& train,
                                           std::size_t sequences, std::uint64_t seed) {
  if (sequences == 0) throw ContractViolation("train_synthetic_head: need >= 1 sequence");
  if (pairs.pairs == 0) throw ContractViolation("train_synthetic_head: need >= 1 pair");
  // Sequences are generated a chunk at a time so memory stays bounded for
  // large suites; each chunk contributes its share of the pairs.
  constexpr std::size_t kChunk = 10;
  const auto suite = world::standard_suite(sequences, seed);
  const std::size_t chunks = std::min((sequences + kChunk - 1) / kChunk, pairs.pairs);
  head::HeadDataset ds;
  ds.target = pairs.target;
  ds.size_factor = pairs.size_factor;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = c * sequences / chunks, hi = (c + 1) * sequences / chunks;
    std::vector<Sequence> data;
    for (std::size_t i = lo; i < hi; ++i) data.push_back(world::generate_sequence(suite[i]));
    head::PairSamplingConfig part = pairs;
    part.pairs = (c + 1) * pairs.pairs / chunks - c * pairs.pairs / chunks;
    head::HeadDataset piece = head::sample_training_pairs(data, part, seed + c);
    const std::size_t offset = ds.pairs.size();
    for (head::HeadExample& e : piece.examples) e.pair += offset;
    std::move(piece.pairs.begin(), piece.pairs.end(), std::back_inserter(ds.pairs));
    ds.examples.insert(ds.examples.end(), piece.examples.begin(), piece.examples.end());
    ds.skipped_pairs += piece.skipped_pairs;
  }
  return head::train_offline(ds, train, seed);
}

std::vector<std::uint64_t> default_seeds(std::size_t count) {
  std::vector<std::uint64_t> s(count);
  for (std::size_t i = 0; i < count; ++i) s[i] = i + 1;
  return s;
}

AblationTable run_ablation(std::span<const world::WorldConfig> suite,
                           std::span<const std::uint64_t> seeds,
                           std::span<const Variant> variants, const HeadSet& heads,
                           const tracker::TrackerConfig& base, std::size_t workers) {
  if (suite.empty() || seeds.empty() || variants.empty()) {
    throw ContractViolation("run_ablation: empty suite, seed list or variant list");
  }
  base.validate();
  std::vector<Sequence> sequences;
  sequences.reserve(suite.size());
  for (const auto& cfg : suite) sequences.push_back(world::generate_sequence(cfg));

  struct Job {
    std::size_t variant, sequence, seed;
  };
  struct Outcome {
    double precision20 = 0.0, auc = 0.0;
    std::optional<std::string> error;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::size_t s = 0; s < sequences.size(); ++s)
      for (std::size_t k = 0; k < seeds.size(); ++k) jobs.push_back({v, s, k});
  std::vector<Outcome> outcomes(jobs.size());

  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const Variant& var = variants[job.variant];
    const Sequence& seq = sequences[job.sequence];
    tracker::TrackerConfig cfg = base;
    cfg.score = var.score;
    cfg.classifier.optimizer = var.optimizer;
    try {
      const tracker::TrackRun run = tracker::run_sequence(
          seq.frames, seq.ground_truth, heads.for_kind(var.score), cfg, seeds[job.seed]);
      const metrics::EvalReport rep = metrics::evaluate(run.boxes, seq.ground_truth);
      outcomes[j].precision20 = rep.precision.at20;
      outcomes[j].auc = rep.success.auc;
    } catch (const std::exception& e) {
      outcomes[j].error = variant_name(var) + " on sequence " + std::to_string(job.sequence) +
                          " seed " + std::to_string(seeds[job.seed]) + ": " + e.what();
    }
  };

  std::size_t n_workers = workers == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                       : workers;
  n_workers = std::min(n_workers, jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) run_job(j);
  };
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  AblationTable table;
  table.sequences = sequences.size();
  table.seeds = seeds.size();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow row;
    row.variant = variants[v];
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (jobs[j].variant != v) continue;
      if (outcomes[j].error) {
        if (!row.failed) row.error = *outcomes[j].error;
        row.failed = true;
        continue;
      }
      row.precision20.push_back(outcomes[j].precision20);
      row.auc.push_back(outcomes[j].auc);
    }
    row.runs = row.auc.size();
    if (row.failed) {
      row.precision20.clear();
      row.auc.clear();
    } else {
      row.median_precision20 = metrics::median(row.precision20);
      row.median_auc = metrics::median(row.auc);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dtrack::ablation
