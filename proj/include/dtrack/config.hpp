#pragma once

// Flat "key = value" configuration text. Keys are section-qualified
// ("world.width", "classifier.zeta", ...); '#' starts a comment; unknown keys
// and malformed values are errors that cite the source and line.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dtrack/ablation.hpp"
#include "dtrack/head.hpp"
#include "dtrack/tracker.hpp"
#include "dtrack/world.hpp"

namespace dtrack::config {

struct Settings {
  world::WorldConfig world;
  tracker::TrackerConfig tracker;
  head::PairSamplingConfig pairs;
  head::HeadTrainConfig head_train;
  ablation::AblationSettings ablation;
};

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<KeyValue> parse(std::string_view text, const std::string& source);
std::vector<KeyValue> load_file(const std::filesystem::path& path);

/// Applies entries in order; later entries win.
void apply(Settings& settings, const std::vector<KeyValue>& entries, const std::string& source);

/// Every key with its current value, one per line, in a fixed order.
std::string to_text(const Settings& settings);

/// Only the "world." keys.
std::string world_to_text(const world::WorldConfig& cfg);

/// Parses "world." keys from text produced by world_to_text.
world::WorldConfig world_from_text(std::string_view text, const std::string& source);

std::vector<std::string> known_keys();

/// FNV-1a, used for config digests in reports.
std::uint64_t fnv1a(std::string_view text) noexcept;

}  // namespace dtrack::config
