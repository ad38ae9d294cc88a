#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "dtrack/config.hpp"
#include "dtrack/errors.hpp"

using namespace dtrack;
using namespace dtrack::config;

namespace {

std::string error_of(const std::string& text) {
  try {
    Settings s;
    apply(s, parse(text, "cfg.txt"), "cfg.txt");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parse: comments, blank lines and whitespace") {
  const auto kv = parse("# header\n\n  world.width = 200  # trailing\n\tclassifier.zeta=0.5\r\n",
                        "t");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0].key == "world.width");
  CHECK(kv[0].value == "200");
  CHECK(kv[0].line == 3);
  CHECK(kv[1].key == "classifier.zeta");
  CHECK(kv[1].value == "0.5");
  CHECK(kv[1].line == 4);
  CHECK(parse("", "t").empty());
}

TEST_CASE("errors cite source and line") {
  std::string msg = error_of("world.width = 10\nnot a pair\n");
  CHECK(msg.find("cfg.txt:2") != std::string::npos);
  msg = error_of("\n\nworld.bogus = 1\n");
  CHECK(msg.find("cfg.txt:3") != std::string::npos);
  CHECK(msg.find("world.bogus") != std::string::npos);
  msg = error_of("world.width = ten\n");
  CHECK(msg.find("cfg.txt:1") != std::string::npos);
  CHECK(msg.find("ten") != std::string::npos);
  CHECK_FALSE(error_of("world.width = \n").empty());
  CHECK_FALSE(error_of("= 3\n").empty());
  CHECK_FALSE(error_of("world.width = 1.5\n").empty());
  CHECK_FALSE(error_of("world.width = -3\n").empty());
  CHECK_FALSE(error_of("classifier.zeta = 0.1x\n").empty());
  CHECK_FALSE(error_of("classifier.optimizer = newton\n").empty());
  CHECK_FALSE(error_of("refine.always_accept = maybe\n").empty());
  CHECK_THROWS_AS(load_file("/nonexistent/dtrack.cfg"), ConfigError);
}

TEST_CASE("apply: typed values and later entries win") {
  Settings s;
  apply(s,
        parse("world.width = 200\nworld.width = 240\nclassifier.optimizer = gd\n"
              "tracker.score = iou\nrefine.always_accept = true\nclassifier.zeta = 0.25\n",
              "t"),
        "t");
  CHECK(s.world.width == 240);
  CHECK(s.tracker.classifier.optimizer == classifier::Optimizer::GradientDescent);
  CHECK(s.tracker.score == head::TargetKind::Iou);
  CHECK(s.tracker.refine.always_accept);
  CHECK(s.tracker.classifier.zeta == 0.25);
  apply(s, parse("refine.always_accept = 0\n", "t"), "t");
  CHECK_FALSE(s.tracker.refine.always_accept);
}

TEST_CASE("to_text round trips every key") {
  Settings s;
  s.world.frames = 77;
  s.world.velocity_x = 0.1;  // not exactly representable: needs shortest round-trip output
  s.tracker.delta = 1.0 / 3.0;
  s.tracker.classifier.optimizer = classifier::Optimizer::GradientDescent;
  s.ablation.seeds = 3;
  const std::string text = to_text(s);
  Settings r;
  apply(r, parse(text, "t"), "t");
  CHECK(to_text(r) == text);
  CHECK(r.world.velocity_x == 0.1);
  CHECK(r.tracker.delta == 1.0 / 3.0);

  const auto keys = known_keys();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == keys.size());
  for (const std::string& k : keys) {
    CHECK(std::count(keys.begin(), keys.end(), k) == 1);
    CHECK(text.find(k + " = ") != std::string::npos);
  }
  CHECK(std::find(keys.begin(), keys.end(), "refine.always_accept") != keys.end());
}

TEST_CASE("world text round trip and key restriction") {
  world::WorldConfig c = world::easy_world(9);
  c.random_walk_sigma = 0.7;
  const std::string text = world_to_text(c);
  CHECK(text.find("classifier.") == std::string::npos);
  const world::WorldConfig r = world_from_text(text, "w");
  CHECK(world_to_text(r) == text);
  CHECK(r.seed == c.seed);
  CHECK_THROWS_AS(world_from_text("classifier.zeta = 1\n", "w"), ConfigError);
}

TEST_CASE("config file on disk") {
  const auto p = std::filesystem::temp_directory_path() / "dtrack_test_config.cfg";
  {
    std::ofstream(p) << "world.frames = 12\n";
  }
  Settings s;
  apply(s, load_file(p), p.string());
  CHECK(s.world.frames == 12);
  std::filesystem::remove(p);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}
