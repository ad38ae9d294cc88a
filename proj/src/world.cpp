#include "dtrack/world.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "dtrack/config.hpp"
#include "dtrack/errors.hpp"

namespace dtrack::world {

namespace fs = std::filesystem;

void WorldConfig::validate() const {
  if (frames < 2) throw ConfigError("world: frames must be >= 2");
  if (width < GrayImage::kMinSide || height < GrayImage::kMinSide) {
    throw ConfigError("world: frame sides must be >= 8");
  }
  if (!(target_w >= 4.0) || !(target_h >= 4.0)) {
    throw ConfigError("world: target sides must be >= 4 px");
  }
  if (target_w > static_cast<double>(width) || target_h > static_cast<double>(height)) {
    throw ConfigError("world: target larger than frame");
  }
  for (double v : {random_walk_sigma, scale_drift_sigma, occlusion_coverage, clutter_density,
                   background_amplitude, illumination_amplitude, noise_sigma}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("world: noise, drift and density parameters must be finite and >= 0");
    }
  }
  if (!std::isfinite(velocity_x) || !std::isfinite(velocity_y) || !std::isfinite(scale_rate) ||
      !std::isfinite(start_x) || !std::isfinite(start_y)) {
    throw ConfigError("world: motion parameters must be finite");
  }
  if (!(illumination_period > 0.0)) throw ConfigError("world: illumination_period must be > 0");
  if (!(background_level >= 0.0 && background_level <= 1.0)) {
    throw ConfigError("world: background_level must be in [0, 1]");
  }
}

namespace {

// Independent streams from one seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

// Small grayscale texture sampled in normalized coordinates.
class Texture {
 public:
  static constexpr std::size_t kSide = 24;

  Texture(std::uint64_t seed, double base_lo, double base_hi) : v_(kSide * kSide) {
    auto rng = stream(seed, 11);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double base = base_lo + (base_hi - base_lo) * u01(rng);
    std::fill(v_.begin(), v_.end(), base);
    // A few rectangles and one stripe pattern give a distinctive layout.
    std::uniform_int_distribution<std::size_t> pos(0, kSide - 1);
    const int rects = 4 + static_cast<int>(u01(rng) * 4.0);
    for (int r = 0; r < rects; ++r) {
      std::size_t x0 = pos(rng), x1 = pos(rng), y0 = pos(rng), y1 = pos(rng);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      const double val = u01(rng) < 0.5 ? 0.05 + 0.25 * u01(rng) : 0.7 + 0.25 * u01(rng);
      for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) v_[y * kSide + x] = val;
    }
    const std::size_t period = 3 + pos(rng) % 4;
    const bool horizontal = u01(rng) < 0.5;
    const std::size_t lo = pos(rng) / 2, hi = kSide / 2 + pos(rng) / 2;
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        const std::size_t t = horizontal ? y : x, s = horizontal ? x : y;
        if (s >= lo && s <= hi && (t / period) % 2 == 0) v_[y * kSide + x] *= 0.5;
      }
    }
  }

  // u, v in [0, 1].
  double sample(double u, double v) const noexcept {
    const double fx = std::clamp(u * kSide - 0.5, 0.0, double(kSide - 1));
    const double fy = std::clamp(v * kSide - 0.5, 0.0, double(kSide - 1));
    const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
    const std::size_t x1 = std::min(x0 + 1, kSide - 1), y1 = std::min(y0 + 1, kSide - 1);
    const double ax = fx - double(x0), ay = fy - double(y0);
    const double top = v_[y0 * kSide + x0] * (1 - ax) + v_[y0 * kSide + x1] * ax;
    const double bot = v_[y1 * kSide + x0] * (1 - ax) + v_[y1 * kSide + x1] * ax;
    return top * (1 - ay) + bot * ay;
  }

 private:
  std::vector<double> v_;
};

double overlap1d(double a0, double a1, double b0, double b1) noexcept {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Composites `value(u, v)` over the rectangle with anti-aliased coverage.
template <class Fn>
void composite(std::vector<double>& img, std::size_t W, std::size_t H, double x0, double y0,
               double x1, double y1, Fn&& value) {
  const auto xs = static_cast<long>(std::floor(std::max(0.0, x0)));
  const auto ys = static_cast<long>(std::floor(std::max(0.0, y0)));
  const auto xe = std::min(static_cast<long>(W), static_cast<long>(std::ceil(x1)));
  const auto ye = std::min(static_cast<long>(H), static_cast<long>(std::ceil(y1)));
  const double w = x1 - x0, h = y1 - y0;
  for (long y = ys; y < ye; ++y) {
    const double cy = overlap1d(double(y), double(y) + 1.0, y0, y1);
    if (cy <= 0.0) continue;
    const double v = std::clamp((double(y) + 0.5 - y0) / h, 0.0, 1.0);
    for (long x = xs; x < xe; ++x) {
      const double cx = overlap1d(double(x), double(x) + 1.0, x0, x1);
      if (cx <= 0.0) continue;
      const double cov = cx * cy;
      const double u = std::clamp((double(x) + 0.5 - x0) / w, 0.0, 1.0);
      double& p = img[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
      p = p * (1.0 - cov) + value(u, v, double(x) + 0.5, double(y) + 0.5) * cov;
    }
  }
}

std::vector<double> render_background(const WorldConfig& cfg) {
  const std::size_t W = cfg.width, H = cfg.height;
  auto rng = stream(cfg.seed, 21);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::array<std::array<double, 4>, 3> waves{};
  for (auto& wv : waves) {
    const double angle = 2.0 * std::numbers::pi * u01(rng);
    const double freq = 2.0 * std::numbers::pi / (40.0 + 80.0 * u01(rng));
    wv = {freq * std::cos(angle), freq * std::sin(angle), 2.0 * std::numbers::pi * u01(rng), 0};
  }
  std::vector<double> img(W * H);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double s = 0.0;
      for (const auto& wv : waves) s += std::sin(wv[0] * double(x) + wv[1] * double(y) + wv[2]);
      img[y * W + x] = cfg.background_level + cfg.background_amplitude * s / 3.0;
    }
  }
  const auto clutter = static_cast<std::size_t>(
      std::llround(cfg.clutter_density * double(W * H) / 1e4));
  for (std::size_t i = 0; i < clutter; ++i) {
    const double cw = 6.0 + 22.0 * u01(rng), ch = 6.0 + 22.0 * u01(rng);
    const double x0 = u01(rng) * (double(W) - cw), y0 = u01(rng) * (double(H) - ch);
    const double a = 0.1 + 0.8 * u01(rng), b = 0.1 + 0.8 * u01(rng);
    const double period = 2.0 + 4.0 * u01(rng);
    const bool vertical = u01(rng) < 0.5;
    composite(img, W, H, x0, y0, x0 + cw, y0 + ch, [&](double, double, double px, double py) {
      const double t = vertical ? px : py;
      return std::fmod(std::floor(t / period), 2.0) == 0.0 ? a : b;
    });
  }
  return img;
}

bool occluded_at(const WorldConfig& cfg, std::size_t t, double& phase) {
  if (cfg.occlusion_on == 0 || cfg.occlusion_coverage <= 0.0 || t < cfg.occlusion_first) {
    return false;
  }
  std::size_t k = t - cfg.occlusion_first;
  if (cfg.occlusion_off == 0) {
    if (k >= cfg.occlusion_on) return false;
  } else {
    k %= cfg.occlusion_on + cfg.occlusion_off;
    if (k >= cfg.occlusion_on) return false;
  }
  phase = cfg.occlusion_on > 1 ? double(k) / double(cfg.occlusion_on - 1) : 0.5;
  return true;
}

}  // namespace

Sequence generate_sequence(const WorldConfig& cfg) {
  cfg.validate();
  const std::size_t W = cfg.width, H = cfg.height;
  const double Wd = double(W), Hd = double(H);

  const std::vector<double> background = render_background(cfg);
  // The target contrasts with the background: dark on light or light on dark.
  const Texture texture(cfg.texture_seed,
                        cfg.background_level > 0.5 ? 0.1 : 0.6,
                        cfg.background_level > 0.5 ? 0.4 : 0.9);

  auto motion = stream(cfg.seed, 31);
  auto noise_rng = stream(cfg.seed, 41);
  std::normal_distribution<double> normal(0.0, 1.0);

  double cx = cfg.start_x >= 0.0 ? cfg.start_x : Wd / 2.0;
  double cy = cfg.start_y >= 0.0 ? cfg.start_y : Hd / 2.0;
  double vx = cfg.velocity_x, vy = cfg.velocity_y;
  double log_scale = 0.0;

  Sequence seq;
  seq.name = "world-" + std::to_string(cfg.seed);
  seq.provenance = config::world_to_text(cfg);
  seq.frames.reserve(cfg.frames);
  seq.ground_truth.reserve(cfg.frames);

  for (std::size_t t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      log_scale += cfg.scale_rate;
      if (cfg.scale_drift_sigma > 0.0) log_scale += cfg.scale_drift_sigma * normal(motion);
      cx += vx;
      cy += vy;
      if (cfg.random_walk_sigma > 0.0) {
        cx += cfg.random_walk_sigma * normal(motion);
        cy += cfg.random_walk_sigma * normal(motion);
      }
    }
    double w = cfg.target_w, h = cfg.target_h;
    if (log_scale != 0.0) {
      // Keep the target between 8 px and 60% of the frame.
      const double lo = std::log(std::max(8.0 / std::min(w, h), 1e-3));
      const double hi = std::log(std::min(0.6 * Wd / w, 0.6 * Hd / h));
      log_scale = std::clamp(log_scale, std::min(lo, 0.0), std::max(hi, 0.0));
      w *= std::exp(log_scale);
      h *= std::exp(log_scale);
    }
    // Bounce off the frame borders.
    if (cx - w / 2.0 < 0.0) {
      cx = w / 2.0;
      vx = std::abs(vx);
    } else if (cx + w / 2.0 > Wd) {
      cx = Wd - w / 2.0;
      vx = -std::abs(vx);
    }
    if (cy - h / 2.0 < 0.0) {
      cy = h / 2.0;
      vy = std::abs(vy);
    } else if (cy + h / 2.0 > Hd) {
      cy = Hd - h / 2.0;
      vy = -std::abs(vy);
    }
    const Box2D gt(cx, cy, w, h);

    std::vector<double> img = background;
    composite(img, W, H, gt.x0(), gt.y0(), gt.x1(), gt.y1(),
              [&](double u, double v, double, double) { return texture.sample(u, v); });

    double phase = 0.0;
    if (occluded_at(cfg, t, phase)) {
      const double bw = cfg.occlusion_coverage * w;
      const double bx0 = gt.x0() - bw + phase * (w + bw);
      composite(img, W, H, bx0, gt.y0() - 0.25 * h, bx0 + bw, gt.y1() + 0.25 * h,
                [](double, double, double, double py) {
                  return std::fmod(std::floor(py / 3.0), 2.0) == 0.0 ? 0.12 : 0.22;
                });
    }

    const double gain = 1.0 + cfg.illumination_amplitude *
                                  std::sin(2.0 * std::numbers::pi * double(t) /
                                           cfg.illumination_period);
    for (double& p : img) {
      double v = p * gain;
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * normal(noise_rng);
      p = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
    seq.frames.emplace_back(W, H, std::move(img));
    seq.ground_truth.push_back(gt);
  }
  return seq;
}

WorldConfig easy_world(std::uint64_t seed) {
  WorldConfig c;
  c.frames = 60;
  c.seed = seed;
  c.texture_seed = seed + 1000;
  c.velocity_x = 1.0;
  c.velocity_y = 0.5;
  c.clutter_density = 1.0;
  c.noise_sigma = 0.01;
  return c;
}

std::vector<WorldConfig> standard_suite(std::size_t count, std::uint64_t seed) {
  std::vector<WorldConfig> suite;
  auto rng = stream(seed, 51);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    WorldConfig c;
    c.frames = 60;
    c.seed = seed * 1000 + i + 1;
    c.texture_seed = seed * 1000 + 500 + i;
    c.target_w = 28.0 + 24.0 * u01(rng);
    c.target_h = 24.0 + 20.0 * u01(rng);
    const double speed = 1.0 + 2.5 * u01(rng);
    const double heading = 2.0 * std::numbers::pi * u01(rng);
    c.velocity_x = speed * std::cos(heading);
    c.velocity_y = speed * std::sin(heading);
    c.random_walk_sigma = 0.5 + 1.0 * u01(rng);
    c.scale_rate = (u01(rng) - 0.5) * 0.02;
    c.scale_drift_sigma = 0.01 * u01(rng);
    c.clutter_density = 2.0 + 4.0 * u01(rng);
    c.illumination_amplitude = 0.1 * u01(rng);
    c.noise_sigma = 0.01 + 0.02 * u01(rng);
    if (i % 3 == 2) {
      c.occlusion_first = 20 + static_cast<std::size_t>(15.0 * u01(rng));
      c.occlusion_on = 8;
      c.occlusion_coverage = 0.3 + 0.2 * u01(rng);
    }
    suite.push_back(c);
  }
  return suite;
}

// ---------------------------------------------------------------------------
// On-disk format

std::string frame_filename(std::size_t index_one_based) {
  std::ostringstream os;
  os << std::setw(8) << std::setfill('0') << index_one_based << ".pgm";
  return os.str();
}

void write_pgm(const GrayImage& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> bytes(img.values().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(img.values()[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

namespace {

// Next header token of a PGM, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError(path.string() + ": truncated header");
  return tok;
}

std::size_t pgm_number(std::istream& in, const fs::path& path, const char* what) {
  const std::string tok = pgm_token(in, path);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) {
    throw FormatError(path.string() + ": bad " + what + " '" + tok + "'");
  }
  return v;
}

}  // namespace

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  if (pgm_token(in, path) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  const std::size_t w = pgm_number(in, path, "width");
  const std::size_t h = pgm_number(in, path, "height");
  const std::size_t maxval = pgm_number(in, path, "maxval");
  if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PGM is supported");
  if (w < GrayImage::kMinSide || h < GrayImage::kMinSide) {
    throw FormatError(path.string() + ": image smaller than 8x8");
  }
  std::vector<unsigned char> bytes(w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  std::vector<double> values(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) values[i] = double(bytes[i]) / 255.0;
  return GrayImage(w, h, std::move(values));
}

void write_boxes(const std::vector<Box2D>& boxes, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << std::setprecision(17);
  for (const Box2D& b : boxes) {
    out << b.x0() << ',' << b.y0() << ',' << b.w() << ',' << b.h() << '\n';
  }
  if (!out) throw FormatError(path.string() + ": write failed");
}

std::vector<Box2D> read_boxes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::vector<Box2D> boxes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::array<double, 4> v{};
    std::size_t field = 0, pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      std::string tok = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                    : comma - pos);
      const auto b = tok.find_first_not_of(" \t"), e = tok.find_last_not_of(" \t");
      tok = b == std::string::npos ? std::string() : tok.substr(b, e - b + 1);
      if (field >= 4) throw FormatError(where + ": expected 4 comma-separated values");
      const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[field]);
      if (tok.empty() || ec != std::errc{} || p != tok.data() + tok.size()) {
        throw FormatError(where + ": non-numeric token '" + tok + "'");
      }
      ++field;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (field != 4) throw FormatError(where + ": expected 4 comma-separated values");
    try {
      boxes.push_back(Box2D::from_corner(v[0], v[1], v[2], v[3]));
    } catch (const ContractViolation& e) {
      throw FormatError(where + ": invalid box (" + e.what() + ")");
    }
  }
  return boxes;
}

void save_sequence(const Sequence& seq, const fs::path& dir) {
  if (seq.frames.size() != seq.ground_truth.size()) {
    throw ContractViolation("save_sequence: frame and ground-truth counts differ");
  }
  fs::create_directories(dir / "img");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    write_pgm(seq.frames[i], dir / "img" / frame_filename(i + 1));
  }
  write_boxes(seq.ground_truth, dir / "groundtruth_rect.txt");
  if (!seq.provenance.empty()) {
    std::ofstream out(dir / "world.cfg");
    out << "# name = " << seq.name << '\n' << seq.provenance;
  }
}

Sequence load_sequence(const fs::path& dir) {
  Sequence seq;
  seq.name = dir.filename().string();
  if (seq.name.empty()) seq.name = dir.parent_path().filename().string();
  const fs::path gt_path = dir / "groundtruth_rect.txt";
  seq.ground_truth = read_boxes(gt_path);
  const fs::path img_dir = dir / "img";
  if (!fs::is_directory(img_dir)) throw FormatError(img_dir.string() + ": missing directory");
  std::size_t images = 0;
  for (const auto& entry : fs::directory_iterator(img_dir)) {
    if (entry.path().extension() == ".pgm") ++images;
  }
  if (images != seq.ground_truth.size()) {
    throw FormatError(gt_path.string() + ": " + std::to_string(seq.ground_truth.size()) +
                      " boxes but " + std::to_string(images) + " images in " +
                      img_dir.string());
  }
  for (std::size_t i = 0; i < images; ++i) {
    const fs::path p = img_dir / frame_filename(i + 1);
    if (!fs::exists(p)) throw FormatError(p.string() + ": missing frame");
    seq.frames.push_back(read_pgm(p));
  }
  if (fs::exists(dir / "world.cfg")) {
    std::ifstream in(dir / "world.cfg");
    std::string line;
    std::getline(in, line);  // name comment
    std::ostringstream rest;
    rest << in.rdbuf();
    seq.provenance = rest.str();
  }
  return seq;
}

}  // namespace dtrack::world
