#include "casgnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "casgnn/errors.hpp"
#include "casgnn/image_io.hpp"

namespace casgnn {

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::color_salient: return "color";
    case Regime::depth_salient: return "depth";
    case Regime::both: return "both";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "color") return Regime::color_salient;
  if (s == "depth") return Regime::depth_salient;
  if (s == "both") return Regime::both;
  throw ConfigError("unknown regime '" + s + "' (expected color, depth or both)");
}

void GenConfig::validate() const {
  if (size < 8) throw ConfigError("scene size must be at least 8");
  if (min_objects < 1 || max_objects < min_objects) {
    throw ConfigError("invalid object count range");
  }
  if (min_area_frac <= 0 || max_area_frac > 0.5 || min_area_frac >= max_area_frac) {
    throw ConfigError("invalid salient area bounds");
  }
  if (texture_amplitude < 0 || texture_amplitude > 1 || depth_noise < 0 || depth_noise > 1) {
    throw ConfigError("amplitudes must lie in [0,1]");
  }
}

namespace {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

struct ShapeSpec {
  int kind = 0;  // 0 ellipse, 1 rectangle, 2 triangle
  double cx = 0, cy = 0;
  double a = 1, b = 1;     // half extents (ellipse/rectangle)
  double cos_t = 1, sin_t = 0;
  double vx[3] = {0, 0, 0}, vy[3] = {0, 0, 0};  // triangle vertices

  bool contains(double x, double y) const {
    if (kind == 2) {
      const auto side = [&](int i, int j) {
        return (vx[j] - vx[i]) * (y - vy[i]) - (vy[j] - vy[i]) * (x - vx[i]);
      };
      const double d0 = side(0, 1), d1 = side(1, 2), d2 = side(2, 0);
      const bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
      const bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
      return !(has_neg && has_pos);
    }
    const double dx = x - cx, dy = y - cy;
    const double u = dx * cos_t + dy * sin_t;
    const double v = -dx * sin_t + dy * cos_t;
    if (kind == 1) return std::abs(u) <= a && std::abs(v) <= b;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

ShapeSpec sample_shape(Rng& rng, int size, double target_area) {
  ShapeSpec s;
  s.kind = rng.uniform_int(0, 2);
  const double theta = rng.uniform(0, 2 * std::numbers::pi);
  s.cos_t = std::cos(theta);
  s.sin_t = std::sin(theta);
  const double aspect = rng.uniform(0.5, 1.0);
  if (s.kind == 0) {
    // pi * a * b = area, b = aspect * a
    s.a = std::sqrt(target_area / (std::numbers::pi * aspect));
    s.b = aspect * s.a;
  } else if (s.kind == 1) {
    // 4 * a * b = area
    s.a = std::sqrt(target_area / (4.0 * aspect));
    s.b = aspect * s.a;
  }
  const double extent = s.kind == 2 ? std::sqrt(target_area) : std::max(s.a, s.b);
  const double cap = size * 0.45;
  const double margin = std::min(std::max(extent, 2.0), cap);
  s.cx = rng.uniform(margin, size - margin);
  s.cy = rng.uniform(margin, size - margin);
  if (s.kind == 2) {
    // near-equilateral triangle of the target area, jittered
    const double radius = std::sqrt(target_area / (3.0 * std::sqrt(3.0) / 4.0));
    for (int i = 0; i < 3; ++i) {
      const double ang = theta + i * (2 * std::numbers::pi / 3) + rng.uniform(-0.3, 0.3);
      const double rad = radius * rng.uniform(0.85, 1.15);
      s.vx[i] = s.cx + rad * std::cos(ang);
      s.vy[i] = s.cy + rad * std::sin(ang);
    }
  }
  return s;
}

std::vector<std::uint8_t> rasterize(const ShapeSpec& shape, int size) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (shape.contains(x + 0.5, y + 0.5)) mask[static_cast<std::size_t>(y) * size + x] = 1;
    }
  }
  return mask;
}

std::size_t count_on(const std::vector<std::uint8_t>& m) {
  std::size_t n = 0;
  for (auto v : m) n += v;
  return n;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& m, int size) {
  std::vector<std::uint8_t> out(m.size(), 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (!m[static_cast<std::size_t>(y) * size + x]) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy, nx = x + dx;
          if (ny >= 0 && ny < size && nx >= 0 && nx < size) {
            out[static_cast<std::size_t>(ny) * size + nx] = 1;
          }
        }
      }
    }
  }
  return out;
}

Rgb contrasting_color(const Rgb& base, Rng& rng) {
  const auto push = [&](double v) {
    const double shift = rng.uniform(0.35, 0.6);
    return std::clamp(v < 0.5 ? v + shift : v - shift, 0.0, 1.0);
  };
  return {push(base.r), push(base.g), push(base.b)};
}

Rgb camouflaged_color(const Rgb& base, double budget, Rng& rng) {
  const auto nudge = [&](double v) {
    return std::clamp(v + rng.uniform(-budget, budget) * 0.25, 0.0, 1.0);
  };
  return {nudge(base.r), nudge(base.g), nudge(base.b)};
}

}  // namespace

SceneSample generate_sample(std::uint32_t seed, const GenConfig& config) {
  config.validate();
  Rng rng(seed);
  const int size = config.size;
  const std::size_t pixels = static_cast<std::size_t>(size) * size;

  const Rgb bg_color{rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
  const double bg_depth = rng.uniform(0.72, 0.92);
  const double depth_tilt = rng.uniform(-0.05, 0.05);

  // Salient shape: resample until the rasterized area lands in bounds.
  const double lo = config.min_area_frac * pixels;
  const double hi = config.max_area_frac * pixels;
  std::vector<std::uint8_t> salient_mask;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double target = rng.uniform(lo * 1.15, hi * 0.85);
    ShapeSpec shape = sample_shape(rng, size, target);
    salient_mask = rasterize(shape, size);
    const double area = static_cast<double>(count_on(salient_mask));
    if (area >= lo && area <= hi) break;
    salient_mask.clear();
  }
  if (salient_mask.empty()) {
    throw NumericError("salient shape area did not converge for seed " + std::to_string(seed));
  }
  const std::vector<std::uint8_t> keep_out = dilate(salient_mask, size);

  const bool color_pop = config.regime != Regime::depth_salient;
  const bool depth_pop = config.regime != Regime::color_salient;
  const Rgb salient_color = color_pop ? contrasting_color(bg_color, rng)
                                      : camouflaged_color(bg_color, config.camouflage, rng);
  const double salient_depth = depth_pop ? rng.uniform(0.08, 0.30)
                                         : std::clamp(bg_depth + rng.uniform(-0.06, 0.06), 0.0, 1.0);

  // Decoy shapes carry the cue the salient object lacks, never overlap it.
  struct Decoy {
    std::vector<std::uint8_t> mask;
    Rgb color;
    double depth;
  };
  std::vector<Decoy> decoys;
  const int object_count = rng.uniform_int(config.min_objects, config.max_objects);
  for (int i = 1; i < object_count; ++i) {
    const double target = rng.uniform(lo * 0.6, hi * 0.6);
    ShapeSpec shape = sample_shape(rng, size, target);
    std::vector<std::uint8_t> mask = rasterize(shape, size);
    bool overlaps = false;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (mask[p] && keep_out[p]) {
        overlaps = true;
        break;
      }
    }
    Decoy decoy;
    decoy.color = config.regime == Regime::depth_salient ? contrasting_color(bg_color, rng)
                                                         : camouflaged_color(bg_color, 0.2, rng);
    decoy.depth = config.regime == Regime::color_salient
                      ? rng.uniform(0.3, 0.9)
                      : std::clamp(bg_depth + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    if (overlaps) continue;
    decoy.mask = std::move(mask);
    decoys.push_back(std::move(decoy));
  }

  // Smooth two-frequency texture shared by every region so the salient
  // boundary stays camouflage-clean in the depth regime.
  const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
  const double px = rng.uniform(0.0, 1.0), py = rng.uniform(0.0, 1.0);
  const double wr = rng.uniform(0.5, 1.0), wg = rng.uniform(0.5, 1.0), wb = rng.uniform(0.5, 1.0);
  const double amp = config.texture_amplitude * rng.uniform(0.6, 1.0);

  TensorF rgb = TensorF::zeros({1, 3, size, size});
  TensorF depth = TensorF::zeros({1, 1, size, size});
  TensorF mask = TensorF::zeros({1, 1, size, size});

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * size + x;
      Rgb color = bg_color;
      double d = std::clamp(bg_depth + depth_tilt * (static_cast<double>(y) / size - 0.5), 0.0, 1.0);
      for (const Decoy& decoy : decoys) {
        if (decoy.mask[p]) {
          color = decoy.color;
          d = decoy.depth;
        }
      }
      if (salient_mask[p]) {
        color = salient_color;
        d = salient_depth;
        mask.at(0, 0, y, x) = 1.0f;
      }
      const double tex = amp *
                         std::sin(2 * std::numbers::pi * (fx * x / size + px)) *
                         std::sin(2 * std::numbers::pi * (fy * y / size + py));
      rgb.at(0, 0, y, x) = static_cast<float>(std::clamp(color.r + wr * tex, 0.0, 1.0));
      rgb.at(0, 1, y, x) = static_cast<float>(std::clamp(color.g + wg * tex, 0.0, 1.0));
      rgb.at(0, 2, y, x) = static_cast<float>(std::clamp(color.b + wb * tex, 0.0, 1.0));
      const double noise = config.depth_noise * rng.uniform(-1.0, 1.0);
      depth.at(0, 0, y, x) = static_cast<float>(std::clamp(d + noise, 0.0, 1.0));
    }
  }

  SceneSample sample;
  sample.rgb = std::move(rgb);
  sample.depth = std::move(depth);
  sample.mask = std::move(mask);
  sample.id = "s" + std::to_string(seed);
  return sample;
}

namespace {

TensorF map_like(const TensorF& src, int h, int w) {
  return TensorF::zeros({1, src.shape().c, h, w});
}

}  // namespace

SceneSample flip_horizontal(const SceneSample& s) {
  SceneSample out;
  out.id = s.id;
  for (auto [src, dst] : {std::pair{&s.rgb, &out.rgb}, {&s.depth, &out.depth}, {&s.mask, &out.mask}}) {
    const Shape& sh = src->shape();
    *dst = map_like(*src, sh.h, sh.w);
    for (int c = 0; c < sh.c; ++c)
      for (int y = 0; y < sh.h; ++y)
        for (int x = 0; x < sh.w; ++x) dst->at(0, c, y, x) = src->at(0, c, y, sh.w - 1 - x);
  }
  return out;
}

SceneSample rotate90(const SceneSample& s, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  SceneSample out = s;
  for (int step = 0; step < k; ++step) {
    SceneSample next;
    next.id = out.id;
    for (auto [src, dst] :
         {std::pair{&out.rgb, &next.rgb}, {&out.depth, &next.depth}, {&out.mask, &next.mask}}) {
      const Shape& sh = src->shape();
      *dst = map_like(*src, sh.w, sh.h);  // counter-clockwise quarter turn
      for (int c = 0; c < sh.c; ++c)
        for (int y = 0; y < sh.w; ++y)
          for (int x = 0; x < sh.h; ++x) dst->at(0, c, y, x) = src->at(0, c, x, sh.w - 1 - y);
    }
    out = std::move(next);
  }
  return out;
}

SceneSample scale_brightness(const SceneSample& s, float factor) {
  SceneSample out = s;
  out.rgb = s.rgb.clone();
  for (auto& v : out.rgb.data()) v = std::clamp(v * factor, 0.0f, 1.0f);
  return out;
}

SceneSample augment(const SceneSample& s, Rng& rng, const AugmentToggles& toggles) {
  SceneSample out = s;
  if (toggles.flip && rng.coin()) out = flip_horizontal(out);
  if (toggles.rotate) {
    const int k = rng.uniform_int(0, 3);
    if (k != 0) out = rotate90(out, k);
  }
  if (toggles.brightness) {
    const float factor = static_cast<float>(rng.uniform(0.7, 1.3));
    out = scale_brightness(out, factor);
  }
  return out;
}

void save_sample(const SceneSample& s, const std::string& prefix) {
  write_ppm(prefix + "_rgb.ppm", s.rgb);
  write_pgm(prefix + "_depth.pgm", s.depth);
  write_pgm(prefix + "_mask.pgm", s.mask);
}

SceneSample load_sample(const std::string& prefix, const std::string& id) {
  SceneSample s;
  s.rgb = read_ppm(prefix + "_rgb.ppm");
  s.depth = read_pgm(prefix + "_depth.pgm");
  s.mask = read_pgm(prefix + "_mask.pgm");
  s.id = id;
  for (const float v : s.mask.data()) {
    if (v != 0.0f && v != 1.0f) {
      throw FormatError(prefix + "_mask.pgm: mask is not binary");
    }
  }
  return s;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.csv");
  if (!manifest) throw IoError("cannot write " + dir + "/manifest.csv");
  manifest << "id,rgb,depth,mask\n";
  for (const SceneSample& s : dataset.samples) {
    save_sample(s, dir + "/" + s.id);
    manifest << s.id << "," << s.id << "_rgb.ppm," << s.id << "_depth.pgm," << s.id
             << "_mask.pgm\n";
  }
  if (!manifest) throw IoError("write failed for " + dir + "/manifest.csv");
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream manifest(dir + "/manifest.csv");
  if (!manifest) throw IoError("cannot read " + dir + "/manifest.csv");
  std::string line;
  if (!std::getline(manifest, line) || line != "id,rgb,depth,mask") {
    throw FormatError(dir + "/manifest.csv: bad header");
  }
  Dataset dataset;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string id, rgb, depth, mask;
    if (!std::getline(row, id, ',') || !std::getline(row, rgb, ',') ||
        !std::getline(row, depth, ',') || !std::getline(row, mask, ',')) {
      throw FormatError(dir + "/manifest.csv: malformed row '" + line + "'");
    }
    SceneSample s;
    s.rgb = read_ppm(dir + "/" + rgb);
    s.depth = read_pgm(dir + "/" + depth);
    s.mask = read_pgm(dir + "/" + mask);
    s.id = id;
    for (const float v : s.mask.data()) {
      if (v != 0.0f && v != 1.0f) throw FormatError(dir + "/" + mask + ": mask is not binary");
    }
    dataset.samples.push_back(std::move(s));
  }
  return dataset;
}

Dataset generate_dataset(const GenConfig& config, int count) {
  Dataset dataset;
  dataset.samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    dataset.samples.push_back(generate_sample(config.seed + static_cast<std::uint32_t>(i), config));
  }
  return dataset;
}

}  // namespace casgnn
