#include "dr2s/chartgen/charts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dr2s/core/error.hpp"
#include "dr2s/core/json_keys.hpp"
#include "dr2s/spectral/spectral.hpp"

namespace dr2s::chartgen {

using nlohmann::json;

void DeadLeavesParams::validate() const {
  if (size < 8) throw ConfigError("dead-leaves size must be at least 8");
  if (!(r_min > 0.0 && r_min < r_max && r_max < size / 2.0)) {
    throw ConfigError("dead-leaves radii must satisfy 0 < r_min < r_max < size/2");
  }
  if (!(radius_exponent > 0.0)) throw ConfigError("radius_exponent must be positive");
  if (!(value_lo <= value_hi)) throw ConfigError("value range is empty");
}

double sample_radius(Rng& rng, double r_min, double r_max, double exponent) {
  const double u = rng.uniform();
  if (std::abs(exponent - 1.0) < 1e-12) return r_min * std::pow(r_max / r_min, u);
  const double e = 1.0 - exponent;
  const double a = std::pow(r_min, e);
  const double b = std::pow(r_max, e);
  return std::pow(a + u * (b - a), 1.0 / e);
}

ImageF gen_dead_leaves(const DeadLeavesParams& p) {
  p.validate();
  const int ch = p.gray ? 1 : 3;
  ImageF img(p.size, p.size, ch, kBackgroundSentinel);
  Rng rng(p.seed);
  std::size_t uncovered = img.plane_size();
  const double lo = -p.r_max;
  const double hi = p.size + p.r_max;
  long disks = 0;
  for (; disks < kMaxDisks && uncovered > 0; ++disks) {
    const double cx = rng.uniform(lo, hi);
    const double cy = rng.uniform(lo, hi);
    const double r = sample_radius(rng, p.r_min, p.r_max, p.radius_exponent);
    double value[3];
    for (int c = 0; c < ch; ++c) value[c] = rng.uniform(p.value_lo, p.value_hi);
    const int y0 = std::max(0, static_cast<int>(std::ceil(cy - r - 0.5)));
    const int y1 = std::min(p.size - 1, static_cast<int>(std::floor(cy + r - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      const double dy = y + 0.5 - cy;
      const double half = std::sqrt(std::max(r * r - dy * dy, 0.0));
      const int x0 = std::max(0, static_cast<int>(std::ceil(cx - half - 0.5)));
      const int x1 = std::min(p.size - 1, static_cast<int>(std::floor(cx + half - 0.5)));
      for (int x = x0; x <= x1; ++x) {
        if (img.at(0, y, x) == kBackgroundSentinel) --uncovered;
        for (int c = 0; c < ch; ++c) img.at(c, y, x) = value[c];
      }
    }
  }
  if (uncovered > 0) {
    throw NumericError("dead-leaves generation hit the disk cap before full coverage");
  }
  return img;
}

std::string to_string(TileKind k) {
  switch (k) {
    case TileKind::Uniform: return "uniform";
    case TileKind::DeadLeavesFine: return "dead-leaves-fine";
    case TileKind::DeadLeavesCoarse: return "dead-leaves-coarse";
    case TileKind::SinusoidalGrating: return "sinusoidal-grating";
    case TileKind::ResolutionLines: return "resolution-lines";
    case TileKind::LowContrastDetail: return "low-contrast-detail";
  }
  return "uniform";
}

TileKind tile_kind_from_string(const std::string& s) {
  for (TileKind k : {TileKind::Uniform, TileKind::DeadLeavesFine, TileKind::DeadLeavesCoarse,
                     TileKind::SinusoidalGrating, TileKind::ResolutionLines,
                     TileKind::LowContrastDetail}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown tile kind '" + s + "'");
}

bool is_fine_detail(TileKind k) {
  return k == TileKind::DeadLeavesFine || k == TileKind::LowContrastDetail;
}

void CompositeChartSpec::validate() const {
  if (grid < 1 || size < grid * 16) throw ConfigError("composite chart too small for its grid");
  if (tiles.size() != static_cast<std::size_t>(grid * grid)) {
    throw ConfigError("composite chart needs grid*grid tile kinds");
  }
  const bool has_uniform = std::ranges::count(tiles, TileKind::Uniform) > 0;
  const bool has_fine = std::ranges::any_of(tiles, is_fine_detail);
  if (!has_uniform || !has_fine) {
    throw ConfigError("composite chart needs at least one uniform and one fine-detail tile");
  }
  if (!(grating_frequency > 0.0 && grating_frequency < 0.5)) {
    throw ConfigError("grating frequency must lie in (0, 0.5) cycles/pixel");
  }
}

CompositeChartSpec default_composite_spec(std::uint64_t seed) {
  using enum TileKind;
  CompositeChartSpec s;
  s.seed = seed;
  s.tiles = {Uniform,          DeadLeavesCoarse,  SinusoidalGrating, Uniform,
             DeadLeavesCoarse, DeadLeavesFine,    DeadLeavesFine,    LowContrastDetail,
             ResolutionLines,  DeadLeavesFine,    DeadLeavesFine,    Uniform,
             Uniform,          LowContrastDetail, SinusoidalGrating, DeadLeavesCoarse};
  return s;
}

namespace {

ImageF dead_leaves_tile(int size, double r_min, double r_max, double lo, double hi,
                        std::uint64_t seed) {
  DeadLeavesParams p;
  p.size = size;
  p.r_min = r_min;
  p.r_max = std::min(r_max, size / 2.0 - 1.0);
  p.seed = seed;
  p.value_lo = lo;
  p.value_hi = hi;
  return gen_dead_leaves(p);
}

ImageF render_tile(TileInfo& info, const CompositeChartSpec& spec) {
  const int n = info.rect.w;
  switch (info.kind) {
    case TileKind::Uniform: {
      Rng rng(info.seed);
      info.parameter = rng.uniform(0.2, 0.8);
      return ImageF(n, n, 1, info.parameter);
    }
    case TileKind::DeadLeavesFine:
      return dead_leaves_tile(n, 1.0, 12.0, 0.15, 0.85, info.seed);
    case TileKind::DeadLeavesCoarse:
      return dead_leaves_tile(n, 6.0, 48.0, 0.15, 0.85, info.seed);
    case TileKind::LowContrastDetail:
      return dead_leaves_tile(n, 1.0, 6.0, 0.42, 0.58, info.seed);
    case TileKind::SinusoidalGrating: {
      info.parameter = spec.grating_frequency;
      ImageF t(n, n, 1);
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          t.at(y, x) = 0.5 + 0.35 * std::sin(2.0 * std::numbers::pi * spec.grating_frequency * x);
        }
      }
      return t;
    }
    case TileKind::ResolutionLines: {
      // Horizontal bands of square-wave bars at increasing frequency.
      static constexpr double kFreqs[] = {0.04, 0.08, 0.12, 0.16, 0.2, 0.25};
      constexpr int kBands = 6;
      ImageF t(n, n, 1);
      for (int y = 0; y < n; ++y) {
        const double f = kFreqs[std::min(kBands - 1, y * kBands / n)];
        for (int x = 0; x < n; ++x) {
          const double phase = f * (x + 0.5);
          t.at(y, x) = (phase - std::floor(phase)) < 0.5 ? 0.85 : 0.15;
        }
      }
      return t;
    }
  }
  throw ConfigError("unhandled tile kind");
}

}  // namespace

std::vector<Rect> CompositeChart::rects_of(TileKind kind) const {
  std::vector<Rect> out;
  for (const auto& t : tiles) {
    if (t.kind == kind) out.push_back(t.rect);
  }
  return out;
}

std::vector<Rect> CompositeChart::fine_detail_rects() const {
  std::vector<Rect> out;
  for (const auto& t : tiles) {
    if (is_fine_detail(t.kind)) out.push_back(t.rect);
  }
  return out;
}

std::vector<Rect> CompositeChart::uniform_rects() const { return rects_of(TileKind::Uniform); }

CompositeChart gen_composite(const CompositeChartSpec& spec) {
  spec.validate();
  CompositeChart chart;
  chart.seed = spec.seed;
  chart.image = ImageF(spec.size, spec.size, 1, 0.5);
  // Tile edges come from an even split of the canvas so the tiles partition it.
  auto edge = [&](int i) { return i * spec.size / spec.grid; };
  for (int ty = 0; ty < spec.grid; ++ty) {
    for (int tx = 0; tx < spec.grid; ++tx) {
      const int idx = ty * spec.grid + tx;
      TileInfo info;
      info.kind = spec.tiles[idx];
      info.seed = derive_seed(spec.seed, "tile/" + std::to_string(idx));
      const int x0 = edge(tx);
      const int y0 = edge(ty);
      const int side = std::max(edge(tx + 1) - x0, edge(ty + 1) - y0);
      info.rect = Rect{x0, y0, edge(tx + 1) - x0, edge(ty + 1) - y0};
      TileInfo square = info;
      square.rect.w = square.rect.h = side;
      const ImageF tile = render_tile(square, spec);
      info.parameter = square.parameter;
      for (int y = 0; y < info.rect.h; ++y) {
        for (int x = 0; x < info.rect.w; ++x) chart.image.at(y0 + y, x0 + x) = tile.at(y, x);
      }
      chart.tiles.push_back(info);
    }
  }
  return chart;
}

double high_frequency_energy_fraction(const ImageF& img) {
  const auto psd = spectral::psd_radial(img);
  double total = 0.0;
  double high = 0.0;
  for (std::size_t i = 0; i < psd.bin_count(); ++i) {
    // Each annulus holds ~2*pi*k coefficients; weight the mean accordingly.
    const double e = psd.values[i] * psd.freqs[i];
    total += e;
    if (psd.freqs[i] > 0.1) high += e;
  }
  return total > 0.0 ? high / total : 0.0;
}

DeadLeavesParams dead_leaves_from_json(const json& j) {
  require_known_keys(j, {"type", "size", "r_min", "r_max", "radius_exponent", "gray", "seed"}, "dead-leaves spec");
  DeadLeavesParams p;
  try {
    p.size = j.value("size", p.size);
    p.r_min = j.value("r_min", p.r_min);
    // Without an explicit r_max the largest disk scales with small canvases.
    p.r_max = j.value("r_max", std::min(p.r_max, p.size / 4.0));
    p.radius_exponent = j.value("radius_exponent", p.radius_exponent);
    p.gray = j.value("gray", p.gray);
    p.seed = j.value("seed", p.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dead-leaves spec: ") + e.what());
  }
  p.validate();
  return p;
}

CompositeChartSpec composite_from_json(const json& j) {
  require_known_keys(j, {"type", "size", "grid", "tiles", "seed", "grating_frequency"}, "composite spec");
  CompositeChartSpec s = default_composite_spec(1);
  try {
    s.size = j.value("size", s.size);
    s.grid = j.value("grid", s.grid);
    s.seed = j.value("seed", s.seed);
    s.grating_frequency = j.value("grating_frequency", s.grating_frequency);
    if (j.contains("tiles")) {
      s.tiles.clear();
      for (const auto& t : j.at("tiles")) s.tiles.push_back(tile_kind_from_string(t.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("composite spec: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const DeadLeavesParams& p) {
  return json{{"type", "dead-leaves"},     {"size", p.size},
              {"r_min", p.r_min},          {"r_max", p.r_max},
              {"radius_exponent", p.radius_exponent},
              {"gray", p.gray},            {"seed", p.seed}};
}

json to_json(const CompositeChartSpec& s) {
  json tiles = json::array();
  for (TileKind k : s.tiles) tiles.push_back(to_string(k));
  return json{{"type", "composite"}, {"size", s.size},   {"grid", s.grid},
              {"tiles", tiles},      {"seed", s.seed}, {"grating_frequency", s.grating_frequency}};
}

json sidecar_json(const CompositeChart& chart, const CompositeChartSpec& spec) {
  json tiles = json::array();
  for (const auto& t : chart.tiles) {
    tiles.push_back(json{{"kind", to_string(t.kind)},
                         {"x", t.rect.x},
                         {"y", t.rect.y},
                         {"w", t.rect.w},
                         {"h", t.rect.h},
                         {"seed", t.seed},
                         {"parameter", t.parameter},
                         {"fine_detail", is_fine_detail(t.kind)}});
  }
  return json{{"spec", to_json(spec)}, {"seed", chart.seed}, {"tiles", tiles}};
}

CompositeChart chart_from_sidecar(const json& j, ImageF image) {
  CompositeChart c;
  c.image = std::move(image);
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tiles")) {
      TileInfo info;
      info.kind = tile_kind_from_string(t.at("kind").get<std::string>());
      info.rect = Rect{t.at("x").get<int>(), t.at("y").get<int>(), t.at("w").get<int>(),
                       t.at("h").get<int>()};
      info.seed = t.at("seed").get<std::uint64_t>();
      info.parameter = t.at("parameter").get<double>();
      c.tiles.push_back(info);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("chart sidecar: ") + e.what());
  }
  return c;
}

Chart generate_chart(const json& spec) {
  const std::string type = spec.value("type", std::string("dead-leaves"));
  Chart out;
  out.type = type;
  if (type == "dead-leaves") {
    const auto p = dead_leaves_from_json(spec);
    out.image = gen_dead_leaves(p);
    out.sidecar = json{{"spec", to_json(p)}, {"seed", p.seed}, {"tiles", json::array()}};
  } else if (type == "composite") {
    const auto s = composite_from_json(spec);
    CompositeChart c = gen_composite(s);
    out.image = c.image;
    out.sidecar = sidecar_json(c, s);
    out.composite = std::move(c);
  } else {
    throw ConfigError("unknown chart type '" + type + "'");
  }
  return out;
}

}  // namespace dr2s::chartgen
