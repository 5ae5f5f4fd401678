#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/core/image.hpp"

namespace dr2s::chartgen {

/// Occluding-disk texture with power-law radii. Toolkit defaults, not taken
/// from any published chart.
struct DeadLeavesParams {
  int size = 512;
  double r_min = 4.0;
  double r_max = 128.0;
  double radius_exponent = 3.0;
  bool gray = true;
  std::uint64_t seed = 1;
  /// Disk intensities are drawn uniformly from [value_lo, value_hi].
  double value_lo = 0.15;
  double value_hi = 0.85;

  void validate() const;
};

inline constexpr long kMaxDisks = 1'000'000;
inline constexpr double kBackgroundSentinel = -1.0;

/// Radius drawn from the density r^-exponent truncated to [r_min, r_max]
/// by inverse-CDF sampling.
double sample_radius(Rng& rng, double r_min, double r_max, double exponent);

/// Paints disks (newest on top) until no pixel keeps the background sentinel.
/// Disk centres are uniform over the canvas grown by r_max on every side so
/// that borders are covered at the same rate as the interior.
ImageF gen_dead_leaves(const DeadLeavesParams& p);

enum class TileKind {
  Uniform,
  DeadLeavesFine,
  DeadLeavesCoarse,
  SinusoidalGrating,
  ResolutionLines,
  LowContrastDetail,
};

std::string to_string(TileKind k);
TileKind tile_kind_from_string(const std::string& s);

/// Tiles that carry high-frequency texture.
bool is_fine_detail(TileKind k);

struct CompositeChartSpec {
  int size = 768;
  int grid = 4;
  /// Row-major, grid * grid entries.
  std::vector<TileKind> tiles;
  std::uint64_t seed = 1;
  double grating_frequency = 0.125;  // cycles/pixel, along x

  void validate() const;
};

/// 768 px, 4 x 4 tiles with a 2 x 2 block of fine dead-leaves tiles in the
/// centre, surrounded by uniform, coarse, grating, line and low-contrast tiles.
CompositeChartSpec default_composite_spec(std::uint64_t seed = 1);

struct TileInfo {
  Rect rect;
  TileKind kind = TileKind::Uniform;
  std::uint64_t seed = 0;
  /// Uniform tiles: the grey level. Gratings: frequency in cycles/pixel.
  double parameter = 0.0;
};

struct CompositeChart {
  ImageF image;
  std::vector<TileInfo> tiles;
  std::uint64_t seed = 0;

  std::vector<Rect> rects_of(TileKind kind) const;
  std::vector<Rect> fine_detail_rects() const;
  std::vector<Rect> uniform_rects() const;
};

CompositeChart gen_composite(const CompositeChartSpec& spec);

/// Fraction of non-DC spectral energy (psd_radial) above 0.1 cycles/pixel.
double high_frequency_energy_fraction(const ImageF& img);

// Human-readable configs. Dead leaves: {"type": "dead-leaves", "size",
// "r_min", "r_max", "radius_exponent", "gray", "seed"}. Composite:
// {"type": "composite", "size", "grid", "tiles": [kind names], "seed",
// "grating_frequency"}; omitted keys fall back to the defaults above, except
// that r_max defaults to at most size/4.
DeadLeavesParams dead_leaves_from_json(const nlohmann::json& j);
CompositeChartSpec composite_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeadLeavesParams& p);
nlohmann::json to_json(const CompositeChartSpec& s);

/// Sidecar written next to a composite chart PNG.
nlohmann::json sidecar_json(const CompositeChart& chart, const CompositeChartSpec& spec);
CompositeChart chart_from_sidecar(const nlohmann::json& j, ImageF image);

/// A chart generated from either config type.
struct Chart {
  std::string type;
  ImageF image;
  std::optional<CompositeChart> composite;
  nlohmann::json sidecar;
};

Chart generate_chart(const nlohmann::json& spec);

}  // namespace dr2s::chartgen
