#include "dr2s/devsim/device.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dr2s/chartgen/charts.hpp"
#include "dr2s/core/error.hpp"
#include "dr2s/core/json_keys.hpp"
#include "dr2s/devsim/filters.hpp"

namespace dr2s::devsim {

using nlohmann::json;

void DeviceProfile::validate() const {
  auto fail = [&](const char* what) {
    throw ConfigError("device '" + device_id + "': " + what);
  };
  if (!(blur_sigma >= 0.0)) fail("blur_sigma must be >= 0");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(denoise_strength >= 0.0 && denoise_strength <= 1.0)) fail("denoise_strength outside [0,1]");
  if (!(sharpen_amount >= 0.0 && sharpen_amount <= 1.0)) fail("sharpen_amount outside [0,1]");
  if (!(exposure_ev >= -1.0 && exposure_ev <= 1.0)) fail("exposure_ev outside [-1,1]");
}

ImageF simulate(const ImageF& chart, const DeviceProfile& d) {
  d.validate();
  ImageF img = chart;
  if (d.exposure_ev != 0.0) {
    const double gain = std::exp2(d.exposure_ev);
    for (double& v : img.data()) v *= gain;
  }
  img = gaussian_blur(img, d.blur_sigma);
  if (d.noise_sigma > 0.0) {
    Rng rng(d.seed);
    for (double& v : img.data()) v += d.noise_sigma * rng.normal();
  }
  if (d.denoise_strength > 0.0) img = denoise(img, d.denoise_strength);
  if (d.sharpen_amount > 0.0) img = unsharp(img, d.sharpen_amount);
  return clamp01(std::move(img));
}

double oracle_label(const ImageF& chart, const ImageF& captured, std::span<const Rect> windows) {
  if (chart.width() != captured.width() || chart.height() != captured.height()) {
    throw SizeError("oracle label needs a capture registered to the chart");
  }
  const Rect inner{1, 1, chart.width() - 2, chart.height() - 2};
  double cross = 0.0;
  double energy = 0.0;
  for (const Rect& w : windows) {
    if (w.w < 1 || w.h < 1 || !inner.contains(w)) {
      throw BoundsError("oracle label window outside the chart interior");
    }
    for (int y = w.y; y < w.y + w.h; ++y) {
      for (int x = w.x; x < w.x + w.w; ++x) {
        const double r = laplacian_at(chart, y, x);
        cross += laplacian_at(captured, y, x) * r;
        energy += r * r;
      }
    }
  }
  if (!(energy > 0.0)) throw NumericError("oracle label window has no high-frequency content");
  return std::clamp(cross / energy, 0.0, 1.0);
}

double oracle_label(const ImageF& chart, const ImageF& captured, const Rect& window) {
  return oracle_label(chart, captured, std::span<const Rect>(&window, 1));
}

double oracle_label(const ImageF& chart, const ImageF& captured) {
  return oracle_label(chart, captured, Rect{1, 1, chart.width() - 2, chart.height() - 2});
}

ImageF fleet_reference_chart(std::uint64_t seed) {
  chartgen::DeadLeavesParams p;
  p.size = 256;
  p.r_min = 1.0;
  p.r_max = 32.0;
  p.seed = derive_seed(seed, "fleet/reference-chart");
  return chartgen::gen_dead_leaves(p);
}

namespace {

std::string device_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "dev%03d", i);
  return buf;
}

std::vector<DeviceProfile> draw_fleet(int n_devices, int n_brands, std::uint64_t seed,
                                      const FleetOptions& o) {
  Rng rng(seed);
  struct Recipe {
    double blur, noise, denoise, sharpen, exposure;
  };
  std::vector<Recipe> brands;
  for (int b = 0; b < n_brands; ++b) {
    brands.push_back(Recipe{rng.uniform(o.blur_min, o.blur_max),
                            rng.uniform(o.noise_min, o.noise_max),
                            rng.uniform(o.denoise_min, o.denoise_max),
                            rng.uniform(o.sharpen_min, o.sharpen_max),
                            rng.uniform(o.exposure_min, o.exposure_max)});
  }
  std::vector<DeviceProfile> fleet;
  for (int i = 0; i < n_devices; ++i) {
    const Recipe& r = brands[static_cast<std::size_t>(i % n_brands)];
    DeviceProfile d;
    d.device_id = device_name(i);
    d.brand_id = i % n_brands;
    d.blur_sigma = std::clamp(r.blur * rng.uniform(0.75, 1.25), o.blur_min, o.blur_max);
    d.noise_sigma = std::clamp(r.noise * rng.uniform(0.75, 1.25), o.noise_min, o.noise_max);
    d.denoise_strength = std::clamp(r.denoise + rng.uniform(-0.1, 0.1), o.denoise_min, o.denoise_max);
    d.sharpen_amount = std::clamp(r.sharpen + rng.uniform(-0.1, 0.1), o.sharpen_min, o.sharpen_max);
    d.exposure_ev = std::clamp(r.exposure + rng.uniform(-0.1, 0.1), o.exposure_min, o.exposure_max);
    d.seed = derive_seed(seed, "device/" + d.device_id);
    fleet.push_back(d);
  }
  return fleet;
}

}  // namespace

std::vector<DeviceProfile> gen_fleet(int n_devices, int n_brands, std::uint64_t seed,
                                     const FleetOptions& opts) {
  if (n_devices < 1 || n_brands < 1) throw ConfigError("fleet needs at least one device and brand");
  if (n_brands > n_devices) throw ConfigError("n_brands must not exceed n_devices");
  if (n_devices == 1) return draw_fleet(1, 1, seed, opts);
  const ImageF chart = fleet_reference_chart(seed);
  for (int attempt = 0; attempt < opts.max_redraws; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, "fleet/redraw/" + std::to_string(attempt));
    auto fleet = draw_fleet(n_devices, n_brands, s, opts);
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& d : fleet) {
      const double l = oracle_label(chart, simulate(chart, d));
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
    if (hi - lo >= opts.min_label_spread) return fleet;
  }
  throw DataError("could not draw a fleet with label spread >= " +
                  std::to_string(opts.min_label_spread) + " after " +
                  std::to_string(opts.max_redraws) + " redraws");
}

json to_json(const DeviceProfile& d) {
  return json{{"device_id", d.device_id},
              {"brand_id", d.brand_id},
              {"blur_sigma", d.blur_sigma},
              {"noise_sigma", d.noise_sigma},
              {"denoise_strength", d.denoise_strength},
              {"sharpen_amount", d.sharpen_amount},
              {"exposure_ev", d.exposure_ev},
              {"seed", d.seed}};
}

DeviceProfile device_from_json(const json& j) {
  // label, fold and registration are report fields carried alongside a profile.
  require_known_keys(j,
                     {"device_id", "brand_id", "blur_sigma", "noise_sigma", "denoise_strength", "sharpen_amount",
                      "exposure_ev", "seed", "label", "fold", "registration"},
                     "device profile");
  DeviceProfile d;
  try {
    d.device_id = j.value("device_id", std::string("dev"));
    d.brand_id = j.value("brand_id", 0);
    d.blur_sigma = j.value("blur_sigma", 0.0);
    d.noise_sigma = j.value("noise_sigma", 0.0);
    d.denoise_strength = j.value("denoise_strength", 0.0);
    d.sharpen_amount = j.value("sharpen_amount", 0.0);
    d.exposure_ev = j.value("exposure_ev", 0.0);
    d.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("device profile: ") + e.what());
  }
  d.validate();
  return d;
}

json fleet_to_json(std::span<const DeviceProfile> fleet, std::uint64_t seed) {
  json devices = json::array();
  int n_brands = 0;
  for (const auto& d : fleet) {
    devices.push_back(to_json(d));
    n_brands = std::max(n_brands, d.brand_id + 1);
  }
  return json{{"seed", seed},
              {"n_devices", fleet.size()},
              {"n_brands", n_brands},
              {"devices", devices}};
}

std::vector<DeviceProfile> fleet_from_json(const json& j) {
  if (!j.contains("devices") || !j.at("devices").is_array()) {
    throw ConfigError("fleet JSON lacks a 'devices' array");
  }
  std::vector<DeviceProfile> out;
  for (const auto& d : j.at("devices")) out.push_back(device_from_json(d));
  return out;
}

}  // namespace dr2s::devsim
