#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/core/image.hpp"

namespace dr2s::devsim {

/// One simulated camera at one lighting condition.
struct DeviceProfile {
  std::string device_id;
  int brand_id = 0;
  double blur_sigma = 0.0;        // px, >= 0
  double noise_sigma = 0.0;       // intensity units, >= 0
  double denoise_strength = 0.0;  // [0, 1]
  double sharpen_amount = 0.0;    // [0, 1]
  double exposure_ev = 0.0;       // stops, [-1, 1]
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledCapture {
  ImageF image;
  double label = 0.0;
  DeviceProfile device;
  std::string chart_id;
};

/// exposure gain 2^ev -> Gaussian blur -> additive Gaussian noise ->
/// denoise blend (1-s) in + s bilateral(in) -> unsharp mask
/// in + amount (in - blur_1px(in)) -> clamp to [0, 1].
ImageF simulate(const ImageF& chart, const DeviceProfile& d);

/// Oracle quality label replacing human annotation:
///   clamp( sum HP(captured) HP(chart) / sum HP(chart)^2, 0, 1 )
/// with HP the 3x3 Laplacian, summed over every pixel of the windows.
/// Throws BoundsError if a window is not at least one pixel inside the image.
double oracle_label(const ImageF& chart, const ImageF& captured, std::span<const Rect> windows);
double oracle_label(const ImageF& chart, const ImageF& captured, const Rect& window);
/// Whole image minus a one pixel border.
double oracle_label(const ImageF& chart, const ImageF& captured);

/// Parameter ranges for brand recipes; devices jitter around their brand.
struct FleetOptions {
  double blur_min = 0.4, blur_max = 2.6;
  double noise_min = 0.005, noise_max = 0.035;
  double denoise_min = 0.0, denoise_max = 0.9;
  double sharpen_min = 0.0, sharpen_max = 0.8;
  double exposure_min = -0.3, exposure_max = 0.3;
  double min_label_spread = 0.5;
  int max_redraws = 100;
};

/// Devices are assigned to brands round-robin (device i -> brand i mod
/// n_brands), so every brand is populated. The fleet is redrawn until the
/// oracle label spread over an internal 256 px dead-leaves reference chart
/// reaches `min_label_spread`.
std::vector<DeviceProfile> gen_fleet(int n_devices, int n_brands, std::uint64_t seed,
                                     const FleetOptions& opts = {});

/// The reference chart used by gen_fleet's spread check.
ImageF fleet_reference_chart(std::uint64_t seed);

nlohmann::json to_json(const DeviceProfile& d);
DeviceProfile device_from_json(const nlohmann::json& j);
nlohmann::json fleet_to_json(std::span<const DeviceProfile> fleet, std::uint64_t seed);
std::vector<DeviceProfile> fleet_from_json(const nlohmann::json& j);

}  // namespace dr2s::devsim
