#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/chartgen/charts.hpp"
#include "dr2s/devsim/device.hpp"
#include "dr2s/evalmetrics/metrics.hpp"
#include "dr2s/regionsel/regionsel.hpp"
#include "dr2s/registration/registration.hpp"

namespace dr2s::app {

/// One end-to-end run: chart, simulated fleet, brand-disjoint folds and the
/// three-way method comparison. Every seed below the master seed is derived
/// from it by component name.
struct ExperimentConfig {
  nlohmann::json chart = {{"type", "composite"}};
  int n_devices = 30;
  int n_brands = 6;
  devsim::FleetOptions fleet;
  int folds = 5;
  int random_regions = 5;
  /// Any of random_patch, random_region, selected_region.
  std::vector<std::string> methods{"random_patch", "random_region", "selected_region"};
  regionsel::Dr2sConfig dr2s;
  /// Corner displacement of a random homography applied to each capture;
  /// 0 keeps captures aligned by construction. When positive, captures are
  /// registered back onto the chart before use.
  double capture_warp_px = 0.0;
  std::uint64_t seed = 1;
  /// Worker threads across folds; 0 uses the available cores.
  int threads = 0;

  void validate() const;
  bool has_method(const std::string& m) const;
};

/// Keys: chart, n_devices, n_brands, fleet {...}, folds, random_regions,
/// methods, region_size, predict_patches, train {...}, capture_warp_px, seed,
/// threads. Unknown keys are a ConfigError naming the key.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

struct FleetData {
  chartgen::Chart chart;
  std::vector<Rect> label_windows;
  std::vector<devsim::LabeledCapture> captures;
  std::vector<std::optional<registration::RegistrationResult>> registrations;
};

/// Chart, devices, captures and oracle labels. Labels are measured over the
/// fine dead-leaves tiles of a composite chart, otherwise the whole chart.
FleetData build_fleet(const ExperimentConfig& cfg);

struct FoldOutcome {
  int fold = 0;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  regionsel::Dr2sResult dr2s;  // only stage 1 is filled when selected_region is off
  std::vector<std::vector<double>> random_region_predictions;  // [region][test device]
};

struct ExperimentResult {
  evalmetrics::FoldPlan plan;
  std::vector<Rect> random_regions;
  std::vector<FoldOutcome> folds;
  /// Deterministic metrics report: no timestamps, no paths.
  nlohmann::json metrics;
};

using LogFn = std::function<void(const std::string&)>;
/// Supplies a stage-1 result for a fold (resume) or nullopt to train it.
using Stage1Source = std::function<std::optional<regressor::TrainResult>(int fold)>;

/// Random regions of `size` inside a `w` x `h` frame, deterministic in seed.
std::vector<Rect> draw_random_regions(int w, int h, int size, int count, std::uint64_t seed);

/// Runs every fold (in parallel across `threads`), then scores the configured
/// methods on pooled and per-fold predictions. With `map_only` set, stops
/// after stage 2 and skips the method table.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const FleetData& fleet, const LogFn& log = {},
                                const Stage1Source& stage1 = {}, bool map_only = false);

/// Content hash of the config, 12 hex digits.
std::string run_id(const ExperimentConfig& cfg);

/// Mean of `m` over the union of the rectangles.
double mean_over(const ImageF& m, const std::vector<Rect>& rects);

}  // namespace dr2s::app
