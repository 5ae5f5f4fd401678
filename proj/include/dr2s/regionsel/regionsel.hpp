#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/core/image.hpp"
#include "dr2s/devsim/device.hpp"
#include "dr2s/regressor/net.hpp"
#include "dr2s/regressor/train.hpp"

namespace dr2s::regionsel {

struct ScoreMap {
  ImageF low;   // per-location sigmoid scores at feature resolution
  ImageF full;  // bicubic-resized to the input size, clamped into (0, 1)
};

/// Whole-image forward; each feature location goes through the head on its
/// own. Input must be at least 32 x 32.
ScoreMap score_map(const regressor::RegressorNet& net, const ImageF& img,
                   regressor::Precision precision = regressor::Precision::Float);

struct ConfidenceMap {
  ImageF m;  // population variance across maps, per pixel
  Rect selected;
  double best_mean = 0.0;  // windowed mean of m over `selected`
  int n_images = 0;
  bool fallback = false;   // degenerate map, centre region used
  std::string warning;
};

/// Windowed means of `m` over every fully contained size x size window via an
/// integral image; returns the best window (smallest (y, x) on ties) and its
/// mean. ConfigError when the window does not fit.
std::pair<Rect, double> best_window(const ImageF& m, int size);

/// Centred size x size window.
Rect centre_region(int width, int height, int size);

/// Needs >= 2 maps of one size (DataError otherwise). Falls back to the
/// centre window when the best windowed mean is below 1e-10.
ConfidenceMap confidence_map(std::span<const ImageF> maps, int region_size);
ConfidenceMap confidence_map(std::span<const ScoreMap> maps, int region_size);

/// Mean forward score over `n_patches` seeded random patch_size patches from
/// `region`. BoundsError when the region leaves the capture.
double predict_device(const regressor::RegressorNet& net, const ImageF& capture, const Rect& region,
                      int n_patches, std::uint64_t seed, int patch_size = 64,
                      regressor::Precision precision = regressor::Precision::Float);

/// Confidence maps over devices with label < threshold and >= threshold
/// (median of labels by default). DataError when a half has fewer than 2.
std::pair<ConfidenceMap, ConfidenceMap> split_confidence_maps(std::span<const ImageF> maps,
                                                              std::span<const double> labels,
                                                              std::optional<double> threshold,
                                                              int region_size);

/// Display version of a confidence map: histogram-equalized into [0, 1].
ImageF equalize_for_display(const ImageF& m);

struct Dr2sConfig {
  regressor::TrainConfig train;
  int region_size = 384;
  int predict_patches = 64;
  std::uint64_t seed = 1;  // prediction patch draws
};

struct Dr2sResult {
  regressor::TrainResult stage1;
  ConfidenceMap confidence;
  regressor::TrainResult final;
  std::vector<double> stage1_predictions;  // test set, whole-chart patches
  std::vector<double> final_predictions;   // test set, selected region
  nlohmann::json report;
};

/// Stage 1 trains on whole-chart patches, stage 2 builds the confidence map
/// from the training captures only, stage 3 retrains from the same initial
/// weights on the selected region. Captures must be registered to a common
/// frame. DataError when a test device also appears in training. A given
/// `stage1` result is reused instead of training stage 1.
Dr2sResult run_dr2s(std::span<const devsim::LabeledCapture> train, std::span<const devsim::LabeledCapture> test,
                    const Dr2sConfig& cfg, const regressor::TrainResult* stage1 = nullptr);

/// Seed for the prediction patches of one device under one method.
std::uint64_t prediction_seed(std::uint64_t master, const std::string& method, const std::string& device_id);

}  // namespace dr2s::regionsel
