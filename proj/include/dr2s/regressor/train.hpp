#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/devsim/device.hpp"
#include "dr2s/regressor/net.hpp"

namespace dr2s::regressor {

struct TrainConfig {
  double lr = 3e-3;
  double lr_decay = 0.1;
  int decay_every = 40;  // epochs
  int warmup_steps = 100;  // linear ramp over the first optimizer steps, 0 = off
  int epochs = 120;
  int batch_size = 32;
  double huber_delta = 0.1;
  int patch_size = 64;
  int patches_per_image = 16;
  double aug_noise_max = 0.01;    // per-patch noise sigma ~ U[0, max]
  double aug_exposure_ev = 0.1;   // per-patch gain 2^U[-ev, ev]
  int feature_channels = 32;
  Precision precision = Precision::Float;
  std::uint64_t seed = 1;

  void validate() const;
  double lr_at(int epoch) const;
  /// lr_at(epoch) scaled by the warm-up ramp at optimizer step `step` (0-based).
  double lr_at(int epoch, long step) const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);
  long steps() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

struct TrainResult {
  RegressorNet net;
  std::vector<double> loss_trace;  // mean Huber loss per epoch
};

/// Called after each epoch with (epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// Trains from he_init(seed-derived) on patches drawn each epoch from
/// regions[i] of data[i].image (a single region applies to every image).
/// Throws DataError on empty data, ConfigError on bad regions or config and
/// NumericError when the loss stops being finite.
TrainResult train(std::span<const devsim::LabeledCapture> data, std::span<const Rect> regions,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Seed the initial weights are drawn from; stage-3 retraining reuses it.
std::uint64_t init_seed(const TrainConfig& cfg);

}  // namespace dr2s::regressor
