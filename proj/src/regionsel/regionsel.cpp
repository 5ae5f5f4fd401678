#include "dr2s/regionsel/regionsel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dr2s/core/error.hpp"
#include "dr2s/core/rng.hpp"
#include "dr2s/evalmetrics/metrics.hpp"
#include "dr2s/simd/kernels.hpp"

namespace dr2s::regionsel {

using nlohmann::json;

ScoreMap score_map(const regressor::RegressorNet& net, const ImageF& img, regressor::Precision precision) {
  const auto fwd = regressor::forward(net, img, precision);
  const auto& psi = fwd.psi;
  ScoreMap out;
  out.low = ImageF(psi.width, psi.height);
  for (int y = 0; y < psi.height; ++y) {
    for (int x = 0; x < psi.width; ++x) out.low.at(y, x) = regressor::head_score(net, psi.pixel(y, x));
  }
  out.full = resize_bicubic(out.low, img.width(), img.height());
  for (double& v : out.full.data()) v = std::clamp(v, 1e-9, 1.0 - 1e-9);
  return out;
}

Rect centre_region(int width, int height, int size) {
  return Rect{(width - size) / 2, (height - size) / 2, size, size};
}

std::pair<Rect, double> best_window(const ImageF& m, int size) {
  const int w = m.width();
  const int h = m.height();
  if (size < 1 || size > w || size > h) {
    throw ConfigError("region size " + std::to_string(size) + " does not fit a " + std::to_string(w) + "x" +
                      std::to_string(h) + " map");
  }
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto at = [&](int y, int x) -> double& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += m.at(y, x);
      at(y + 1, x + 1) = at(y, x + 1) + row;
    }
  }
  const double area = static_cast<double>(size) * size;
  Rect best{0, 0, size, size};
  double best_mean = -1.0;
  for (int y = 0; y + size <= h; ++y) {
    for (int x = 0; x + size <= w; ++x) {
      const double s = at(y + size, x + size) - at(y, x + size) - at(y + size, x) + at(y, x);
      const double mean = s / area;
      if (mean > best_mean) {
        best_mean = mean;
        best = Rect{x, y, size, size};
      }
    }
  }
  return {best, best_mean};
}

ConfidenceMap confidence_map(std::span<const ImageF> maps, int region_size) {
  if (maps.size() < 2) throw DataError("confidence map needs at least 2 score maps");
  const int w = maps[0].width();
  const int h = maps[0].height();
  for (const auto& m : maps) {
    if (m.width() != w || m.height() != h || m.channels() != 1) {
      throw SizeError("score maps differ in size");
    }
  }
  // Deviations from the first map keep identical maps exactly at zero.
  const auto& k = simd::active_kernels().get<double>();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const double* ref = maps[0].data().data();
  std::vector<double> dsum(n, 0.0);
  ConfidenceMap out;
  out.m = ImageF(w, h);
  for (const auto& m : maps.subspan(1)) {
    const double* s = m.data().data();
    for (std::size_t i = 0; i < n; ++i) dsum[i] += s[i] - ref[i];
    k.sqdiff_acc(s, ref, out.m.data().data(), n);
  }
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = dsum[i] * inv;
    out.m.data()[i] = std::max(out.m.data()[i] * inv - mu * mu, 0.0);
  }
  out.n_images = static_cast<int>(maps.size());

  const auto [rect, best] = best_window(out.m, region_size);
  out.best_mean = best;
  out.selected = rect;
  if (best < 1e-10) {
    out.fallback = true;
    out.selected = centre_region(w, h, region_size);
    out.warning = "confidence map is degenerate (best windowed mean " + std::to_string(best) +
                  "), using the centre region";
  }
  return out;
}

ConfidenceMap confidence_map(std::span<const ScoreMap> maps, int region_size) {
  std::vector<ImageF> full;
  full.reserve(maps.size());
  for (const auto& m : maps) full.push_back(m.full);
  return confidence_map(std::span<const ImageF>(full), region_size);
}

double predict_device(const regressor::RegressorNet& net, const ImageF& capture, const Rect& region,
                      int n_patches, std::uint64_t seed, int patch_size, regressor::Precision precision) {
  if (!capture.bounds().contains(region)) throw BoundsError("prediction region outside the capture");
  if (n_patches < 1) throw ConfigError("need at least one prediction patch");
  Rng rng(seed);
  double sum = 0.0;
  for (const Rect& r : sample_patch_rects(region, patch_size, n_patches, rng)) {
    sum += regressor::forward(net, crop(capture, r), precision).score;
  }
  return sum / n_patches;
}

std::pair<ConfidenceMap, ConfidenceMap> split_confidence_maps(std::span<const ImageF> maps,
                                                              std::span<const double> labels,
                                                              std::optional<double> threshold,
                                                              int region_size) {
  if (maps.size() != labels.size()) throw DataError("maps and labels differ in length");
  if (labels.empty()) throw DataError("no maps to split");
  double t = 0.0;
  if (threshold) {
    t = *threshold;
  } else {
    std::vector<double> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    t = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  std::vector<ImageF> low;
  std::vector<ImageF> high;
  for (std::size_t i = 0; i < maps.size(); ++i) (labels[i] < t ? low : high).push_back(maps[i]);
  if (low.size() < 2 || high.size() < 2) {
    throw DataError("label threshold " + std::to_string(t) + " leaves " + std::to_string(low.size()) +
                    " low and " + std::to_string(high.size()) + " high maps; each half needs 2");
  }
  return {confidence_map(std::span<const ImageF>(low), region_size),
          confidence_map(std::span<const ImageF>(high), region_size)};
}

ImageF equalize_for_display(const ImageF& m) {
  std::vector<double> sorted(m.data().begin(), m.data().end());
  std::sort(sorted.begin(), sorted.end());
  ImageF out(m.width(), m.height());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), m.data()[i]);
    out.data()[i] = static_cast<double>(hi - sorted.begin()) / n;
  }
  return out;
}

std::uint64_t prediction_seed(std::uint64_t master, const std::string& method, const std::string& device_id) {
  return derive_seed(master, "predict/" + method + "/" + device_id);
}

namespace {

json score_block(const std::vector<double>& pred, std::span<const devsim::LabeledCapture> test) {
  std::vector<double> labels;
  for (const auto& c : test) labels.push_back(c.label);
  json j{{"predictions", pred}};
  try {
    j["srocc"] = evalmetrics::srocc(pred, labels);
  } catch (const Error&) {
    j["srocc"] = nullptr;
  }
  j["krocc"] = pred.size() >= 2 ? json(evalmetrics::krocc(pred, labels)) : json(nullptr);
  return j;
}

}  // namespace

Dr2sResult run_dr2s(std::span<const devsim::LabeledCapture> train, std::span<const devsim::LabeledCapture> test,
                    const Dr2sConfig& cfg, const regressor::TrainResult* stage1) {
  if (train.size() < 2) throw DataError("DR2S needs at least 2 training captures");
  std::set<std::string> train_ids;
  for (const auto& c : train) {
    if (!train_ids.insert(c.device.device_id).second) {
      throw DataError("duplicate training device '" + c.device.device_id + "'");
    }
  }
  for (const auto& c : test) {
    if (train_ids.count(c.device.device_id)) {
      throw DataError("device '" + c.device.device_id + "' is in both the training and the test set");
    }
  }
  const Rect whole = train.front().image.bounds();
  for (const auto& c : train) {
    if (c.image.width() != whole.w || c.image.height() != whole.h) {
      throw SizeError("training captures must share one registered frame");
    }
  }

  Dr2sResult r;
  r.stage1 = stage1 ? *stage1
                    : tagged("stage 1", [&] { return regressor::train(train, std::span(&whole, 1), cfg.train); });

  // Stage 2 sees training captures only.
  r.confidence = tagged("stage 2", [&] {
    std::vector<ImageF> maps;
    maps.reserve(train.size());
    for (const auto& c : train) maps.push_back(score_map(r.stage1.net, c.image, cfg.train.precision).full);
    return confidence_map(std::span<const ImageF>(maps), cfg.region_size);
  });

  r.final = tagged("stage 3",
                   [&] { return regressor::train(train, std::span(&r.confidence.selected, 1), cfg.train); });

  for (const auto& c : test) {
    r.stage1_predictions.push_back(predict_device(r.stage1.net, c.image, c.image.bounds(), cfg.predict_patches,
                                                  prediction_seed(cfg.seed, "stage1", c.device.device_id),
                                                  cfg.train.patch_size, cfg.train.precision));
    r.final_predictions.push_back(predict_device(r.final.net, c.image, r.confidence.selected, cfg.predict_patches,
                                                 prediction_seed(cfg.seed, "final", c.device.device_id),
                                                 cfg.train.patch_size, cfg.train.precision));
  }

  const Rect& s = r.confidence.selected;
  std::vector<std::string> test_ids;
  for (const auto& c : test) test_ids.push_back(c.device.device_id);
  r.report = json{
      {"train_ids", std::vector<std::string>(train_ids.begin(), train_ids.end())},
      {"test_ids", test_ids},
      {"stage1",
       {{"final_loss", r.stage1.loss_trace.empty() ? json(nullptr) : json(r.stage1.loss_trace.back())},
        {"loss_trace", r.stage1.loss_trace}}},
      {"stage2",
       {{"selected", {{"x", s.x}, {"y", s.y}, {"w", s.w}, {"h", s.h}}},
        {"best_mean", r.confidence.best_mean},
        {"n_images", r.confidence.n_images},
        {"fallback", r.confidence.fallback},
        {"warning", r.confidence.warning}}},
      {"stage3", {{"final_loss", r.final.loss_trace.back()}, {"loss_trace", r.final.loss_trace}}},
  };
  if (!test.empty()) {
    r.report["test"] = {{"stage1", score_block(r.stage1_predictions, test)},
                        {"final", score_block(r.final_predictions, test)}};
  }
  return r;
}

}  // namespace dr2s::regionsel
