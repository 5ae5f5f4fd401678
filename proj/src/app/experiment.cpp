#include "dr2s/app/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "dr2s/core/error.hpp"
#include "dr2s/core/json_keys.hpp"
#include "dr2s/core/rng.hpp"
#include "dr2s/regressor/train.hpp"

namespace dr2s::app {

using nlohmann::json;

namespace {

const std::set<std::string> kTopKeys{"chart",         "n_devices",       "n_brands", "fleet",
                                     "folds",         "random_regions",  "methods",  "region_size",
                                     "predict_patches", "train",         "capture_warp_px", "seed",
                                     "threads"};
const std::vector<std::string> kMethods{"random_patch", "random_region", "selected_region"};

devsim::FleetOptions fleet_options_from_json(const json& j) {
  devsim::FleetOptions o;
  require_known_keys(j,
                     {"blur_min", "blur_max", "noise_min", "noise_max", "denoise_min", "denoise_max", "sharpen_min",
                      "sharpen_max", "exposure_min", "exposure_max", "min_label_spread", "max_redraws"},
                     "fleet");
  for (const auto& [k, v] : j.items()) {
    if (!(k == "max_redraws" ? v.is_number_integer() : v.is_number())) {
      throw ConfigError("bad value for 'fleet." + k + "': expected a number");
    }
    double* slot = nullptr;
    if (k == "blur_min") slot = &o.blur_min;
    else if (k == "blur_max") slot = &o.blur_max;
    else if (k == "noise_min") slot = &o.noise_min;
    else if (k == "noise_max") slot = &o.noise_max;
    else if (k == "denoise_min") slot = &o.denoise_min;
    else if (k == "denoise_max") slot = &o.denoise_max;
    else if (k == "sharpen_min") slot = &o.sharpen_min;
    else if (k == "sharpen_max") slot = &o.sharpen_max;
    else if (k == "exposure_min") slot = &o.exposure_min;
    else if (k == "exposure_max") slot = &o.exposure_max;
    else if (k == "min_label_spread") slot = &o.min_label_spread;
    if (slot) {
      *slot = v.get<double>();
    } else if (k == "max_redraws") {
      o.max_redraws = v.get<int>();
    } else {
      throw ConfigError("unknown key 'fleet." + k + "'");
    }
  }
  return o;
}

json to_json(const devsim::FleetOptions& o) {
  return {{"blur_min", o.blur_min},         {"blur_max", o.blur_max},
          {"noise_min", o.noise_min},       {"noise_max", o.noise_max},
          {"denoise_min", o.denoise_min},   {"denoise_max", o.denoise_max},
          {"sharpen_min", o.sharpen_min},   {"sharpen_max", o.sharpen_max},
          {"exposure_min", o.exposure_min}, {"exposure_max", o.exposure_max},
          {"min_label_spread", o.min_label_spread}, {"max_redraws", o.max_redraws}};
}

json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

template <typename T>
T get_key(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_devices < 4) throw ConfigError("n_devices must be at least 4");
  if (n_brands < 1 || n_brands > n_devices) throw ConfigError("n_brands must be in [1, n_devices]");
  if (folds < 2 || folds > n_brands) throw ConfigError("folds must be in [2, n_brands]");
  if (random_regions < 0) throw ConfigError("random_regions must be >= 0");
  if (dr2s.region_size < dr2s.train.patch_size) throw ConfigError("region_size must be >= the patch size");
  if (dr2s.predict_patches < 1) throw ConfigError("predict_patches must be >= 1");
  if (capture_warp_px < 0.0) throw ConfigError("capture_warp_px must be >= 0");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (methods.empty()) throw ConfigError("methods must name at least one method");
  for (const auto& m : methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
      throw ConfigError("unknown method '" + m + "'");
    }
  }
  if (has_method("random_region") && random_regions < 1) throw ConfigError("random_region needs random_regions >= 1");
  dr2s.train.validate();
}

bool ExperimentConfig::has_method(const std::string& m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kTopKeys.count(k)) throw ConfigError("unknown key '" + k + "'");
  }
  ExperimentConfig c;
  if (j.contains("chart")) c.chart = j.at("chart");
  if (j.contains("n_devices")) c.n_devices = get_key<int>(j, "n_devices");
  if (j.contains("n_brands")) c.n_brands = get_key<int>(j, "n_brands");
  if (j.contains("fleet")) c.fleet = fleet_options_from_json(j.at("fleet"));
  if (j.contains("folds")) c.folds = get_key<int>(j, "folds");
  if (j.contains("random_regions")) c.random_regions = get_key<int>(j, "random_regions");
  if (j.contains("methods")) c.methods = get_key<std::vector<std::string>>(j, "methods");
  if (j.contains("region_size")) c.dr2s.region_size = get_key<int>(j, "region_size");
  if (j.contains("predict_patches")) c.dr2s.predict_patches = get_key<int>(j, "predict_patches");
  if (j.contains("train")) c.dr2s.train = regressor::train_config_from_json(j.at("train"));
  if (j.contains("capture_warp_px")) c.capture_warp_px = get_key<double>(j, "capture_warp_px");
  if (j.contains("seed")) c.seed = get_key<std::uint64_t>(j, "seed");
  if (j.contains("threads")) c.threads = get_key<int>(j, "threads");
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  return {{"chart", c.chart},
          {"n_devices", c.n_devices},
          {"n_brands", c.n_brands},
          {"fleet", to_json(c.fleet)},
          {"folds", c.folds},
          {"random_regions", c.random_regions},
          {"methods", c.methods},
          {"region_size", c.dr2s.region_size},
          {"predict_patches", c.dr2s.predict_patches},
          {"train", regressor::to_json(c.dr2s.train)},
          {"capture_warp_px", c.capture_warp_px},
          {"seed", c.seed}};
}

std::string run_id(const ExperimentConfig& cfg) {
  // Thread count does not change results, so it stays out of the identity.
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
  return std::string(buf, 12);
}

FleetData build_fleet(const ExperimentConfig& cfg) {
  cfg.validate();
  FleetData out;
  json chart_spec = cfg.chart;
  if (!chart_spec.contains("seed")) chart_spec["seed"] = derive_seed(cfg.seed, "chart") & 0xffffffffu;
  out.chart = chartgen::generate_chart(chart_spec);
  const ImageF& chart = out.chart.image;
  if (out.chart.composite) {
    out.label_windows = out.chart.composite->rects_of(chartgen::TileKind::DeadLeavesFine);
  }
  if (out.label_windows.empty()) out.label_windows = {Rect{1, 1, chart.width() - 2, chart.height() - 2}};
  // Keep label windows one pixel off the frame edge.
  for (auto& r : out.label_windows) {
    const int x1 = std::min(r.x + r.w, chart.width() - 1);
    const int y1 = std::min(r.y + r.h, chart.height() - 1);
    r.x = std::max(r.x, 1);
    r.y = std::max(r.y, 1);
    r.w = x1 - r.x;
    r.h = y1 - r.y;
  }

  const auto fleet = devsim::gen_fleet(cfg.n_devices, cfg.n_brands, derive_seed(cfg.seed, "fleet"), cfg.fleet);
  for (const auto& d : fleet) {
    devsim::LabeledCapture c;
    c.device = d;
    c.chart_id = out.chart.type + "/" + std::to_string(chart_spec["seed"].get<std::uint64_t>());
    ImageF img = devsim::simulate(chart, d);
    c.label = devsim::oracle_label(chart, img, out.label_windows);
    std::optional<registration::RegistrationResult> reg;
    if (cfg.capture_warp_px > 0.0) {
      const auto h = registration::random_corner_homography(chart.width(), chart.height(), cfg.capture_warp_px,
                                                            derive_seed(cfg.seed, "warp/" + d.device_id));
      const ImageF warped = registration::warp(img, h, chart.width(), chart.height()).image;
      registration::RegisterConfig rc;
      rc.seed = derive_seed(cfg.seed, "register/" + d.device_id);
      reg = registration::register_capture(warped, chart, rc);
      img = registration::align(warped, *reg, chart.width(), chart.height()).image;
    }
    c.image = std::move(img);
    out.captures.push_back(std::move(c));
    out.registrations.push_back(reg);
  }
  return out;
}

std::vector<Rect> draw_random_regions(int w, int h, int size, int count, std::uint64_t seed) {
  Rng rng(seed);
  return sample_patch_rects(Rect{0, 0, w, h}, size, count, rng);
}

double mean_over(const ImageF& m, const std::vector<Rect>& rects) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rects) {
    for (int y = r.y; y < r.y + r.h; ++y) {
      for (int x = r.x; x < r.x + r.w; ++x) {
        s += m.at(y, x);
        ++n;
      }
    }
  }
  if (n == 0) throw DataError("mean over an empty set of rectangles");
  return s / static_cast<double>(n);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const FleetData& fleet, const LogFn& log,
                                const Stage1Source& stage1, bool map_only) {
  cfg.validate();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const auto& caps = fleet.captures;
  std::vector<devsim::DeviceProfile> devices;
  std::vector<std::string> ids;
  std::vector<double> labels;
  for (const auto& c : caps) {
    devices.push_back(c.device);
    ids.push_back(c.device.device_id);
    labels.push_back(c.label);
  }

  ExperimentResult res;
  res.plan = evalmetrics::make_folds(devices, cfg.folds, derive_seed(cfg.seed, "folds"));
  res.plan.check();
  const ImageF& chart = fleet.chart.image;
  if (cfg.dr2s.region_size > std::min(chart.width(), chart.height())) {
    throw ConfigError("region_size " + std::to_string(cfg.dr2s.region_size) + " exceeds the " +
                      std::to_string(chart.width()) + "x" + std::to_string(chart.height()) + " chart");
  }
  res.random_regions = draw_random_regions(chart.width(), chart.height(), cfg.dr2s.region_size, cfg.random_regions,
                                           derive_seed(cfg.seed, "random_regions"));
  res.folds.resize(static_cast<std::size_t>(cfg.folds));

  std::atomic<int> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int f = next++; f < cfg.folds; f = next++) {
      try {
        FoldOutcome& out = res.folds[static_cast<std::size_t>(f)];
        out.fold = f;
        std::vector<devsim::LabeledCapture> train;
        std::vector<devsim::LabeledCapture> test;
        for (std::size_t i = 0; i < caps.size(); ++i) {
          if (res.plan.fold_of.at(ids[i]) == f) {
            out.test_idx.push_back(i);
            test.push_back(caps[i]);
          } else {
            out.train_idx.push_back(i);
            train.push_back(caps[i]);
          }
        }
        regionsel::Dr2sConfig dc = cfg.dr2s;
        dc.train.seed = derive_seed(cfg.seed, "fold" + std::to_string(f) + "/train");
        dc.seed = derive_seed(cfg.seed, "predict");
        std::optional<regressor::TrainResult> pre;
        if (stage1) pre = stage1(f);
        {
          std::lock_guard lock(log_mutex);
          say("fold " + std::to_string(f) + ": " + std::to_string(train.size()) + " train, " +
              std::to_string(test.size()) + " test" + (pre ? ", stage 1 reused" : ""));
        }
        if (map_only) {
          // Stage 1 and the confidence map only.
          const Rect whole = chart.bounds();
          out.dr2s.stage1 = pre ? *pre : regressor::train(train, std::span(&whole, 1), dc.train);
          std::vector<ImageF> maps;
          for (const auto& c : train) maps.push_back(regionsel::score_map(out.dr2s.stage1.net, c.image, dc.train.precision).full);
          out.dr2s.confidence = regionsel::confidence_map(std::span<const ImageF>(maps), dc.region_size);
          continue;
        }
        if (cfg.has_method("selected_region")) {
          out.dr2s = regionsel::run_dr2s(train, test, dc, pre ? &*pre : nullptr);
        } else {
          const Rect whole = chart.bounds();
          out.dr2s.stage1 = pre ? *pre : tagged("stage 1", [&] {
            return regressor::train(train, std::span(&whole, 1), dc.train);
          });
          for (const auto& c : test) {
            out.dr2s.stage1_predictions.push_back(regionsel::predict_device(
                out.dr2s.stage1.net, c.image, whole, dc.predict_patches,
                regionsel::prediction_seed(dc.seed, "stage1", c.device.device_id), dc.train.patch_size,
                dc.train.precision));
          }
        }
        if (cfg.has_method("random_region")) {
          for (const Rect& region : res.random_regions) {
            const auto net = tagged("random region", [&] {
              return regressor::train(train, std::span(&region, 1), dc.train).net;
            });
            std::vector<double> pred;
            for (const auto& c : test) {
              pred.push_back(regionsel::predict_device(
                  net, c.image, region, dc.predict_patches,
                  regionsel::prediction_seed(dc.seed, "random_region", c.device.device_id), dc.train.patch_size,
                  dc.train.precision));
            }
            out.random_region_predictions.push_back(std::move(pred));
          }
        }
        std::lock_guard lock(log_mutex);
        say("fold " + std::to_string(f) + " done");
      } catch (const Error&) {
        std::lock_guard lock(log_mutex);
        try {
          rethrow_tagged("fold " + std::to_string(f));
        } catch (...) {
          if (!failure) failure = std::current_exception();
        }
        next = cfg.folds;
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.folds;
      }
    }
  };
  const int n_threads = std::min(cfg.folds, cfg.threads > 0 ? cfg.threads
                                                            : std::max(1, static_cast<int>(std::thread::hardware_concurrency())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  json fleet_json = json::array();
  for (std::size_t i = 0; i < caps.size(); ++i) {
    json d = devsim::to_json(caps[i].device);
    d["label"] = labels[i];
    d["fold"] = res.plan.fold_of.at(ids[i]);
    if (fleet.registrations[i]) d["registration"] = registration::to_json(*fleet.registrations[i]);
    fleet_json.push_back(d);
  }
  const bool has_map = map_only || cfg.has_method("selected_region");
  json folds_json = json::array();
  for (const auto& f : res.folds) {
    json fj{{"fold", f.fold}, {"stage1_loss", f.dr2s.stage1.loss_trace}};
    if (has_map) {
      const auto& c = f.dr2s.confidence;
      fj["selected"] = rect_json(c.selected);
      fj["best_mean"] = c.best_mean;
      fj["fallback"] = c.fallback;
      fj["warning"] = c.warning;
    }
    if (!map_only && cfg.has_method("selected_region")) fj["final_loss"] = f.dr2s.final.loss_trace;
    folds_json.push_back(fj);
  }
  json regions = json::array();
  for (const auto& r : res.random_regions) regions.push_back(rect_json(r));
  res.metrics = json{{"run_id", run_id(cfg)},
                     {"config", to_json(cfg)},
                     {"label_windows", json::array()},
                     {"fleet", fleet_json},
                     {"folds", folds_json},
                     {"random_regions", regions}};
  for (const auto& r : fleet.label_windows) res.metrics["label_windows"].push_back(rect_json(r));
  if (map_only) return res;

  // Predictions are already computed per fold; the pipelines only look them up.
  auto lookup = [&](auto get) {
    return [&res, get](const std::vector<std::size_t>&, const std::vector<std::size_t>& test, int fold) {
      const FoldOutcome& f = res.folds[static_cast<std::size_t>(fold)];
      if (test != f.test_idx) throw DataError("fold " + std::to_string(fold) + " test set changed between runs");
      return get(f);
    };
  };
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  res.metrics["methods"] = json::object();
  res.metrics["table"] = json::array();
  for (const auto& method : kMethods) {
    if (!cfg.has_method(method)) continue;
    json srocc;
    json krocc;
    if (method == "random_region") {
      json per_region = json::array();
      double rr_srocc = 0.0;
      double rr_krocc = 0.0;
      bool defined = true;
      for (int r = 0; r < cfg.random_regions; ++r) {
        const auto rep = evalmetrics::evaluate_folds(lookup([r](const FoldOutcome& f) {
                                                       return f.random_region_predictions[static_cast<std::size_t>(r)];
                                                     }),
                                                     ids, labels, res.plan);
        if (!rep.pooled_srocc || !rep.pooled_krocc) {
          defined = false;
        } else {
          rr_srocc += *rep.pooled_srocc / cfg.random_regions;
          rr_krocc += *rep.pooled_krocc / cfg.random_regions;
        }
        json rj = evalmetrics::to_json(rep);
        rj["region"] = rect_json(res.random_regions[static_cast<std::size_t>(r)]);
        per_region.push_back(rj);
      }
      srocc = defined ? json(rr_srocc) : json(nullptr);
      krocc = defined ? json(rr_krocc) : json(nullptr);
      res.metrics["methods"][method] = {
          {"per_region", per_region}, {"mean_pooled_srocc", srocc}, {"mean_pooled_krocc", krocc}};
    } else {
      const bool sel = method == "selected_region";
      const auto rep = evalmetrics::evaluate_folds(lookup([sel](const FoldOutcome& f) {
                                                     return sel ? f.dr2s.final_predictions : f.dr2s.stage1_predictions;
                                                   }),
                                                   ids, labels, res.plan);
      srocc = opt(rep.pooled_srocc);
      krocc = opt(rep.pooled_krocc);
      res.metrics["methods"][method] = evalmetrics::to_json(rep);
    }
    res.metrics["table"].push_back({{"method", method}, {"srocc", srocc}, {"krocc", krocc}});
  }
  return res;
}

}  // namespace dr2s::app
