// Command-line front end. Every command exits 0 on success, 2 on a config or
// usage error, 3 on a data error and 4 on a numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dr2s/app/experiment.hpp"
#include "dr2s/core/error.hpp"
#include "dr2s/core/io.hpp"
#include "dr2s/regressor/checkpoint.hpp"
#include "dr2s/spectral/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dr2s;

namespace {

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
    const auto line = 1 + std::count(upto.begin(), upto.end(), '\n');
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Rect parse_rect(const std::string& s) {
  Rect r;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(s);
  if (!(in >> r.x >> c1 >> r.y >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' || c3 != ',' || r.w < 1 ||
      r.h < 1) {
    throw ConfigError("rectangle '" + s + "' is not x,y,w,h with positive size");
  }
  return r;
}

json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

Rect bounding_box(const std::vector<Rect>& rects) {
  Rect b = rects.front();
  for (const auto& r : rects) {
    const int x1 = std::max(b.x + b.w, r.x + r.w);
    const int y1 = std::max(b.y + b.h, r.y + r.h);
    b.x = std::min(b.x, r.x);
    b.y = std::min(b.y, r.y);
    b.w = x1 - b.x;
    b.h = y1 - b.y;
  }
  return b;
}

/// Blue-to-yellow ramp for display maps in [0, 1].
ImageF heatmap(const ImageF& m) {
  ImageF out(m.width(), m.height(), 3);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const double v = std::clamp(m.at(y, x), 0.0, 1.0);
      out.at(0, y, x) = std::clamp(2.0 * v - 0.5, 0.0, 1.0);
      out.at(1, y, x) = std::clamp(1.5 * v, 0.0, 1.0) * (0.3 + 0.7 * v);
      out.at(2, y, x) = std::clamp(1.0 - 1.6 * std::abs(v - 0.35), 0.0, 1.0);
    }
  }
  return out;
}

ImageF overlay(const ImageF& img, const Rect& r) {
  const ImageF g = to_gray(img);
  ImageF out(g.width(), g.height(), 3);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < g.size(); ++i) out.plane(c)[i] = g.data()[i];
  }
  const int t = 3;
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) {
      if (x - r.x < t || y - r.y < t || r.x + r.w - 1 - x < t || r.y + r.h - 1 - y < t) {
        out.at(0, y, x) = 1.0;
        out.at(1, y, x) = 0.1;
        out.at(2, y, x) = 0.1;
      }
    }
  }
  return out;
}

void write_map(const fs::path& dir, const std::string& stem, const ImageF& m) {
  write_npy(dir / (stem + ".npy"), m);
  write_png(dir / (stem + ".png"), heatmap(regionsel::equalize_for_display(m)));
}

std::string csv_number(const json& v) {
  if (v.is_null()) return "";
  std::ostringstream os;
  os << std::setprecision(10) << v.get<double>();
  return os.str();
}

/// Timestamps live only in the run log, never in reports.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path) {}
  void operator()(const std::string& s) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " " << s << "\n";
    out_.flush();
    std::cerr << s << "\n";
  }

 private:
  std::ofstream out_;
};

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DR2S_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

/// Reports never overwrite: a taken name gets a numeric suffix.
fs::path fresh_run_dir(const fs::path& root, const std::string& id) {
  fs::create_directories(root);
  fs::path dir = root / id;
  for (int n = 2; fs::exists(dir); ++n) dir = root / (id + "-" + std::to_string(n));
  fs::create_directories(dir);
  return dir;
}

void save_fleet(const fs::path& dir, const app::FleetData& fleet, const app::ExperimentConfig& cfg) {
  fs::create_directories(dir / "captures");
  write_png(dir / "chart.png", fleet.chart.image);
  write_npy(dir / "chart.npy", fleet.chart.image);
  write_json(dir / "chart.json", fleet.chart.sidecar);
  std::vector<devsim::DeviceProfile> devices;
  std::ostringstream labels;
  labels << "device_id,brand_id,label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < fleet.captures.size(); ++i) {
    const auto& c = fleet.captures[i];
    devices.push_back(c.device);
    const fs::path cd = dir / "captures" / c.device.device_id;
    fs::create_directories(cd);
    write_png(cd / "capture.png", c.image);
    write_npy(cd / "capture.npy", c.image);
    json dj = devsim::to_json(c.device);
    dj["label"] = c.label;
    if (fleet.registrations[i]) dj["registration"] = registration::to_json(*fleet.registrations[i]);
    write_json(cd / "device.json", dj);
    labels << c.device.device_id << "," << c.device.brand_id << "," << c.label << "\n";
  }
  json fj = devsim::fleet_to_json(devices, derive_seed(cfg.seed, "fleet"));
  fj["label_windows"] = json::array();
  for (const auto& r : fleet.label_windows) fj["label_windows"].push_back(rect_json(r));
  write_json(dir / "fleet.json", fj);
  write_text(dir / "labels.csv", labels.str());
}

struct FleetDir {
  std::vector<std::string> ids;
  std::vector<double> labels;
  std::vector<fs::path> captures;
};

FleetDir read_fleet_dir(const fs::path& dir) {
  FleetDir f;
  std::istringstream in(read_text(dir / "labels.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.rfind(',');
    if (a == std::string::npos || a == b) throw DataError("malformed labels.csv row: " + line);
    f.ids.push_back(line.substr(0, a));
    f.labels.push_back(std::stod(line.substr(b + 1)));
    f.captures.push_back(dir / "captures" / f.ids.back() / "capture.npy");
  }
  return f;
}

// ---------------------------------------------------------------- commands

int cmd_gen_chart(const std::string& spec, const std::string& out) {
  const auto chart = chartgen::generate_chart(read_json(spec));
  fs::create_directories(out);
  write_png(fs::path(out) / "chart.png", chart.image);
  write_npy(fs::path(out) / "chart.npy", chart.image);
  write_json(fs::path(out) / "chart.json", chart.sidecar);
  std::cout << (fs::path(out) / "chart.png").string() << "\n";
  return 0;
}

int cmd_gen_fleet(const std::string& config, const std::string& out) {
  const auto cfg = app::experiment_config_from_json(read_json(config));
  const auto fleet = app::build_fleet(cfg);
  save_fleet(out, fleet, cfg);
  std::cout << fleet.captures.size() << " captures in " << out << "\n";
  return 0;
}

int cmd_simulate(const std::string& chart_path, const std::string& device, const std::string& out,
                 const std::vector<std::string>& windows) {
  const ImageF chart = read_image(chart_path);
  const auto d = devsim::device_from_json(read_json(device));
  const ImageF cap = devsim::simulate(chart, d);
  const fs::path o(out);
  if (o.extension() == ".npy") {
    write_npy(o, cap);
  } else {
    write_png(o, cap);
  }
  std::vector<Rect> rects;
  for (const auto& w : windows) rects.push_back(parse_rect(w));
  const double label = rects.empty() ? devsim::oracle_label(chart, cap) : devsim::oracle_label(chart, cap, rects);
  std::cout << json{{"device_id", d.device_id}, {"label", label}}.dump() << "\n";
  return 0;
}

int cmd_register(const std::string& capture, const std::string& reference, const std::string& out,
                 const std::string& report, std::uint64_t seed) {
  const ImageF cap = read_image(capture);
  const ImageF ref = read_image(reference);
  registration::RegisterConfig rc;
  rc.seed = seed;
  const auto r = registration::register_capture(cap, ref, rc);
  const auto w = registration::align(cap, r, ref.width(), ref.height());
  const fs::path o(out);
  if (o.extension() == ".npy") {
    write_npy(o, w.image);
  } else {
    write_png(o, w.image);
  }
  const json j = registration::to_json(r);
  if (!report.empty()) write_json(report, j);
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_acutance(const std::vector<std::string>& captures, const std::string& reference, const std::string& mode,
                 const std::string& texture_rect, const std::string& uniform_rect,
                 const std::vector<std::string>& uniforms, const spectral::ViewingConditions& vc,
                 const std::string& out, const std::string& mtf_dir) {
  if (mode != "rr" && mode != "fr") throw ConfigError("--mode must be rr or fr");
  if (reference.empty()) throw ConfigError("--reference is required in " + mode + " mode");
  if (!uniforms.empty() && uniforms.size() != captures.size()) {
    throw ConfigError("--uniform needs one file per capture");
  }
  const ImageF ref = read_image(reference);
  std::optional<Rect> tex;
  std::optional<Rect> uni;
  if (!texture_rect.empty()) tex = parse_rect(texture_rect);
  if (!uniform_rect.empty()) uni = parse_rect(uniform_rect);
  // A composite chart's sidecar supplies the texture and uniform tiles.
  const fs::path sidecar = fs::path(reference).replace_extension(".json");
  if (fs::exists(sidecar)) {
    const auto sj = read_json(sidecar);
    if (sj.contains("tiles") && !sj["tiles"].empty() && sj.contains("spec") &&
        sj["spec"].value("type", "") == "composite") {
      const auto chart = chartgen::chart_from_sidecar(sj, ref);
      if (!tex && !chart.rects_of(chartgen::TileKind::DeadLeavesFine).empty()) {
        tex = bounding_box(chart.rects_of(chartgen::TileKind::DeadLeavesFine));
      }
      if (!uni && !chart.uniform_rects().empty()) uni = chart.uniform_rects().front();
    }
  }
  if (mode == "rr" && uniforms.empty() && !uni) {
    throw ConfigError("rr mode needs --uniform files, --uniform-rect, or a composite reference");
  }
  const ImageF ref_tex = tex ? crop(ref, *tex) : ref;
  const auto ideal = spectral::psd_radial(ref_tex);
  std::ostringstream csv;
  csv << "capture,mode,acutance\n" << std::setprecision(10);
  json results = json::array();
  if (!mtf_dir.empty()) fs::create_directories(mtf_dir);
  for (std::size_t i = 0; i < captures.size(); ++i) {
    const ImageF cap = read_image(captures[i]);
    const ImageF cap_tex = tex ? crop(cap, *tex) : cap;
    spectral::MtfCurve mtf;
    if (mode == "fr") {
      mtf = spectral::mtf_fr(cap_tex, ref_tex);
    } else {
      const ImageF u = uniforms.empty() ? crop(cap, *uni) : read_image(uniforms[i]);
      mtf = spectral::mtf_rr(cap_tex, u, ideal);
    }
    const double a = spectral::acutance(mtf, vc, cap.height());
    csv << captures[i] << "," << mode << "," << a << "\n";
    results.push_back({{"capture", captures[i]}, {"mode", mode}, {"acutance", a}});
    if (!mtf_dir.empty()) {
      write_text(fs::path(mtf_dir) / (fs::path(captures[i]).parent_path().filename().string() + "_" +
                                      fs::path(captures[i]).stem().string() + "_mtf.csv"),
                 spectral::to_csv(mtf.base));
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
    write_json(fs::path(out).replace_extension(".json"), results);
  }
  return 0;
}

int cmd_dr2s(const std::string& config, const std::string& stage, const std::string& from, int epochs,
             int threads, const std::string& out_root) {
  if (stage != "all" && stage != "map") throw ConfigError("--stage must be all or map");
  auto cfg = app::experiment_config_from_json(read_json(config));
  if (epochs > 0) cfg.dr2s.train.epochs = epochs;
  if (threads > 0) cfg.threads = threads;
  cfg.validate();
  const bool map_only = stage == "map";
  const std::string id = app::run_id(cfg) + (map_only ? "-map" : "");
  const fs::path dir = fresh_run_dir(output_root(out_root), id);
  RunLog log(dir / "log.txt");
  log("run " + id + " in " + dir.string());
  write_json(dir / "config.json", app::to_json(cfg));

  app::Stage1Source reuse;
  if (!from.empty()) {
    reuse = [&](int fold) -> std::optional<regressor::TrainResult> {
      const fs::path ck = fs::path(from) / ("fold" + std::to_string(fold)) / "stage1.ckpt";
      if (!fs::exists(ck)) return std::nullopt;
      regressor::TrainResult r{regressor::load_checkpoint(ck), {}};
      const auto meta = regressor::load_checkpoint_meta(ck);
      if (meta.contains("loss_trace")) r.loss_trace = meta["loss_trace"].get<std::vector<double>>();
      return r;
    };
  }

  const auto fleet = tagged("fleet", [&] { return app::build_fleet(cfg); });
  log("fleet: " + std::to_string(fleet.captures.size()) + " devices");
  write_png(dir / "chart.png", fleet.chart.image);
  const auto res = app::run_experiment(cfg, fleet, std::ref(log), reuse, map_only);

  for (const auto& f : res.folds) {
    const fs::path fd = dir / ("fold" + std::to_string(f.fold));
    fs::create_directories(fd);
    json meta{{"run_id", res.metrics["run_id"]}, {"fold", f.fold}, {"loss_trace", f.dr2s.stage1.loss_trace}};
    regressor::save_checkpoint(fd / "stage1.ckpt", f.dr2s.stage1.net, meta);
    const bool has_map = map_only || cfg.has_method("selected_region");
    std::ostringstream loss;
    loss << std::setprecision(10) << "epoch,stage1" << (has_map && !map_only ? ",final" : "") << "\n";
    for (std::size_t e = 0; e < f.dr2s.stage1.loss_trace.size(); ++e) {
      loss << e + 1 << "," << f.dr2s.stage1.loss_trace[e];
      if (has_map && !map_only && e < f.dr2s.final.loss_trace.size()) loss << "," << f.dr2s.final.loss_trace[e];
      loss << "\n";
    }
    write_text(fd / "loss.csv", loss.str());
    if (has_map) {
      write_map(fd, "confidence", f.dr2s.confidence.m);
      write_png(fd / "overlay.png", overlay(fleet.chart.image, f.dr2s.confidence.selected));
    }
    if (has_map && !map_only) {
      meta["loss_trace"] = f.dr2s.final.loss_trace;
      meta["region"] = rect_json(f.dr2s.confidence.selected);
      regressor::save_checkpoint(fd / "final.ckpt", f.dr2s.final.net, meta);
    }
  }
  write_json(dir / "metrics.json", res.metrics);
  if (res.metrics.contains("table")) {
    std::ostringstream t;
    t << "method,srocc,krocc\n";
    for (const auto& row : res.metrics["table"]) {
      t << row["method"].get<std::string>() << "," << csv_number(row["srocc"]) << "," << csv_number(row["krocc"])
        << "\n";
    }
    write_text(dir / "table.csv", t.str());
    std::cout << t.str();
  }
  log("done");
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::vector<std::string>& captures, const std::string& region,
                int patches, std::uint64_t seed) {
  const auto net = regressor::load_checkpoint(checkpoint);
  const auto meta = regressor::load_checkpoint_meta(checkpoint);
  json out = json::array();
  for (const auto& path : captures) {
    const ImageF img = read_image(path);
    Rect r = img.bounds();
    if (!region.empty()) {
      r = parse_rect(region);
    } else if (meta.contains("region")) {
      r = Rect{meta["region"]["x"], meta["region"]["y"], meta["region"]["w"], meta["region"]["h"]};
    }
    const double s = regionsel::predict_device(net, img, r, patches, regionsel::prediction_seed(seed, "cli", path));
    out.push_back({{"capture", path}, {"score", s}, {"region", rect_json(r)}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& reports, const std::string& out) {
  std::ostringstream csv;
  csv << "run_id,method,srocc,krocc\n";
  std::map<std::string, double> fleet0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    fs::path p(reports[i]);
    if (fs::is_directory(p)) p /= "metrics.json";
    const json m = read_json(p);
    if (!m.contains("table") || !m.contains("fleet")) throw DataError(p.string() + " is not a metrics report");
    std::map<std::string, double> fleet;
    for (const auto& d : m["fleet"]) fleet[d["device_id"].get<std::string>()] = d["label"].get<double>();
    if (i == 0) {
      fleet0 = fleet;
    } else if (fleet != fleet0) {
      std::vector<std::string> diff;
      for (const auto& [k, v] : fleet) {
        if (!fleet0.count(k) || fleet0.at(k) != v) diff.push_back(k);
      }
      for (const auto& [k, v] : fleet0) {
        if (!fleet.count(k)) diff.push_back(k);
      }
      std::string list;
      for (std::size_t j = 0; j < std::min<std::size_t>(diff.size(), 5); ++j) list += (j ? ", " : "") + diff[j];
      throw DataError("report " + p.string() + " was run on a different fleet than " + reports[0] + " (" +
                      std::to_string(diff.size()) + " devices differ: " + list + ")");
    }
    for (const auto& row : m["table"]) {
      csv << m["run_id"].get<std::string>() << "," << row["method"].get<std::string>() << ","
          << csv_number(row["srocc"]) << "," << csv_number(row["krocc"]) << "\n";
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
  }
  return 0;
}

int cmd_map(const std::string& checkpoint, const std::string& fleet_dir, std::vector<std::string> captures,
            int region_size, const std::string& out, bool split) {
  const auto net = regressor::load_checkpoint(checkpoint);
  std::vector<double> labels;
  if (!fleet_dir.empty()) {
    const auto f = read_fleet_dir(fleet_dir);
    for (const auto& c : f.captures) captures.push_back(c.string());
    labels = f.labels;
  }
  if (captures.size() < 2) throw DataError("map needs at least 2 captures");
  std::vector<ImageF> maps;
  for (const auto& c : captures) maps.push_back(regionsel::score_map(net, read_image(c)).full);
  const auto cm = regionsel::confidence_map(std::span<const ImageF>(maps), region_size);
  fs::create_directories(out);
  write_map(out, "confidence", cm.m);
  json j{{"selected", rect_json(cm.selected)},
         {"best_mean", cm.best_mean},
         {"n_images", cm.n_images},
         {"fallback", cm.fallback},
         {"warning", cm.warning}};
  if (split) {
    if (labels.empty()) throw ConfigError("--split needs --fleet with labels");
    const auto [low, high] = regionsel::split_confidence_maps(maps, labels, std::nullopt, region_size);
    write_map(out, "confidence_low", low.m);
    write_map(out, "confidence_high", high.m);
    j["low"] = {{"selected", rect_json(low.selected)}, {"n_images", low.n_images}};
    j["high"] = {{"selected", rect_json(high.selected)}, {"n_images", high.n_images}};
  }
  write_json(fs::path(out) / "map.json", j);
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Texture quality toolkit: charts, simulated devices, acutance baselines and region-selected deep regression"};
  cli.require_subcommand(1);
  std::function<int()> run;

  std::string spec, out, config, chart, device, capture, reference, report, mode = "fr", texture_rect, uniform_rect,
      stage = "all", from, out_root, checkpoint, region, fleet_dir, mtf_dir;
  std::vector<std::string> windows, captures, uniforms, reports;
  std::uint64_t seed = 1;
  int epochs = 0, threads = 0, patches = 64, region_size = 384;
  bool split = false;
  spectral::ViewingConditions vc;

  auto* gc = cli.add_subcommand("gen-chart", "Generate a chart PNG, raw .npy and sidecar JSON");
  gc->add_option("--spec", spec, "Chart spec JSON")->required();
  gc->add_option("--out", out, "Output directory")->required();
  gc->callback([&] { run = [&] { return cmd_gen_chart(spec, out); }; });

  auto* gf = cli.add_subcommand("gen-fleet", "Generate a device fleet, captures and label CSV");
  gf->add_option("--config", config, "Run config JSON")->required();
  gf->add_option("--out", out, "Output directory")->required();
  gf->callback([&] { run = [&] { return cmd_gen_fleet(config, out); }; });

  auto* sim = cli.add_subcommand("simulate", "Capture a chart with one device");
  sim->add_option("--chart", chart, "Chart image (.png or .npy)")->required();
  sim->add_option("--device", device, "Device profile JSON")->required();
  sim->add_option("--out", out, "Capture output (.png or .npy)")->required();
  sim->add_option("--label-window", windows, "Label window x,y,w,h (repeatable)");
  sim->callback([&] { run = [&] { return cmd_simulate(chart, device, out, windows); }; });

  auto* reg = cli.add_subcommand("register", "Align a capture to a reference image");
  reg->add_option("--capture", capture, "Capture image")->required();
  reg->add_option("--reference", reference, "Reference image")->required();
  reg->add_option("--out", out, "Aligned capture output")->required();
  reg->add_option("--report", report, "Homography report JSON");
  reg->add_option("--seed", seed, "RANSAC seed");
  reg->callback([&] { run = [&] { return cmd_register(capture, reference, out, report, seed); }; });

  auto* ac = cli.add_subcommand("acutance", "RR or FR acutance of captures");
  ac->add_option("--captures", captures, "Capture images")->required();
  ac->add_option("--reference", reference, "Reference chart image");
  ac->add_option("--mode", mode, "rr or fr");
  ac->add_option("--texture-rect", texture_rect, "Texture window x,y,w,h");
  ac->add_option("--uniform-rect", uniform_rect, "Uniform window x,y,w,h (rr)");
  ac->add_option("--uniform", uniforms, "Uniform capture per texture capture (rr)");
  ac->add_option("--print-height-cm", vc.print_height_cm, "Viewing: print height");
  ac->add_option("--view-distance-cm", vc.view_distance_cm, "Viewing: distance");
  ac->add_option("--out", out, "CSV output (JSON written alongside)");
  ac->add_option("--mtf-dir", mtf_dir, "Directory for per-capture MTF CSVs");
  ac->callback([&] {
    run = [&] {
      return cmd_acutance(captures, reference, mode, texture_rect, uniform_rect, uniforms, vc, out, mtf_dir);
    };
  });

  auto* dr = cli.add_subcommand("dr2s", "Run the three-stage pipeline with brand-disjoint cross-validation");
  dr->add_option("--config", config, "Run config JSON")->required();
  dr->add_option("--stage", stage, "all, or map to stop after the confidence map");
  dr->add_option("--from", from, "Earlier run directory whose stage-1 checkpoints are reused");
  dr->add_option("--epochs", epochs, "Override training epochs");
  dr->add_option("--threads", threads, "Fold workers (default: available cores)");
  dr->add_option("--out-root", out_root, "Output root (default $DR2S_OUTPUT_ROOT, else ./runs)");
  dr->callback([&] { run = [&] { return cmd_dr2s(config, stage, from, epochs, threads, out_root); }; });

  auto* pr = cli.add_subcommand("predict", "Score captures with a checkpoint");
  pr->add_option("--checkpoint", checkpoint, "Network checkpoint")->required();
  pr->add_option("--captures", captures, "Capture images")->required();
  pr->add_option("--region", region, "Region x,y,w,h (default: checkpoint region, else whole image)");
  pr->add_option("--patches", patches, "Patches averaged per capture");
  pr->add_option("--seed", seed, "Patch sampling seed");
  pr->callback([&] { run = [&] { return cmd_predict(checkpoint, captures, region, patches, seed); }; });

  auto* cmp = cli.add_subcommand("compare", "Ablation table from metrics reports");
  cmp->add_option("reports", reports, "metrics.json files or run directories")->required();
  cmp->add_option("--out", out, "CSV output (default stdout)");
  cmp->callback([&] { run = [&] { return cmd_compare(reports, out); }; });

  auto* mp = cli.add_subcommand("map", "Confidence map of captures under a checkpoint");
  mp->add_option("--checkpoint", checkpoint, "Network checkpoint")->required();
  mp->add_option("--fleet", fleet_dir, "Fleet directory from gen-fleet");
  mp->add_option("--captures", captures, "Capture images");
  mp->add_option("--region-size", region_size, "Selected region side");
  mp->add_option("--out", out, "Output directory")->required();
  mp->add_flag("--split", split, "Also write low/high-label maps");
  mp->callback([&] { run = [&] { return cmd_map(checkpoint, fleet_dir, captures, region_size, out, split); }; });

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }
  try {
    return run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const int code = exit_code_for(e);
    return code == 1 ? 3 : code;
  }
}
