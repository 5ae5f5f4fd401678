#include "dr2s/evalmetrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dr2s/core/error.hpp"
#include "dr2s/core/rng.hpp"

namespace dr2s::evalmetrics {

using nlohmann::json;

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("srocc: length mismatch");
  if (x.size() < 3) throw DataError("srocc needs at least 3 samples");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("srocc undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double krocc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("krocc: length mismatch");
  if (x.size() < 2) throw DataError("krocc needs at least 2 samples");
  long long s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const int a = (x[i] < x[j]) - (x[i] > x[j]);
      const int b = (y[i] < y[j]) - (y[i] > y[j]);
      s += a * b;
    }
  }
  const double n = static_cast<double>(x.size());
  return static_cast<double>(s) / (n * (n - 1.0) / 2.0);
}

void FoldPlan::check() const {
  std::map<int, int> fold_of_brand;
  for (const auto& [id, f] : fold_of) {
    const int b = brand_of.at(id);
    const auto [it, fresh] = fold_of_brand.emplace(b, f);
    if (!fresh && it->second != f) throw DataError("brand " + std::to_string(b) + " spans two folds");
  }
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].empty()) throw DataError("fold " + std::to_string(f) + " is empty");
  }
}

FoldPlan make_folds(std::span<const devsim::DeviceProfile> fleet, int k, std::uint64_t seed) {
  std::map<int, std::vector<std::string>> members;
  std::set<std::string> ids;
  for (const auto& d : fleet) {
    if (!ids.insert(d.device_id).second) throw DataError("duplicate device id '" + d.device_id + "'");
    members[d.brand_id].push_back(d.device_id);
  }
  if (k < 1) throw ConfigError("fold count must be positive");
  if (static_cast<std::size_t>(k) > members.size()) {
    throw ConfigError("fold count " + std::to_string(k) + " exceeds the " + std::to_string(members.size()) +
                      " brands");
  }
  std::vector<int> brands;
  for (const auto& [b, m] : members) brands.push_back(b);
  Rng rng(seed);
  for (std::size_t i = brands.size(); i > 1; --i) std::swap(brands[i - 1], brands[rng.uniform_int(i)]);
  std::stable_sort(brands.begin(), brands.end(),
                   [&](int a, int b) { return members[a].size() > members[b].size(); });

  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(k);
  for (int b : brands) {
    int target = 0;
    for (int f = 1; f < k; ++f) {
      if (plan.folds[f].size() < plan.folds[target].size()) target = f;
    }
    for (const auto& id : members[b]) {
      plan.folds[target].push_back(id);
      plan.fold_of[id] = target;
      plan.brand_of[id] = b;
    }
  }
  plan.check();
  return plan;
}

namespace {

std::optional<double> try_metric(double (*fn)(std::span<const double>, std::span<const double>),
                                 std::span<const double> x, std::span<const double> y, const std::string& what,
                                 std::vector<std::string>& warnings) {
  try {
    return fn(x, y);
  } catch (const Error& e) {
    warnings.push_back(what + ": " + e.what());
    return std::nullopt;
  }
}

std::optional<double> mean_of(const std::vector<FoldMetrics>& folds, std::optional<double> FoldMetrics::*m) {
  double s = 0.0;
  int n = 0;
  for (const auto& f : folds) {
    if (f.*m) {
      s += *(f.*m);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

EvalReport evaluate_folds(const Pipeline& pipeline, std::span<const std::string> device_ids,
                          std::span<const double> labels, const FoldPlan& plan) {
  if (device_ids.size() != labels.size()) throw DataError("device ids and labels differ in length");
  plan.check();
  std::vector<int> fold(device_ids.size());
  for (std::size_t i = 0; i < device_ids.size(); ++i) {
    const auto it = plan.fold_of.find(device_ids[i]);
    if (it == plan.fold_of.end()) throw DataError("device '" + device_ids[i] + "' is not in the fold plan");
    fold[i] = it->second;
  }

  EvalReport report;
  std::vector<double> pooled_pred;
  std::vector<double> pooled_label;
  for (int f = 0; f < plan.k; ++f) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    const auto pred = pipeline(train, test, f);
    if (pred.size() != test.size()) throw DataError("pipeline returned the wrong number of predictions");
    FoldMetrics m;
    m.fold = f;
    for (std::size_t t = 0; t < test.size(); ++t) {
      m.device_ids.push_back(device_ids[test[t]]);
      m.labels.push_back(labels[test[t]]);
      m.predictions.push_back(pred[t]);
    }
    const std::string tag = "fold " + std::to_string(f);
    if (test.size() < 3) {
      report.warnings.push_back(tag + ": fewer than 3 devices, SROCC omitted");
    } else {
      m.srocc = try_metric(&srocc, m.predictions, m.labels, tag + " SROCC", report.warnings);
    }
    if (test.size() >= 2) m.krocc = try_metric(&krocc, m.predictions, m.labels, tag + " KROCC", report.warnings);
    pooled_pred.insert(pooled_pred.end(), m.predictions.begin(), m.predictions.end());
    pooled_label.insert(pooled_label.end(), m.labels.begin(), m.labels.end());
    report.folds.push_back(std::move(m));
  }
  report.pooled_srocc = try_metric(&srocc, pooled_pred, pooled_label, "pooled SROCC", report.warnings);
  report.pooled_krocc = try_metric(&krocc, pooled_pred, pooled_label, "pooled KROCC", report.warnings);
  report.mean_fold_srocc = mean_of(report.folds, &FoldMetrics::srocc);
  report.mean_fold_krocc = mean_of(report.folds, &FoldMetrics::krocc);
  return report;
}

json to_json(const EvalReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"device_ids", f.device_ids},
                     {"labels", f.labels},
                     {"predictions", f.predictions},
                     {"srocc", opt(f.srocc)},
                     {"krocc", opt(f.krocc)}});
  }
  return json{{"folds", folds},
              {"pooled", {{"srocc", opt(r.pooled_srocc)}, {"krocc", opt(r.pooled_krocc)}}},
              {"mean_fold", {{"srocc", opt(r.mean_fold_srocc)}, {"krocc", opt(r.mean_fold_krocc)}}},
              {"warnings", r.warnings}};
}

}  // namespace dr2s::evalmetrics
