#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/devsim/device.hpp"

namespace dr2s::evalmetrics {

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

/// Spearman: Pearson correlation of average ranks. Needs n >= 3 and equal
/// lengths (DataError); a constant vector raises UndefinedCorrelation.
double srocc(std::span<const double> x, std::span<const double> y);

/// Kendall tau-a: (concordant - discordant) / (n (n - 1) / 2), tied pairs
/// count as neither. Needs n >= 2.
double krocc(std::span<const double> x, std::span<const double> y);

struct FoldPlan {
  int k = 0;
  std::map<std::string, int> fold_of;   // device id -> fold
  std::map<std::string, int> brand_of;  // device id -> brand
  std::vector<std::vector<std::string>> folds;

  /// Throws DataError when a brand spans folds or a fold is empty.
  void check() const;
};

/// Brands are shuffled with `seed`, stably sorted by device count (largest
/// first) and each assigned to the fold holding the fewest devices so far
/// (lowest index on ties). ConfigError when k < 1 or k exceeds the brands.
FoldPlan make_folds(std::span<const devsim::DeviceProfile> fleet, int k, std::uint64_t seed);

struct FoldMetrics {
  int fold = 0;
  std::vector<std::string> device_ids;
  std::vector<double> labels;
  std::vector<double> predictions;
  std::optional<double> srocc;
  std::optional<double> krocc;
};

struct EvalReport {
  std::vector<FoldMetrics> folds;
  std::optional<double> pooled_srocc;
  std::optional<double> pooled_krocc;
  std::optional<double> mean_fold_srocc;
  std::optional<double> mean_fold_krocc;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const EvalReport& r);

/// Gets in-fold predictions given (train indices, test indices, fold).
using Pipeline =
    std::function<std::vector<double>(const std::vector<std::size_t>&, const std::vector<std::size_t>&, int)>;

/// Runs the pipeline once per fold over devices indexed like `device_ids` and
/// `labels`, then scores each fold and the pooled predictions. Folds with
/// fewer than 3 devices get no SROCC (a warning is recorded); undefined
/// correlations are reported as warnings with the value omitted.
EvalReport evaluate_folds(const Pipeline& pipeline, std::span<const std::string> device_ids,
                          std::span<const double> labels, const FoldPlan& plan);

}  // namespace dr2s::evalmetrics
