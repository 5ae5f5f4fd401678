#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dr2s/core/error.hpp"
#include "dr2s/core/rng.hpp"
#include "dr2s/evalmetrics/metrics.hpp"
#include "rank_oracle.hpp"

namespace dr2s::evalmetrics {
namespace {

using V = std::vector<double>;

std::vector<devsim::DeviceProfile> fleet_with_brand_sizes(std::initializer_list<int> sizes) {
  std::vector<devsim::DeviceProfile> fleet;
  int brand = 0;
  for (int n : sizes) {
    for (int i = 0; i < n; ++i) {
      devsim::DeviceProfile d;
      d.device_id = "b" + std::to_string(brand) + "_" + std::to_string(i);
      d.brand_id = brand;
      fleet.push_back(d);
    }
    ++brand;
  }
  return fleet;
}

TEST(Srocc, Examples) {
  EXPECT_DOUBLE_EQ(srocc(V{1, 2, 3, 4}, V{1, 3, 2, 4}), 0.8);
  EXPECT_DOUBLE_EQ(srocc(V{1, 2, 3, 4, 5}, V{2, 4, 8, 16, 32}), 1.0);
  EXPECT_DOUBLE_EQ(srocc(V{1, 2, 3, 4, 5}, V{5, 4, 3, 2, 1}), -1.0);
}

TEST(Srocc, Errors) {
  EXPECT_THROW(srocc(V{1, 1, 1}, V{1, 2, 3}), UndefinedCorrelation);
  EXPECT_THROW(srocc(V{1, 2}, V{1, 2}), DataError);
  EXPECT_THROW(srocc(V{1, 2, 3}, V{1, 2}), DataError);
}

TEST(Krocc, Examples) {
  EXPECT_DOUBLE_EQ(krocc(V{1, 2, 3}, V{1, 3, 2}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(krocc(V{1, 2, 3, 4}, V{10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(krocc(V{1, 1, 1}, V{1, 2, 3}), 0.0);
  EXPECT_THROW(krocc(V{1}, V{1}), DataError);
}

TEST(AverageRanks, Ties) {
  EXPECT_EQ(average_ranks(V{10, 20, 20, 5}), (V{2, 3.5, 3.5, 1}));
}

TEST(RankMetrics, MatchBruteForceOnRandomIntegers) {
  Rng rng(1);
  int undefined = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 3 + static_cast<int>(rng.uniform_int(10));
    V x(n);
    V y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.uniform_int(6));
      y[i] = static_cast<double>(rng.uniform_int(6));
    }
    EXPECT_EQ(krocc(x, y), dr2s::testing::brute_krocc(x, y));
    const bool constant = std::set<double>(x.begin(), x.end()).size() == 1 ||
                          std::set<double>(y.begin(), y.end()).size() == 1;
    if (constant) {
      EXPECT_THROW(srocc(x, y), UndefinedCorrelation);
      ++undefined;
      continue;
    }
    EXPECT_NEAR(srocc(x, y), dr2s::testing::brute_srocc(x, y), 1e-12);
  }
  EXPECT_LT(undefined, 50);
}

TEST(RankMetrics, InvariantUnderMonotoneMaps) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const int n = 3 + static_cast<int>(rng.uniform_int(20));
    V x(n);
    V y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = rng.uniform(-2, 2);
      y[i] = rng.uniform(-2, 2);
    }
    V fx(n);
    V gy(n);
    for (int i = 0; i < n; ++i) {
      fx[i] = std::exp(3 * x[i]) + x[i];
      gy[i] = std::atan(y[i]) * 7 - 1;
    }
    const double s = srocc(x, y);
    const double k = krocc(x, y);
    EXPECT_NEAR(srocc(fx, gy), s, 1e-12);
    EXPECT_EQ(krocc(fx, gy), k);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(k, -1.0);
    EXPECT_LE(k, 1.0);
  }
}

TEST(Folds, OneBrandPerFoldWhenKEqualsBrands) {
  const auto fleet = fleet_with_brand_sizes({3, 2, 4, 1});
  const auto plan = make_folds(fleet, 4, 9);
  for (const auto& f : plan.folds) {
    std::set<int> brands;
    for (const auto& id : f) brands.insert(plan.brand_of.at(id));
    EXPECT_EQ(brands.size(), 1u);
  }
}

TEST(Folds, GreedyBalancing) {
  const auto fleet = fleet_with_brand_sizes({8, 6, 4, 4, 2, 2});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = make_folds(fleet, 3, seed);
    std::size_t lo = 100;
    std::size_t hi = 0;
    std::size_t total = 0;
    for (const auto& f : plan.folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      total += f.size();
    }
    EXPECT_LE(hi - lo, 2u);
    EXPECT_EQ(total, fleet.size());
    EXPECT_EQ(plan.fold_of.size(), fleet.size());
  }
}

TEST(Folds, DeterministicAndBrandDisjoint) {
  const auto fleet = fleet_with_brand_sizes({5, 5, 5, 5, 5, 5});
  const auto a = make_folds(fleet, 5, 3);
  const auto b = make_folds(fleet, 5, 3);
  EXPECT_EQ(a.fold_of, b.fold_of);
  EXPECT_NO_THROW(a.check());
  std::set<std::string> seen;
  for (const auto& f : a.folds) {
    for (const auto& id : f) EXPECT_TRUE(seen.insert(id).second);
  }
  EXPECT_EQ(seen.size(), fleet.size());
}

TEST(Folds, Errors) {
  const auto fleet = fleet_with_brand_sizes({2, 2});
  EXPECT_THROW(make_folds(fleet, 3, 1), ConfigError);
  EXPECT_THROW(make_folds(fleet, 0, 1), ConfigError);
  FoldPlan bad = make_folds(fleet, 2, 1);
  bad.fold_of[bad.folds[0][0]] = 1 - bad.fold_of[bad.folds[0][0]];
  EXPECT_THROW(bad.check(), DataError);
}

struct Setup {
  std::vector<std::string> ids;
  std::vector<double> labels;
  FoldPlan plan;
};

Setup setup() {
  const auto fleet = fleet_with_brand_sizes({4, 3, 5, 4, 2});
  Setup s;
  Rng rng(5);
  for (const auto& d : fleet) {
    s.ids.push_back(d.device_id);
    s.labels.push_back(rng.uniform());
  }
  s.plan = make_folds(fleet, 3, 5);
  return s;
}

TEST(EvaluateFolds, OracleAndAntiOracle) {
  const auto s = setup();
  auto by = [&](auto f) {
    return [&, f](const std::vector<std::size_t>&, const std::vector<std::size_t>& test, int) {
      std::vector<double> out;
      for (auto i : test) out.push_back(f(s.labels[i]));
      return out;
    };
  };
  const auto oracle = evaluate_folds(by([](double y) { return y; }), s.ids, s.labels, s.plan);
  EXPECT_DOUBLE_EQ(*oracle.pooled_srocc, 1.0);
  EXPECT_DOUBLE_EQ(*oracle.pooled_krocc, 1.0);
  const auto anti = evaluate_folds(by([](double y) { return 1 - y; }), s.ids, s.labels, s.plan);
  EXPECT_DOUBLE_EQ(*anti.pooled_srocc, -1.0);
  const auto constant = evaluate_folds(by([](double) { return 0.5; }), s.ids, s.labels, s.plan);
  EXPECT_FALSE(constant.pooled_srocc.has_value());
  EXPECT_DOUBLE_EQ(*constant.pooled_krocc, 0.0);
  EXPECT_FALSE(constant.warnings.empty());
}

TEST(EvaluateFolds, TrainNeverSeesTestAndSmallFoldsWarn) {
  const auto fleet = fleet_with_brand_sizes({5, 5, 2});
  std::vector<std::string> ids;
  std::vector<double> labels;
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    ids.push_back(fleet[i].device_id);
    labels.push_back(static_cast<double>(i));
  }
  const auto plan = make_folds(fleet, 3, 1);
  std::size_t seen = 0;
  const auto report = evaluate_folds(
      [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, int f) {
        for (auto i : train) EXPECT_NE(plan.fold_of.at(ids[i]), f);
        for (auto i : test) EXPECT_EQ(plan.fold_of.at(ids[i]), f);
        seen += test.size();
        std::vector<double> out;
        for (auto i : test) out.push_back(labels[i]);
        return out;
      },
      ids, labels, plan);
  EXPECT_EQ(seen, fleet.size());
  int omitted = 0;
  for (const auto& f : report.folds) omitted += !f.srocc.has_value();
  EXPECT_EQ(omitted, 1);
  EXPECT_FALSE(report.warnings.empty());
  EXPECT_DOUBLE_EQ(*report.pooled_srocc, 1.0);
  const auto j = to_json(report);
  EXPECT_EQ(j["folds"].size(), 3u);
  EXPECT_TRUE(j["pooled"]["srocc"].is_number());
}

}  // namespace
}  // namespace dr2s::evalmetrics
