#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dr2s/chartgen/charts.hpp"
#include "dr2s/core/error.hpp"
#include "dr2s/devsim/device.hpp"
#include "dr2s/devsim/filters.hpp"
#include "dr2s/spectral/spectral.hpp"
#include "test_support.hpp"

namespace dr2s::devsim {
namespace {

const ImageF& chart() {
  static const ImageF c = [] {
    chartgen::DeadLeavesParams p;
    p.size = 512;
    p.seed = 31;
    return chartgen::gen_dead_leaves(p);
  }();
  return c;
}

DeviceProfile blur_only(double sigma) {
  DeviceProfile d;
  d.device_id = "b";
  d.blur_sigma = sigma;
  return d;
}

// Laplacian correlation ratio written out with a 5-point stencil per pixel.
double label_oracle(const ImageF& ref, const ImageF& cap, const Rect& r) {
  auto lap = [](const ImageF& im, int y, int x) {
    return im.at(y - 1, x) + im.at(y + 1, x) + im.at(y, x - 1) + im.at(y, x + 1) - 4 * im.at(y, x);
  };
  double num = 0.0;
  double den = 0.0;
  for (int y = r.y; y < r.y + r.h; ++y) {
    for (int x = r.x; x < r.x + r.w; ++x) {
      num += lap(cap, y, x) * lap(ref, y, x);
      den += lap(ref, y, x) * lap(ref, y, x);
    }
  }
  return std::clamp(num / den, 0.0, 1.0);
}

TEST(Simulate, ZeroParametersIsIdentity) {
  DeviceProfile d;
  d.device_id = "id";
  const ImageF out = simulate(chart(), d);
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out.data()[i], chart().data()[i], 1e-6);
}

TEST(Simulate, BlurMatchesGaussianOtf) {
  const auto m = spectral::mtf_fr(simulate(chart(), blur_only(2.0)), chart());
  EXPECT_NEAR(spectral::interpolate(m.base, 0.1), 0.4539, 0.05);
}

TEST(Simulate, NoiseResidualStd) {
  // Mid-grey input keeps clamping out of the picture.
  const ImageF flat(256, 256, 1, 0.5);
  DeviceProfile d;
  d.device_id = "n";
  d.noise_sigma = 0.05;
  d.seed = 4;
  const ImageF out = simulate(flat, d);
  ImageF resid = out;
  for (double& v : resid.data()) v -= 0.5;
  EXPECT_NEAR(std::sqrt(variance(resid)), 0.05, 0.002);
}

TEST(Simulate, DeterministicGivenSeed) {
  DeviceProfile d = blur_only(1.0);
  d.noise_sigma = 0.02;
  d.denoise_strength = 0.5;
  d.sharpen_amount = 0.3;
  d.exposure_ev = 0.2;
  d.seed = 7;
  EXPECT_EQ(simulate(chart(), d).data(), simulate(chart(), d).data());
  d.seed = 8;
  EXPECT_NE(simulate(chart(), d).data(), simulate(chart(), blur_only(1.0)).data());
}

TEST(Simulate, OutputClamped) {
  DeviceProfile d;
  d.device_id = "e";
  d.exposure_ev = 1.0;
  d.noise_sigma = 0.2;
  d.sharpen_amount = 1.0;
  for (double v : simulate(chart(), d).data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Simulate, RejectsOutOfRangeProfile) {
  DeviceProfile d;
  d.denoise_strength = 1.5;
  EXPECT_THROW(simulate(chart(), d), ConfigError);
  d = DeviceProfile{};
  d.blur_sigma = -1.0;
  EXPECT_THROW(simulate(chart(), d), ConfigError);
}

TEST(Denoise, ZeroStrengthIsIdentity) {
  ImageF noisy = chart();
  Rng rng(2);
  for (double& v : noisy.data()) v += 0.05 * rng.normal();
  const ImageF out = denoise(noisy, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out.data()[i], noisy.data()[i], 1e-9);
}

TEST(Denoise, FlatRegionsLoseMoreNoiseThanTexture) {
  const ImageF flat(128, 128, 1, 0.5);
  ImageF noisy_flat = flat;
  ImageF noisy_tex = crop(chart(), Rect{0, 0, 128, 128});
  const ImageF tex = noisy_tex;
  Rng rng(5);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double n = 0.03 * rng.normal();
    noisy_flat.data()[i] += n;
    noisy_tex.data()[i] += n;
  }
  auto resid = [](const ImageF& a, const ImageF& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(a.data()[i] - b.data()[i], 2);
    return std::sqrt(s / a.size());
  };
  const double flat_left = resid(denoise(noisy_flat, 1.0), flat);
  const double tex_left = resid(denoise(noisy_tex, 1.0), tex);
  EXPECT_LT(flat_left, 0.5 * 0.03);
  EXPECT_GT(tex_left, flat_left);
}

TEST(OracleLabel, PerfectRetention) { EXPECT_EQ(oracle_label(chart(), chart()), 1.0); }

TEST(OracleLabel, ConstantCaptureScoresZero) {
  EXPECT_EQ(oracle_label(chart(), ImageF(512, 512, 1, 0.4)), 0.0);
}

TEST(OracleLabel, MatchesStencilOracle) {
  const Rect win{100, 120, 96, 80};
  const ImageF cap = simulate(chart(), blur_only(1.3));
  EXPECT_NEAR(oracle_label(chart(), cap, win), label_oracle(chart(), cap, win), 1e-12);
}

TEST(OracleLabel, StrictlyDecreasingInBlur) {
  double prev = 1.0 + 1e-12;
  for (double s : {0.5, 1.0, 2.0, 4.0}) {
    const double l = oracle_label(chart(), simulate(chart(), blur_only(s)));
    EXPECT_LT(l, prev) << "sigma " << s;
    prev = l;
  }
  prev = 1.0 + 1e-12;
  for (double s : {0.3, 0.6, 0.9, 1.2, 1.6, 2.0, 2.6, 3.2}) {
    const double l = oracle_label(chart(), simulate(chart(), blur_only(s)));
    EXPECT_LT(l, prev) << "sigma " << s;
    prev = l;
  }
}

TEST(OracleLabel, WindowBounds) {
  EXPECT_THROW(oracle_label(chart(), chart(), Rect{0, 0, 10, 10}), BoundsError);
  EXPECT_THROW(oracle_label(chart(), chart(), Rect{500, 500, 20, 20}), BoundsError);
  EXPECT_THROW(oracle_label(chart(), ImageF(100, 100)), SizeError);
}

TEST(Fleet, SingleDevice) {
  const auto f = gen_fleet(1, 1, 3);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_NO_THROW(f[0].validate());
}

TEST(Fleet, DeterministicAndBrandPartition) {
  const auto a = gen_fleet(30, 6, 11);
  const auto b = gen_fleet(30, 6, 11);
  ASSERT_EQ(a.size(), 30u);
  std::set<int> brands;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(to_json(a[i]), to_json(b[i]));
    EXPECT_GE(a[i].brand_id, 0);
    EXPECT_LT(a[i].brand_id, 6);
    EXPECT_NO_THROW(a[i].validate());
    brands.insert(a[i].brand_id);
    ids.insert(a[i].device_id);
  }
  EXPECT_EQ(brands.size(), 6u);
  EXPECT_EQ(ids.size(), 30u);
}

TEST(Fleet, LabelSpread) {
  const auto fleet = gen_fleet(20, 5, 4);
  const ImageF ref = fleet_reference_chart(4);
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& d : fleet) {
    const double l = oracle_label(ref, simulate(ref, d));
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  EXPECT_GE(hi - lo, 0.5);
}

TEST(Fleet, UnsatisfiableSpread) {
  FleetOptions o;
  o.min_label_spread = 1.5;
  o.max_redraws = 3;
  EXPECT_THROW(gen_fleet(4, 2, 1, o), DataError);
  EXPECT_THROW(gen_fleet(2, 3, 1), ConfigError);
}

TEST(Fleet, JsonRoundTrip) {
  const auto fleet = gen_fleet(6, 2, 9);
  const auto back = fleet_from_json(nlohmann::json::parse(fleet_to_json(fleet, 9).dump()));
  ASSERT_EQ(back.size(), fleet.size());
  for (std::size_t i = 0; i < fleet.size(); ++i) EXPECT_EQ(to_json(back[i]), to_json(fleet[i]));
}

}  // namespace
}  // namespace dr2s::devsim
