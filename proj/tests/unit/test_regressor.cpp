#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dr2s/chartgen/charts.hpp"
#include "dr2s/core/error.hpp"
#include "dr2s/devsim/device.hpp"
#include "dr2s/regressor/checkpoint.hpp"
#include "dr2s/regressor/net.hpp"
#include "dr2s/regressor/train.hpp"
#include "ref_net.hpp"
#include "test_support.hpp"

namespace dr2s::regressor {
namespace {

using dr2s::testing::random_image;

RegressorNet random_net(int cin, int c, std::uint64_t seed) {
  RegressorNet net = RegressorNet::he_init(cin, c, seed);
  Rng rng(seed ^ 0x5eed);
  for (int l = 0; l < kBlocks; ++l) {
    for (int k = 0; k < net.block_out(l); ++k) net.params()[net.bias_offset(l) + k] = rng.uniform(-0.05, 0.1);
  }
  net.params()[net.head_bias_offset()] = rng.uniform(-0.5, 0.5);
  return net;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dr2s_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TEST(Forward, ZeroHeadGivesOneHalf) {
  RegressorNet net = RegressorNet::he_init(1, 8, 3);
  for (int c = 0; c <= net.feature_channels(); ++c) net.params()[net.head_offset() + c] = 0.0;
  EXPECT_EQ(forward(net, random_image(48, 40, 1, 1)).score, 0.5);
}

TEST(Forward, DegenerateNetByHand) {
  RegressorNet net(1, 4);
  const double biases[4] = {0.3, -0.2, 0.7, 0.0};
  for (int l = 0; l < kBlocks; ++l) {
    for (int k = 0; k < net.block_out(l); ++k) net.params()[net.bias_offset(l) + k] = biases[l] + 0.1 * k;
  }
  const double a[4] = {0.5, -1.0, 2.0, 0.25};
  for (int c = 0; c < 4; ++c) net.params()[net.head_offset() + c] = a[c];
  net.params()[net.head_bias_offset()] = -0.1;
  // Psi = relu(b3) = {0, 0.1, 0.2, 0.3} everywhere.
  const double z = 0.5 * 0 - 1.0 * 0.1 + 2.0 * 0.2 + 0.25 * 0.3 - 0.1;
  const auto r = forward(net, random_image(64, 64, 1, 2));
  EXPECT_NEAR(r.score, 1.0 / (1.0 + std::exp(-z)), 1e-15);
  for (int y = 0; y < r.psi.height; ++y) {
    for (int x = 0; x < r.psi.width; ++x) EXPECT_DOUBLE_EQ(r.psi.at(y, x, 3), 0.3);
  }
}

TEST(Forward, MatchesReferenceImplementation) {
  for (auto [w, h, cin] : {std::tuple{64, 64, 1}, std::tuple{56, 40, 1}, std::tuple{33, 35, 3}}) {
    const RegressorNet net = random_net(cin, 32, 11 + w);
    const ImageF patch = random_image(w, h, cin, 7 + h);
    const dr2s::testing::RefNet ref(net, patch);
    const auto r = forward(net, patch);
    EXPECT_NEAR(r.score, ref.score(), 1e-6);
    const auto& psi = ref.layers.back().act;
    ASSERT_EQ(r.psi.values.size(), psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) ASSERT_NEAR(r.psi.values[i], psi[i], 1e-9);
    EXPECT_NEAR(forward(net, patch, Precision::Float).score, ref.score(), 1e-4);
  }
}

TEST(Forward, InputChecks) {
  const RegressorNet net = RegressorNet::he_init(1, 8, 1);
  EXPECT_THROW(forward(net, ImageF(31, 64)), SizeError);
  EXPECT_THROW(forward(net, ImageF(64, 64, 3)), SizeError);
  EXPECT_NO_THROW(forward(net, ImageF(32, 32)));
}

TEST(Forward, ScoreStrictlyInsideUnitInterval) {
  RegressorNet net = RegressorNet::he_init(1, 8, 1);
  for (double b : {-1e4, -800.0, -40.0, 40.0, 800.0, 1e4}) {
    net.params()[net.head_bias_offset()] = b;
    const double s = forward(net, random_image(32, 32, 1, 4)).score;
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Forward, FullyConvolutionalConsistency) {
  const RegressorNet net = random_net(1, 16, 5);
  for (int w : {64, 96}) {
    const ImageF patch = random_image(w, w, 1, w);
    ImageF padded(w + kDownsample, w + kDownsample, 1, 0.0);
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) padded.at(y, x) = patch.at(y, x);
    }
    const auto a = forward(net, patch).psi;
    const auto b = forward(net, padded).psi;
    ASSERT_EQ(b.height, a.height + 1);
    // The last row and column of the smaller map see its own zero padding.
    for (int y = 0; y + 1 < a.height; ++y) {
      for (int x = 0; x + 1 < a.width; ++x) {
        for (int c = 0; c < a.channels; ++c) ASSERT_NEAR(a.at(y, x, c), b.at(y, x, c), 1e-5);
      }
    }
  }
}

TEST(Huber, Examples) {
  EXPECT_EQ(huber(0.3, 0.3, 0.1), 0.0);
  EXPECT_NEAR(huber(0.5, 0.45, 0.1), 0.00125, 1e-15);
  EXPECT_NEAR(huber(0.5, 0.2, 0.1), 0.025, 1e-15);
  EXPECT_NEAR(huber(0.2, 0.5, 0.1), 0.025, 1e-15);
}

TEST(Huber, GradientContinuousAtBranchPoint) {
  const double d = 0.1;
  const double y = 0.5;
  // Both branch formulas give |g| = delta at the branch point itself.
  EXPECT_NEAR(std::abs(huber_grad(y, y + d, d)), d, 1e-15);
  EXPECT_NEAR(std::abs(huber_grad(y, y + d + 1e-12, d)), d, 1e-15);
  // Two-sided probe at delta -+ 1e-6: |g| is 1-Lipschitz in the residual, so
  // the jump is the probe offset itself, nothing more.
  for (double sgn : {1.0, -1.0}) {
    const double inside = std::abs(huber_grad(y, y + sgn * (d - 1e-6), d));
    const double outside = std::abs(huber_grad(y, y + sgn * (d + 1e-6), d));
    EXPECT_LE(std::abs(outside - inside), 1e-6 + 1e-12);
  }
  // Loss values match across the branch point.
  EXPECT_NEAR(huber(y, y + d - 1e-9, d), huber(y, y + d + 1e-9, d), 1e-9);
}

TEST(Backward, ZeroAtTarget) {
  const RegressorNet net = random_net(1, 8, 9);
  const ImageF patch = random_image(32, 32, 1, 9);
  const double y = forward(net, patch).score;
  for (double g : backward(net, patch, y, 0.1)) EXPECT_EQ(g, 0.0);
}

TEST(Backward, DeltaProbeMatchesRecompute) {
  const RegressorNet net = random_net(1, 8, 21);
  const ImageF patch = random_image(32, 32, 1, 21);
  const dr2s::testing::RefNet ref(net, patch);
  Rng rng(4);
  for (int k = 0; k < 40; ++k) {
    const std::size_t i = rng.uniform_int(net.param_count());
    RegressorNet moved = net;
    moved.params()[i] += 1e-3;
    bool kink = false;
    const double dz = ref.logit_delta(i, 1e-3, kink);
    const double full = dr2s::testing::RefNet(moved, patch).logit - ref.logit;
    EXPECT_NEAR(dz, full, 1e-12) << net.param_name(i);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t checked = 0;
  std::size_t kinks = 0;
  double worst = 0.0;
  // The acceptance suite runs the full 100 configurations.
  for (int cfg = 0; cfg < 25; ++cfg) {
    const RegressorNet net = random_net(1, 8, 1000 + cfg);
    const ImageF patch = random_image(32, 32, 1, 2000 + cfg);
    Rng rng(3000 + cfg);
    const double s = forward(net, patch).score;
    double y = rng.uniform();
    while (std::abs(std::abs(y - s) - 0.1) < 1e-3) y = rng.uniform();
    const auto g = dr2s::testing::check_gradient(net, patch, y, 0.1, backward(net, patch, y, 0.1));
    EXPECT_LT(g.worst_rel, 1e-4) << "config " << cfg << " " << net.param_name(g.worst_index)
                                 << " analytic " << g.worst_analytic << " numeric " << g.worst_numeric;
    checked += g.checked;
    kinks += g.kinks;
    worst = std::max(worst, g.worst_rel);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("checked %zu components, %zu skipped at ReLU kinks, worst rel %.3g, %.1f s\n", checked, kinks,
              worst, secs);
  EXPECT_LT(static_cast<double>(kinks), 0.01 * static_cast<double>(checked + kinks));
}

TEST(Net, ParameterNames) {
  const RegressorNet net(1, 8);
  EXPECT_EQ(net.param_name(0), "conv0.w[0][0][0][0]");
  EXPECT_EQ(net.param_name(net.bias_offset(1) + 2), "conv1.b[2]");
  EXPECT_EQ(net.param_name(net.head_offset() + 3), "head.A[3]");
  EXPECT_EQ(net.param_name(net.head_bias_offset()), "head.b");
  EXPECT_EQ(net.param_count(), net.head_bias_offset() + 1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{0.5, -1.25, 3.0};
  const auto before = p;
  Adam opt(3);
  opt.step(p, {0.0, 0.0, 0.0}, 1e-3);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  std::vector<double> p{1.0, 1.0};
  Adam opt(2);
  opt.step(p, {0.5, -2.0}, 0.01);
  // m_hat = g and v_hat = g^2 after bias correction.
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], 1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
}

std::vector<devsim::LabeledCapture> captures(const ImageF& chart, std::initializer_list<std::pair<double, double>> blur_label) {
  std::vector<devsim::LabeledCapture> out;
  int i = 0;
  for (auto [blur, label] : blur_label) {
    devsim::DeviceProfile d;
    d.device_id = "d" + std::to_string(i++);
    d.blur_sigma = blur;
    out.push_back({devsim::simulate(chart, d), label, d, "c"});
  }
  return out;
}

ImageF small_chart(std::uint64_t seed, int size = 128) {
  chartgen::DeadLeavesParams p;
  p.size = size;
  p.r_min = 1.0;
  p.r_max = 24.0;
  p.seed = seed;
  return chartgen::gen_dead_leaves(p);
}

TEST(Train, DeterministicGivenSeed) {
  const auto data = captures(small_chart(1, 96), {{0.5, 0.8}, {2.0, 0.3}});
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.patches_per_image = 4;
  cfg.batch_size = 3;
  const Rect region{0, 0, 96, 96};
  const auto a = train(data, std::span(&region, 1), cfg);
  const auto b = train(data, std::span(&region, 1), cfg);
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  ASSERT_EQ(a.loss_trace.size(), 3u);
  cfg.seed = 2;
  EXPECT_NE(train(data, std::span(&region, 1), cfg).net.params(), a.net.params());
}

TEST(Train, OverfitsSingleSample) {
  const auto data = captures(small_chart(3, 96), {{1.0, 0.7}});
  TrainConfig cfg;
  const Rect region{0, 0, 96, 96};
  const auto r = train(data, std::span(&region, 1), cfg);
  ASSERT_EQ(r.loss_trace.size(), 120u);
  EXPECT_NEAR(forward(r.net, crop(data[0].image, Rect{16, 16, 64, 64})).score, 0.7, 0.02);
}

TEST(Train, SeparatesTwoBlurGroups) {
  const ImageF chart = small_chart(5, 192);
  const auto data = captures(chart, {{0.4, 0.8}, {0.6, 0.8}, {0.5, 0.8}, {2.2, 0.2}, {2.6, 0.2}, {2.4, 0.2}});
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.decay_every = 15;
  const Rect region{0, 0, 192, 192};
  const auto r = train(data, std::span(&region, 1), cfg);
  // Held out: a different chart, unseen blur levels.
  const auto held = captures(small_chart(6, 192), {{0.45, 0.8}, {0.55, 0.8}, {2.3, 0.2}, {2.5, 0.2}});
  Rng rng(8);
  double worst_sharp = 1.0;
  double best_blurry = 0.0;
  for (const auto& h : held) {
    for (const Rect& p : sample_patch_rects(h.image.bounds(), 64, 8, rng)) {
      const double s = forward(r.net, crop(h.image, p)).score;
      if (h.label > 0.5) {
        worst_sharp = std::min(worst_sharp, s);
      } else {
        best_blurry = std::max(best_blurry, s);
      }
    }
  }
  EXPECT_GT(worst_sharp, best_blurry);
}

TEST(Train, InputErrors) {
  TrainConfig cfg;
  const Rect region{0, 0, 96, 96};
  EXPECT_THROW(train({}, std::span(&region, 1), cfg), DataError);
  auto data = captures(small_chart(1, 96), {{0.5, 0.8}});
  const Rect outside{50, 50, 96, 96};
  EXPECT_THROW(train(data, std::span(&outside, 1), cfg), BoundsError);
  const Rect tiny{0, 0, 40, 40};
  EXPECT_THROW(train(data, std::span(&tiny, 1), cfg), ConfigError);
  data[0].image.at(10, 10) = std::nan("");
  cfg.aug_noise_max = 0.0;
  EXPECT_THROW(train(data, std::span(&region, 1), cfg), NumericError);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
  TrainConfig c;
  c.epochs = 30;
  c.precision = Precision::Double;
  c.seed = 77;
  const auto back = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json({{"epochz", 3}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"huber_delta", 0.0}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"precision", "half"}}), ConfigError);
  EXPECT_DOUBLE_EQ(c.lr_at(0), 3e-3);
  EXPECT_DOUBLE_EQ(c.lr_at(39), 3e-3);
  EXPECT_NEAR(c.lr_at(40), 3e-4, 1e-18);
  EXPECT_NEAR(c.lr_at(119), 3e-5, 1e-18);
  EXPECT_THROW(train_config_from_json({{"warmup_steps", -1}}), ConfigError);
}

TEST(TrainConfigJson, WarmupRampsLinearly) {
  TrainConfig c;
  c.warmup_steps = 100;
  EXPECT_DOUBLE_EQ(c.lr_at(0, 0), 3e-5);
  EXPECT_DOUBLE_EQ(c.lr_at(0, 49), 1.5e-3);
  EXPECT_DOUBLE_EQ(c.lr_at(0, 99), 3e-3);
  EXPECT_DOUBLE_EQ(c.lr_at(0, 5000), 3e-3);
  EXPECT_NEAR(c.lr_at(40, 5000), 3e-4, 1e-18);
  c.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(c.lr_at(0, 0), 3e-3);
}

TEST(Train, HeadStartsAtLabelPrior) {
  // With a vanishing learning rate the head bias stays at logit(mean label).
  const auto data = captures(small_chart(2, 96), {{0.5, 0.1}, {1.0, 0.3}});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 1e-14;
  const Rect region{0, 0, 96, 96};
  const auto r = train(data, std::span(&region, 1), cfg);
  EXPECT_NEAR(r.net.params()[r.net.head_bias_offset()], std::log(0.2 / 0.8), 1e-9);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = temp_dir("ckpt");
  const RegressorNet net = random_net(3, 12, 4);
  save_checkpoint(dir / "net.bin", net, {{"seed", 4}});
  const RegressorNet back = load_checkpoint(dir / "net.bin");
  EXPECT_EQ(back.params(), net.params());
  EXPECT_EQ(back.in_channels(), 3);
  EXPECT_EQ(back.feature_channels(), 12);
  EXPECT_EQ(load_checkpoint_meta(dir / "net.bin")["seed"], 4);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto dir = temp_dir("ckpt_bad");
  const auto path = dir / "net.bin";
  save_checkpoint(path, random_net(1, 8, 1));
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("net.bin"), std::string::npos);
  }
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(load_checkpoint(path), IntegrityError);
  EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
}

}  // namespace
}  // namespace dr2s::regressor
