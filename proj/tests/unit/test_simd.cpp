#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dr2s/core/rng.hpp"
#include "dr2s/simd/kernels.hpp"

namespace dr2s::simd {
namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename T>
double tol() {
  return sizeof(T) == 4 ? 1e-4 : 1e-12;
}

// Each optimized table must agree with the scalar reference on every kernel,
// including lengths that exercise the vector tails.
template <typename T>
void check_equivalence(const KernelTable& opt) {
  const auto& ref = scalar_kernels().get<T>();
  const auto& k = opt.get<T>();
  Rng rng(2024);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 32u, 33u, 64u, 100u}) {
    auto x = random_vec<T>(n, rng);
    auto y = random_vec<T>(n, rng);
    auto y2 = y;
    ref.axpy(T(0.7), x.data(), y.data(), n);
    k.axpy(T(0.7), x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], y2[i], tol<T>());
    EXPECT_NEAR(ref.dot(x.data(), y.data(), n), k.dot(x.data(), y.data(), n), tol<T>() * (1 + n));

    auto a = random_vec<T>(n, rng);
    auto a2 = a;
    ref.sqdiff_acc(x.data(), y.data(), a.data(), n);
    k.sqdiff_acc(x.data(), y.data(), a2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], a2[i], tol<T>());
  }
  for (std::size_t rows : {1u, 9u, 16u, 64u}) {
    for (std::size_t cols : {1u, 5u, 8u, 16u, 24u, 32u, 40u, 64u}) {
      auto x = random_vec<T>(rows, rng);
      auto w = random_vec<T>(rows * cols, rng);
      auto y = random_vec<T>(cols, rng);
      auto y2 = y;
      ref.gemv_acc(x.data(), w.data(), y.data(), rows, cols);
      k.gemv_acc(x.data(), w.data(), y2.data(), rows, cols);
      for (std::size_t i = 0; i < cols; ++i) EXPECT_NEAR(y[i], y2[i], tol<T>() * rows);

      auto xr = x;
      auto xr2 = x;
      ref.gemv_t_acc(w.data(), y.data(), xr.data(), rows, cols);
      k.gemv_t_acc(w.data(), y.data(), xr2.data(), rows, cols);
      for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(xr[i], xr2[i], tol<T>() * cols);

      auto g = w;
      auto g2 = w;
      ref.ger_acc(x.data(), y.data(), g.data(), rows, cols);
      k.ger_acc(x.data(), y.data(), g2.data(), rows, cols);
      for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], g2[i], tol<T>());
    }
  }
  // Row counts around the 6-row tile, column counts around 8/16-wide panels.
  for (std::size_t m : {1u, 5u, 6u, 7u, 13u, 64u}) {
    for (std::size_t kd : {1u, 9u, 27u, 144u}) {
      for (std::size_t n : {1u, 3u, 8u, 9u, 16u, 17u, 24u, 33u, 64u}) {
        auto a = random_vec<T>(m * kd, rng);
        auto b = random_vec<T>(kd * n, rng);
        auto c = random_vec<T>(m * n, rng);
        auto c2 = c;
        ref.gemm_acc(a.data(), b.data(), c.data(), m, kd, n);
        k.gemm_acc(a.data(), b.data(), c2.data(), m, kd, n);
        for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], c2[i], tol<T>() * kd) << m << "x" << kd << "x" << n;
      }
    }
  }
}

TEST(Kernels, ActiveTableIsKnown) {
  const auto& t = active_kernels();
  EXPECT_TRUE(t.name == "scalar" || t.name == "avx2");
}

TEST(Kernels, Avx2MatchesScalarFloat) {
  const KernelTable* t = avx2_kernels();
  if (t == nullptr) GTEST_SKIP() << "AVX2 not available";
  check_equivalence<float>(*t);
}

TEST(Kernels, Avx2MatchesScalarDouble) {
  const KernelTable* t = avx2_kernels();
  if (t == nullptr) GTEST_SKIP() << "AVX2 not available";
  check_equivalence<double>(*t);
}

TEST(Kernels, ScalarGemvDefinition) {
  // 2x3 example by hand: y += [1 2] * [[1 2 3],[4 5 6]] = [9 12 15].
  const double x[2] = {1, 2};
  const double w[6] = {1, 2, 3, 4, 5, 6};
  double y[3] = {0, 0, 0};
  scalar_kernels().f64.gemv_acc(x, w, y, 2, 3);
  EXPECT_EQ(y[0], 9);
  EXPECT_EQ(y[1], 12);
  EXPECT_EQ(y[2], 15);
}

TEST(Kernels, ScalarGemmDefinition) {
  // [[1 2],[3 4]] * [[5 6 7],[8 9 10]] = [[21 24 27],[47 54 61]], added to 1.
  const double a[4] = {1, 2, 3, 4};
  const double b[6] = {5, 6, 7, 8, 9, 10};
  double c[6] = {1, 1, 1, 1, 1, 1};
  scalar_kernels().f64.gemm_acc(a, b, c, 2, 2, 3);
  const double want[6] = {22, 25, 28, 48, 55, 62};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(c[i], want[i]);
}

}  // namespace
}  // namespace dr2s::simd
