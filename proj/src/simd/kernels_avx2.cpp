// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "dr2s/simd/kernels.hpp"

namespace dr2s::simd::avx2 {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  return _mm_cvtss_f32(_mm_add_ss(lo, sh));
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void axpy_f(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m256 y0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
    __m256 y1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8));
    _mm256_storeu_ps(y + i, y0);
    _mm256_storeu_ps(y + i + 8, y1);
  }
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_d(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    __m256d y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4));
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f(const float* x, const float* y, std::size_t n) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), s1);
  }
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
  }
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double dot_d(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// y[c] += sum_r x[r] * w[r][c]. Output tiles of 32 floats stay in registers
// across the reduction over rows.
void gemv_acc_f(const float* x, const float* w, float* y, std::size_t rows, std::size_t cols) {
  std::size_t c = 0;
  for (; c + 32 <= cols; c += 32) {
    __m256 a0 = _mm256_loadu_ps(y + c);
    __m256 a1 = _mm256_loadu_ps(y + c + 8);
    __m256 a2 = _mm256_loadu_ps(y + c + 16);
    __m256 a3 = _mm256_loadu_ps(y + c + 24);
    for (std::size_t r = 0; r < rows; ++r) {
      const __m256 xr = _mm256_set1_ps(x[r]);
      const float* wr = w + r * cols + c;
      a0 = _mm256_fmadd_ps(xr, _mm256_loadu_ps(wr), a0);
      a1 = _mm256_fmadd_ps(xr, _mm256_loadu_ps(wr + 8), a1);
      a2 = _mm256_fmadd_ps(xr, _mm256_loadu_ps(wr + 16), a2);
      a3 = _mm256_fmadd_ps(xr, _mm256_loadu_ps(wr + 24), a3);
    }
    _mm256_storeu_ps(y + c, a0);
    _mm256_storeu_ps(y + c + 8, a1);
    _mm256_storeu_ps(y + c + 16, a2);
    _mm256_storeu_ps(y + c + 24, a3);
  }
  for (; c + 8 <= cols; c += 8) {
    __m256 a0 = _mm256_loadu_ps(y + c);
    for (std::size_t r = 0; r < rows; ++r) {
      a0 = _mm256_fmadd_ps(_mm256_set1_ps(x[r]), _mm256_loadu_ps(w + r * cols + c), a0);
    }
    _mm256_storeu_ps(y + c, a0);
  }
  for (; c < cols; ++c) {
    float s = y[c];
    for (std::size_t r = 0; r < rows; ++r) s += x[r] * w[r * cols + c];
    y[c] = s;
  }
}

void gemv_acc_d(const double* x, const double* w, double* y, std::size_t rows, std::size_t cols) {
  std::size_t c = 0;
  for (; c + 16 <= cols; c += 16) {
    __m256d a0 = _mm256_loadu_pd(y + c);
    __m256d a1 = _mm256_loadu_pd(y + c + 4);
    __m256d a2 = _mm256_loadu_pd(y + c + 8);
    __m256d a3 = _mm256_loadu_pd(y + c + 12);
    for (std::size_t r = 0; r < rows; ++r) {
      const __m256d xr = _mm256_set1_pd(x[r]);
      const double* wr = w + r * cols + c;
      a0 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(wr), a0);
      a1 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(wr + 4), a1);
      a2 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(wr + 8), a2);
      a3 = _mm256_fmadd_pd(xr, _mm256_loadu_pd(wr + 12), a3);
    }
    _mm256_storeu_pd(y + c, a0);
    _mm256_storeu_pd(y + c + 4, a1);
    _mm256_storeu_pd(y + c + 8, a2);
    _mm256_storeu_pd(y + c + 12, a3);
  }
  for (; c + 4 <= cols; c += 4) {
    __m256d a0 = _mm256_loadu_pd(y + c);
    for (std::size_t r = 0; r < rows; ++r) {
      a0 = _mm256_fmadd_pd(_mm256_set1_pd(x[r]), _mm256_loadu_pd(w + r * cols + c), a0);
    }
    _mm256_storeu_pd(y + c, a0);
  }
  for (; c < cols; ++c) {
    double s = y[c];
    for (std::size_t r = 0; r < rows; ++r) s += x[r] * w[r * cols + c];
    y[c] = s;
  }
}

void gemv_t_acc_f(const float* w, const float* y, float* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) x[r] += dot_f(w + r * cols, y, cols);
}

void gemv_t_acc_d(const double* w, const double* y, double* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) x[r] += dot_d(w + r * cols, y, cols);
}

void ger_acc_f(const float* x, const float* y, float* a, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_f(x[r], y, a + r * cols, cols);
}

void ger_acc_d(const double* x, const double* y, double* a, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy_d(x[r], y, a + r * cols, cols);
}

void sqdiff_acc_f(const float* x, const float* m, float* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(m + i));
    _mm256_storeu_ps(acc + i, _mm256_fmadd_ps(d, d, _mm256_loadu_ps(acc + i)));
  }
  for (; i < n; ++i) {
    const float d = x[i] - m[i];
    acc[i] += d * d;
  }
}

void sqdiff_acc_d(const double* x, const double* m, double* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(m + i));
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(d, d, _mm256_loadu_pd(acc + i)));
  }
  for (; i < n; ++i) {
    const double d = x[i] - m[i];
    acc[i] += d * d;
  }
}

struct VecF {
  using T = float;
  using V = __m256;
  static constexpr std::size_t kWidth = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
};

struct VecD {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t kWidth = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
};

// R rows by NV vectors of C held in registers for the whole reduction.
template <class S, int R, int NV>
inline void gemm_tile(const typename S::T* a, std::size_t lda, const typename S::T* b, std::size_t ldb,
                      typename S::T* c, std::size_t ldc, std::size_t k) {
  typename S::V acc[R][NV];
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < NV; ++v) acc[r][v] = S::load(c + r * ldc + v * S::kWidth);
  }
  for (std::size_t p = 0; p < k; ++p) {
    typename S::V bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = S::load(b + p * ldb + v * S::kWidth);
    for (int r = 0; r < R; ++r) {
      const typename S::V av = S::set1(a[r * lda + p]);
      for (int v = 0; v < NV; ++v) acc[r][v] = S::fma(av, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < NV; ++v) S::store(c + r * ldc + v * S::kWidth, acc[r][v]);
  }
}

template <class S>
void gemm_acc(const typename S::T* a, const typename S::T* b, typename S::T* c, std::size_t m, std::size_t k,
              std::size_t n) {
  constexpr std::size_t w = S::kWidth;
  std::size_t j = 0;
  // Column panels share A; the panel offset moves B and C only.
  auto panel = [&](auto nv) {
    constexpr int NV = decltype(nv)::value;
    for (std::size_t i = 0; i < m; i += 6) {
      const std::size_t rows = std::min<std::size_t>(6, m - i);
      switch (rows) {
        case 6: gemm_tile<S, 6, NV>(a + i * k, k, b + j, n, c + i * n + j, n, k); break;
        case 5: gemm_tile<S, 5, NV>(a + i * k, k, b + j, n, c + i * n + j, n, k); break;
        case 4: gemm_tile<S, 4, NV>(a + i * k, k, b + j, n, c + i * n + j, n, k); break;
        case 3: gemm_tile<S, 3, NV>(a + i * k, k, b + j, n, c + i * n + j, n, k); break;
        case 2: gemm_tile<S, 2, NV>(a + i * k, k, b + j, n, c + i * n + j, n, k); break;
        default: gemm_tile<S, 1, NV>(a + i * k, k, b + j, n, c + i * n + j, n, k); break;
      }
    }
  };
  for (; j + 2 * w <= n; j += 2 * w) panel(std::integral_constant<int, 2>{});
  for (; j + w <= n; j += w) panel(std::integral_constant<int, 1>{});
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      typename S::T s = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[p * n + j], s);
      c[i * n + j] = s;
    }
  }
}

void gemm_acc_f(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_acc<VecF>(a, b, c, m, k, n);
}

void gemm_acc_d(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_acc<VecD>(a, b, c, m, k, n);
}

}  // namespace

const KernelTable& table() {
  static constexpr KernelTable kAvx2{
      "avx2",
      Kernels<float>{&axpy_f, &dot_f, &gemv_acc_f, &gemv_t_acc_f, &ger_acc_f, &sqdiff_acc_f, &gemm_acc_f},
      Kernels<double>{&axpy_d, &dot_d, &gemv_acc_d, &gemv_t_acc_d, &ger_acc_d, &sqdiff_acc_d, &gemm_acc_d}};
  return kAvx2;
}

}  // namespace dr2s::simd::avx2
