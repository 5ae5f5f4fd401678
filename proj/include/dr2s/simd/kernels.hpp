#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops shared by the convolution engine and the image
// operators. Every kernel has a portable scalar reference; an AVX2+FMA build
// is selected at runtime when the CPU supports it. Results of the two paths
// agree to rounding (summation order differs), not bit-for-bit.
//
// Matrix arguments are row-major with `rows` x `cols` elements.

namespace dr2s::simd {

template <typename T>
struct Kernels {
  /// y[i] += a * x[i]
  void (*axpy)(T a, const T* x, T* y, std::size_t n);
  /// sum_i x[i] * y[i]
  T (*dot)(const T* x, const T* y, std::size_t n);
  /// y[c] += sum_r x[r] * w[r][c]
  void (*gemv_acc)(const T* x, const T* w, T* y, std::size_t rows, std::size_t cols);
  /// x[r] += sum_c w[r][c] * y[c]
  void (*gemv_t_acc)(const T* w, const T* y, T* x, std::size_t rows, std::size_t cols);
  /// a[r][c] += x[r] * y[c]
  void (*ger_acc)(const T* x, const T* y, T* a, std::size_t rows, std::size_t cols);
  /// acc[i] += (x[i] - m[i])^2
  void (*sqdiff_acc)(const T* x, const T* m, T* acc, std::size_t n);
  /// c[i][j] += sum_p a[i][p] * b[p][j] for an m x k by k x n product. Each
  /// output sums over p in increasing order on every path.
  void (*gemm_acc)(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
};

struct KernelTable {
  std::string_view name;
  Kernels<float> f32;
  Kernels<double> f64;

  template <typename T>
  const Kernels<T>& get() const {
    if constexpr (sizeof(T) == sizeof(float)) {
      return f32;
    } else {
      return f64;
    }
  }
};

const KernelTable& scalar_kernels();

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

/// Selected once per process: AVX2 when available, unless the environment
/// variable DR2S_SIMD=scalar forces the reference path.
const KernelTable& active_kernels();

}  // namespace dr2s::simd
