#include "dr2s/simd/kernels.hpp"

namespace dr2s::simd {

namespace {

template <typename T>
void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void gemv_acc(const T* x, const T* w, T* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T xr = x[r];
    const T* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * wr[c];
  }
}

template <typename T>
void gemv_t_acc(const T* w, const T* y, T* x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) x[r] += dot(w + r * cols, y, cols);
}

template <typename T>
void ger_acc(const T* x, const T* y, T* a, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(x[r], y, a + r * cols, cols);
}

template <typename T>
void sqdiff_acc(const T* x, const T* m, T* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x[i] - m[i];
    acc[i] += d * d;
  }
}

template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
constexpr Kernels<T> make() {
  return Kernels<T>{&axpy<T>, &dot<T>, &gemv_acc<T>, &gemv_t_acc<T>, &ger_acc<T>, &sqdiff_acc<T>, &gemm_acc<T>};
}

constexpr KernelTable kScalar{"scalar", make<float>(), make<double>()};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace dr2s::simd
