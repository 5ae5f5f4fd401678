#include <cstdlib>
#include <string_view>

#include "dr2s/simd/kernels.hpp"

namespace dr2s::simd {

#if defined(DR2S_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif

const KernelTable* avx2_kernels() {
#if defined(DR2S_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2::table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable& selected = []() -> const KernelTable& {
    const char* force = std::getenv("DR2S_SIMD");
    if (force != nullptr && std::string_view(force) == "scalar") return scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return *t;
    return scalar_kernels();
  }();
  return selected;
}

}  // namespace dr2s::simd
