#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dr2s {

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions are implemented here rather than taken from
/// <random> because the standard library distributions are not required to be
/// identical across implementations:
///   uniform()      53 high bits of one draw, scaled to [0, 1)
///   uniform_int(n) rejection sampling on the raw 64-bit draw
///   normal()       Box-Muller, both values of each pair are used
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  double normal();

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over the bytes of `name`.
std::uint64_t fnv1a64(std::string_view name);

/// Sub-seed for a named component: splitmix64(master ^ fnv1a64(component)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

}  // namespace dr2s
