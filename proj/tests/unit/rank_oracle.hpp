#pragma once

// Brute-force rank statistics by counting, for checking the library versions.

#include <cmath>
#include <vector>

namespace dr2s::testing {

/// rank_i = 1 + #{x_j < x_i} + #{j != i, x_j == x_i} / 2
inline std::vector<double> counted_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    int less = 0;
    int equal = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) ++less;
      if (j != i && x[j] == x[i]) ++equal;
    }
    r[i] = 1.0 + less + 0.5 * equal;
  }
  return r;
}

inline double brute_srocc(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = counted_ranks(x);
  const auto ry = counted_ranks(y);
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

inline double brute_krocc(const std::vector<double>& x, const std::vector<double>& y) {
  long long concordant = 0;
  long long discordant = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j <= i) continue;
      const double p = (x[i] - x[j]) * (y[i] - y[j]);
      if (p > 0) ++concordant;
      if (p < 0) ++discordant;
    }
  }
  const double pairs = static_cast<double>(x.size() * (x.size() - 1) / 2);
  return static_cast<double>(concordant - discordant) / pairs;
}

}  // namespace dr2s::testing
