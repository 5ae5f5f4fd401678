#pragma once

// Helpers shared by the unit and acceptance suites. Oracles here are kept
// independent of the library code paths they check.

#include <cmath>
#include <vector>

#include "dr2s/core/image.hpp"
#include "dr2s/core/rng.hpp"
#include "dr2s/spectral/spectral.hpp"

namespace dr2s::testing {

inline ImageF random_image(int w, int h, int c, std::uint64_t seed) {
  ImageF img(w, h, c);
  Rng rng(seed);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

inline double gaussian_otf(double sigma, double f) {
  return std::exp(-2.0 * M_PI * M_PI * sigma * sigma * f * f);
}

/// Least-squares slope of log(value) against log(freq) on [f_lo, f_hi].
inline double loglog_slope(const spectral::RadialSpectrum& s, double f_lo, double f_hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < s.bin_count(); ++i) {
    if (s.freqs[i] < f_lo || s.freqs[i] > f_hi) continue;
    const double x = std::log(s.freqs[i]);
    const double y = std::log(s.values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Largest |value - model(f)| over bins in [f_lo, f_hi].
template <typename F>
double max_deviation(const spectral::MtfCurve& m, double f_lo, double f_hi, F model) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double f = m.freqs()[i];
    if (f < f_lo || f > f_hi) continue;
    worst = std::max(worst, std::abs(m.values()[i] - model(f)));
  }
  return worst;
}

template <typename F>
double rms_deviation(const spectral::MtfCurve& m, double f_lo, double f_hi, F model) {
  double se = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double f = m.freqs()[i];
    if (f < f_lo || f > f_hi) continue;
    se += std::pow(m.values()[i] - model(f), 2);
    ++n;
  }
  return std::sqrt(se / n);
}

/// Index of the largest value.
inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace dr2s::testing
