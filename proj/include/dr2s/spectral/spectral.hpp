#pragma once

#include <complex>
#include <string>
#include <vector>

#include "dr2s/core/image.hpp"

namespace dr2s::spectral {

/// Radially averaged spectrum. freqs are in cycles/pixel, strictly increasing,
/// inside (0, 0.45]; bin k sits at k / transform_size.
struct RadialSpectrum {
  std::vector<double> freqs;
  std::vector<double> values;
  int transform_size = 0;

  std::size_t bin_count() const { return freqs.size(); }
};

/// Modulation transfer function samples. Values are >= 0 and normalized to 1
/// at the lowest retained bin (k = 2).
struct MtfCurve {
  RadialSpectrum base;

  const std::vector<double>& freqs() const { return base.freqs; }
  const std::vector<double>& values() const { return base.values; }
  std::size_t size() const { return base.freqs.size(); }
};

struct ViewingConditions {
  double print_height_cm = 120.0;
  double view_distance_cm = 100.0;
};

// Estimation layout shared by every entry point:
//  * colour input is reduced to Rec. 601 luma, then centre-cropped to N x N
//    with N = min(width, height) >= 32;
//  * 2 x 2 half-overlapping sub-tiles of side T = 2 * floor(N / 3), offsets
//    {0, N - T} on each axis;
//  * each tile has its Hann-weighted mean removed and is multiplied by a 2-D
//    separable Hann window; periodograms are scaled by 1 / sum(w^2) so that
//    white noise of variance s^2 has a flat PSD of s^2;
//  * bins are integer-radius annuli round(|k|) over the half spectrum,
//    k = 1 .. floor(0.45 T).

/// Windowed periodogram, averaged over sub-tiles and radially.
RadialSpectrum psd_radial(const ImageF& img);

/// Full-reference MTF from the cross-power spectrum. The complex cross
/// spectrum is radially averaged before its magnitude is taken, so that
/// uncorrelated noise and small misregistration phase terms average out.
MtfCurve mtf_fr(const ImageF& captured, const ImageF& reference);

/// Reduced-reference MTF: sqrt(max(PSD_captured - PSD_noise, 0) / PSD_ideal)
/// with the noise PSD measured on a uniform capture. Spectra on a different
/// frequency grid are linearly interpolated onto the captured grid; bins where
/// the ideal PSD vanishes are dropped.
MtfCurve mtf_rr(const ImageF& captured_texture, const ImageF& captured_uniform,
                const RadialSpectrum& ideal_psd);

/// Mannos-Sakrison contrast sensitivity, flat at its peak value below the
/// peak frequency.
double csf(double f_cpd);

/// Frequency (cycles/degree) at which the Mannos-Sakrison curve peaks.
double csf_peak_frequency();

/// Angular height of the print in degrees: 2 * atan(h / (2 d)).
double print_height_degrees(const ViewingConditions& vc);

/// Cycles/pixel -> cycles/degree for an image `source_height_px` tall.
double cpp_to_cpd(double f_cpp, const ViewingConditions& vc, double source_height_px);

/// Trapezoidal ratio  int MTF * CSF df / int CSF df  over the curve support.
double acutance(const MtfCurve& mtf, const ViewingConditions& vc, double source_height_px);

/// Linear interpolation of `s` at `f`, clamped to the end values.
double interpolate(const RadialSpectrum& s, double f);

std::string to_csv(const RadialSpectrum& s);

}  // namespace dr2s::spectral
