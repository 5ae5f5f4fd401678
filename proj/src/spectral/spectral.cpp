#include "dr2s/spectral/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "dr2s/core/error.hpp"

namespace dr2s::spectral {

namespace {

constexpr double kMaxFrequency = 0.45;

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// Half-spectrum r2c transform of a T x T real tile.
class TileFft {
 public:
  explicit TileFft(int t) : t_(t) {
    in_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * t * t)));
    out_.reset(static_cast<fftw_complex*>(
        fftw_malloc(sizeof(fftw_complex) * t * (t / 2 + 1))));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_2d(t, t, in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~TileFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  TileFft(const TileFft&) = delete;
  TileFft& operator=(const TileFft&) = delete;

  double* input() { return in_.get(); }
  void run() { fftw_execute(plan_); }
  std::complex<double> at(int ky, int kx) const {
    const fftw_complex& c = out_.get()[static_cast<std::size_t>(ky) * (t_ / 2 + 1) + kx];
    return {c[0], c[1]};
  }
  int cols() const { return t_ / 2 + 1; }

 private:
  int t_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_;
};

struct Layout {
  int n = 0;       // centre square side
  int tile = 0;    // sub-tile side
  int x0 = 0;      // centre square origin
  int y0 = 0;
  int kmax = 0;
  std::vector<int> offsets;
};

Layout make_layout(const ImageF& img) {
  Layout l;
  l.n = std::min(img.width(), img.height());
  if (l.n < 32) throw SizeError("spectral estimation needs at least 32x32 pixels");
  l.tile = 2 * (l.n / 3);
  l.x0 = (img.width() - l.n) / 2;
  l.y0 = (img.height() - l.n) / 2;
  l.kmax = static_cast<int>(std::floor(kMaxFrequency * l.tile));
  l.offsets = {0, l.n - l.tile};
  return l;
}

std::vector<double> hann(int t) {
  std::vector<double> w(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 0.5) / t);
  }
  return w;
}

// Loads a windowed, weighted-mean-removed tile into the FFT input buffer.
// Returns sum(w^2).
double load_tile(const ImageF& gray, const Layout& l, int ox, int oy,
                 const std::vector<double>& win, double* dst) {
  const int t = l.tile;
  double sw = 0.0;
  double swx = 0.0;
  double sw2 = 0.0;
  for (int y = 0; y < t; ++y) {
    for (int x = 0; x < t; ++x) {
      const double w = win[y] * win[x];
      sw += w;
      swx += w * gray.at(l.y0 + oy + y, l.x0 + ox + x);
      sw2 += w * w;
    }
  }
  const double m = swx / sw;
  for (int y = 0; y < t; ++y) {
    for (int x = 0; x < t; ++x) {
      const double w = win[y] * win[x];
      dst[static_cast<std::size_t>(y) * t + x] = w * (gray.at(l.y0 + oy + y, l.x0 + ox + x) - m);
    }
  }
  return sw2;
}

// Radial bin index for every half-spectrum coefficient, -1 when unused.
std::vector<int> bin_map(const Layout& l) {
  const int t = l.tile;
  const int cols = t / 2 + 1;
  std::vector<int> bins(static_cast<std::size_t>(t) * cols, -1);
  for (int ky = 0; ky < t; ++ky) {
    const int sy = ky <= t / 2 ? ky : ky - t;
    for (int kx = 0; kx < cols; ++kx) {
      const long k = std::lround(std::sqrt(static_cast<double>(sy * sy + kx * kx)));
      if (k >= 1 && k <= l.kmax) bins[static_cast<std::size_t>(ky) * cols + kx] = static_cast<int>(k);
    }
  }
  return bins;
}

// Mean over sub-tiles of X_a * conj(X_b) / sum(w^2), radially averaged.
// When `b` is null the auto-spectrum of `a` is produced.
std::vector<std::complex<double>> radial_cross(const ImageF& a, const ImageF* b, const Layout& l) {
  const int t = l.tile;
  const auto win = hann(t);
  const auto bins = bin_map(l);
  TileFft fa(t);
  std::unique_ptr<TileFft> fb;
  if (b) fb = std::make_unique<TileFft>(t);

  std::vector<std::complex<double>> acc(static_cast<std::size_t>(l.kmax) + 1);
  std::vector<double> count(static_cast<std::size_t>(l.kmax) + 1, 0.0);
  for (int oy : l.offsets) {
    for (int ox : l.offsets) {
      const double norm_a = load_tile(a, l, ox, oy, win, fa.input());
      fa.run();
      if (fb) {
        load_tile(*b, l, ox, oy, win, fb->input());
        fb->run();
      }
      for (int ky = 0; ky < t; ++ky) {
        for (int kx = 0; kx < fa.cols(); ++kx) {
          const int k = bins[static_cast<std::size_t>(ky) * fa.cols() + kx];
          if (k < 0) continue;
          const std::complex<double> xa = fa.at(ky, kx);
          const std::complex<double> xb = fb ? fb->at(ky, kx) : xa;
          acc[k] += xa * std::conj(xb) / norm_a;
          count[k] += 1.0;
        }
      }
    }
  }
  for (std::size_t k = 1; k < acc.size(); ++k) {
    if (count[k] > 0) acc[k] /= count[k];
  }
  return acc;
}

RadialSpectrum make_spectrum(const Layout& l, int kmin) {
  RadialSpectrum s;
  s.transform_size = l.tile;
  for (int k = kmin; k <= l.kmax; ++k) s.freqs.push_back(static_cast<double>(k) / l.tile);
  return s;
}

MtfCurve normalize(RadialSpectrum s) {
  if (s.values.empty()) throw NumericError("MTF estimate has no usable frequency bins");
  const double ref = s.values.front();
  if (!(ref > 0.0) || !std::isfinite(ref)) {
    throw NumericError("MTF estimate vanishes at the normalization bin");
  }
  for (double& v : s.values) v = std::max(v / ref, 0.0);
  return MtfCurve{std::move(s)};
}

// Mannos-Sakrison constants.
constexpr double kCsfA = 0.0192;
constexpr double kCsfB = 0.114;

double mannos_sakrison(double f) {
  return 2.6 * (kCsfA + kCsfB * f) * std::exp(-std::pow(kCsfB * f, 1.1));
}

}  // namespace

RadialSpectrum psd_radial(const ImageF& img) {
  const ImageF gray = to_gray(img);
  const Layout l = make_layout(gray);
  const auto acc = radial_cross(gray, nullptr, l);
  RadialSpectrum s = make_spectrum(l, 1);
  for (int k = 1; k <= l.kmax; ++k) s.values.push_back(acc[k].real());
  return s;
}

MtfCurve mtf_fr(const ImageF& captured, const ImageF& reference) {
  if (captured.width() != reference.width() || captured.height() != reference.height()) {
    throw SizeError("full-reference MTF needs captured and reference of equal size");
  }
  const ImageF cap = to_gray(captured);
  const ImageF ref = to_gray(reference);
  const Layout l = make_layout(ref);
  const auto cross = radial_cross(cap, &ref, l);
  const auto auto_ref = radial_cross(ref, nullptr, l);
  RadialSpectrum s;
  s.transform_size = l.tile;
  for (int k = 2; k <= l.kmax; ++k) {
    const double denom = auto_ref[k].real();
    if (!(denom > 0.0)) continue;
    s.freqs.push_back(static_cast<double>(k) / l.tile);
    s.values.push_back(std::abs(cross[k]) / denom);
  }
  return normalize(std::move(s));
}

MtfCurve mtf_rr(const ImageF& captured_texture, const ImageF& captured_uniform,
                const RadialSpectrum& ideal_psd) {
  if (ideal_psd.bin_count() < 2) throw DataError("ideal PSD needs at least two bins");
  const RadialSpectrum cap = psd_radial(captured_texture);
  const RadialSpectrum noise = psd_radial(captured_uniform);
  const bool same_grid = ideal_psd.freqs == cap.freqs;
  const double ideal_max = *std::max_element(ideal_psd.values.begin(), ideal_psd.values.end());
  RadialSpectrum s;
  s.transform_size = cap.transform_size;
  for (std::size_t i = 0; i < cap.bin_count(); ++i) {
    const double f = cap.freqs[i];
    if (f * cap.transform_size < 1.5) continue;  // keep k >= 2
    const double ideal = same_grid ? ideal_psd.values[i] : interpolate(ideal_psd, f);
    if (!(ideal > 1e-12 * ideal_max)) continue;
    const double signal = std::max(cap.values[i] - interpolate(noise, f), 0.0);
    s.freqs.push_back(f);
    s.values.push_back(std::sqrt(signal / ideal));
  }
  return normalize(std::move(s));
}

double csf_peak_frequency() {
  // d/df of the Mannos-Sakrison curve vanishes where 1.1 (a + u) u^0.1 = 1, u = b f.
  static const double peak = [] {
    double lo = 1e-6;
    double hi = 10.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (1.1 * (kCsfA + mid) * std::pow(mid, 0.1) < 1.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi) / kCsfB;
  }();
  return peak;
}

double csf(double f_cpd) {
  const double fp = csf_peak_frequency();
  return f_cpd <= fp ? mannos_sakrison(fp) : mannos_sakrison(f_cpd);
}

double print_height_degrees(const ViewingConditions& vc) {
  if (!(vc.print_height_cm > 0.0) || !(vc.view_distance_cm > 0.0)) {
    throw ConfigError("viewing conditions must be positive");
  }
  return 2.0 * std::atan(vc.print_height_cm / (2.0 * vc.view_distance_cm)) * 180.0 /
         std::numbers::pi;
}

double cpp_to_cpd(double f_cpp, const ViewingConditions& vc, double source_height_px) {
  return f_cpp * source_height_px / print_height_degrees(vc);
}

double acutance(const MtfCurve& mtf, const ViewingConditions& vc, double source_height_px) {
  if (mtf.size() < 2) throw DataError("acutance needs an MTF curve with at least two samples");
  if (!(source_height_px > 0.0)) throw ConfigError("source height must be positive");
  double num = 0.0;
  double den = 0.0;
  double f_prev = cpp_to_cpd(mtf.freqs()[0], vc, source_height_px);
  double c_prev = csf(f_prev);
  double m_prev = mtf.values()[0];
  for (std::size_t i = 1; i < mtf.size(); ++i) {
    const double f = cpp_to_cpd(mtf.freqs()[i], vc, source_height_px);
    const double c = csf(f);
    const double m = mtf.values()[i];
    const double df = f - f_prev;
    num += 0.5 * df * (m * c + m_prev * c_prev);
    den += 0.5 * df * (c + c_prev);
    f_prev = f;
    c_prev = c;
    m_prev = m;
  }
  if (!(den > 0.0)) throw NumericError("CSF integral vanished");
  return num / den;
}

double interpolate(const RadialSpectrum& s, double f) {
  if (s.freqs.empty()) throw DataError("cannot interpolate an empty spectrum");
  if (f <= s.freqs.front()) return s.values.front();
  if (f >= s.freqs.back()) return s.values.back();
  const auto it = std::upper_bound(s.freqs.begin(), s.freqs.end(), f);
  const std::size_t i = static_cast<std::size_t>(it - s.freqs.begin());
  const double t = (f - s.freqs[i - 1]) / (s.freqs[i] - s.freqs[i - 1]);
  return s.values[i - 1] + t * (s.values[i] - s.values[i - 1]);
}

std::string to_csv(const RadialSpectrum& s) {
  std::ostringstream out;
  out.precision(17);
  out << "freq,value\n";
  for (std::size_t i = 0; i < s.bin_count(); ++i) out << s.freqs[i] << "," << s.values[i] << "\n";
  return out.str();
}

}  // namespace dr2s::spectral
