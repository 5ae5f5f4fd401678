#include "dr2s/devsim/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dr2s/simd/kernels.hpp"

namespace dr2s::devsim {

namespace {

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[i + radius];
  }
  for (double& v : k) v /= s;
  return k;
}

}  // namespace

ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const auto& K = simd::active_kernels().f64;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  const auto kernel = gaussian_kernel(sigma, radius);
  const int w = img.width();
  const int h = img.height();
  ImageF tmp(w, h, img.channels());
  ImageF out(w, h, img.channels());
  out.set_pixel_pitch(img.pixel_pitch());
  std::vector<double> padded(static_cast<std::size_t>(w + 2 * radius));
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      auto src = img.row(c, y);
      for (int x = -radius; x < w + radius; ++x) padded[x + radius] = src[std::clamp(x, 0, w - 1)];
      auto dst = tmp.row(c, y);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (int k = 0; k <= 2 * radius; ++k) {
        K.axpy(kernel[k], padded.data() + k, dst.data(), static_cast<std::size_t>(w));
      }
    }
    for (int y = 0; y < h; ++y) {
      auto dst = out.row(c, y);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (int k = -radius; k <= radius; ++k) {
        auto src = tmp.row(c, std::clamp(y + k, 0, h - 1));
        K.axpy(kernel[k + radius], src.data(), dst.data(), static_cast<std::size_t>(w));
      }
    }
  }
  return out;
}

ImageF bilateral_smooth(const ImageF& img, double range_sigma) {
  constexpr int kRadius = 3;
  constexpr double kSpatialSigma = 1.5;
  double spatial[2 * kRadius + 1][2 * kRadius + 1];
  for (int dy = -kRadius; dy <= kRadius; ++dy) {
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      spatial[dy + kRadius][dx + kRadius] =
          std::exp(-0.5 * (dx * dx + dy * dy) / (kSpatialSigma * kSpatialSigma));
    }
  }
  const double inv_r = -0.5 / (range_sigma * range_sigma);
  const int w = img.width();
  const int h = img.height();
  ImageF out(w, h, img.channels());
  out.set_pixel_pitch(img.pixel_pitch());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double center = img.at(c, y, x);
        double sw = 0.0;
        double sv = 0.0;
        for (int dy = -kRadius; dy <= kRadius; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const double v = img.at(c, yy, std::clamp(x + dx, 0, w - 1));
            const double d = v - center;
            const double wt = spatial[dy + kRadius][dx + kRadius] * std::exp(d * d * inv_r);
            sw += wt;
            sv += wt * v;
          }
        }
        out.at(c, y, x) = sv / sw;
      }
    }
  }
  return out;
}

ImageF flatness_gate(const ImageF& img, double tau) {
  const ImageF guide = gaussian_blur(img, 1.0);
  ImageF guide_sq = guide;
  for (double& v : guide_sq.data()) v *= v;
  const ImageF m1 = gaussian_blur(guide, 2.0);
  const ImageF m2 = gaussian_blur(guide_sq, 2.0);
  ImageF gate(img.width(), img.height(), img.channels());
  const double inv = -0.5 / (tau * tau);
  for (std::size_t i = 0; i < gate.size(); ++i) {
    const double var = std::max(0.0, m2.data()[i] - m1.data()[i] * m1.data()[i]);
    gate.data()[i] = std::exp(var * inv);
  }
  return gate;
}

ImageF denoise(const ImageF& img, double strength) {
  ImageF out = img;
  const ImageF smooth = bilateral_smooth(img);
  const ImageF gate = flatness_gate(img);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double smoothed = img.data()[i] + gate.data()[i] * (smooth.data()[i] - img.data()[i]);
    out.data()[i] = (1.0 - strength) * img.data()[i] + strength * smoothed;
  }
  return out;
}

ImageF unsharp(const ImageF& img, double amount) {
  ImageF out = img;
  const ImageF soft = gaussian_blur(img, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] += amount * (img.data()[i] - soft.data()[i]);
  }
  return out;
}

}  // namespace dr2s::devsim
