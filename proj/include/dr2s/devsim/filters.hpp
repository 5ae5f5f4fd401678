#pragma once

#include "dr2s/core/image.hpp"

namespace dr2s::devsim {

/// Separable sampled Gaussian, radius ceil(4 sigma), clamped borders.
/// sigma == 0 returns the input unchanged.
ImageF gaussian_blur(const ImageF& img, double sigma);

/// Bilateral-style range-weighted smoothing: spatial Gaussian (sigma 1.5 px,
/// 7 x 7 support) times a range Gaussian of width `range_sigma`.
ImageF bilateral_smooth(const ImageF& img, double range_sigma = 0.1);

/// Per-pixel weight in [0, 1]: near 1 where the image is locally flat, near 0
/// on texture. Local variance of a 1 px pre-smoothed guide over a 2 px
/// Gaussian window, mapped through exp(-var / (2 tau^2)).
ImageF flatness_gate(const ImageF& img, double tau = 0.02);

/// (1 - strength) * img + strength * smoothed, where smoothed blends the
/// bilateral output into img by flatness_gate. Flat areas lose their noise;
/// textured areas keep theirs.
ImageF denoise(const ImageF& img, double strength);

/// img + amount * (img - gaussian_blur(img, 1 px)).
ImageF unsharp(const ImageF& img, double amount);

/// 3 x 3 Laplacian [0 1 0; 1 -4 1; 0 1 0] of channel 0 at (y, x); the caller
/// keeps (y, x) at least one pixel inside the image.
inline double laplacian_at(const ImageF& img, int y, int x) {
  return img.at(y - 1, x) + img.at(y + 1, x) + img.at(y, x - 1) + img.at(y, x + 1) -
         4.0 * img.at(y, x);
}

}  // namespace dr2s::devsim
