#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dr2s/core/rng.hpp"

namespace dr2s {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const Rect&) const = default;

  bool contains(const Rect& other) const {
    return other.x >= x && other.y >= y && other.x + other.w <= x + w &&
           other.y + other.h <= y + h;
  }
};

/// Planar floating-point image. Channel planes are stored one after another,
/// each plane row-major. Nominal sample range is [0, 1]; values outside are
/// allowed until an explicit clamp.
class ImageF {
 public:
  ImageF() = default;
  ImageF(int width, int height, int channels = 1, double fill = 0.0);
  ImageF(int width, int height, int channels, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t size() const { return data_.size(); }

  /// Physical sample spacing, metadata only (defaults to 1 unit per pixel).
  double pixel_pitch() const { return pixel_pitch_; }
  void set_pixel_pitch(double p) { pixel_pitch_ = p; }

  Rect bounds() const { return Rect{0, 0, width_, height_}; }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  double& at(int y, int x) { return data_[index(0, y, x)]; }
  double at(int y, int x) const { return data_[index(0, y, x)]; }

  std::span<double> plane(int c) {
    return {data_.data() + plane_size() * static_cast<std::size_t>(c), plane_size()};
  }
  std::span<const double> plane(int c) const {
    return {data_.data() + plane_size() * static_cast<std::size_t>(c), plane_size()};
  }
  std::span<double> row(int c, int y) {
    return {&data_[index(c, y, 0)], static_cast<std::size_t>(width_)};
  }
  std::span<const double> row(int c, int y) const {
    return {&data_[index(c, y, 0)], static_cast<std::size_t>(width_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const ImageF& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_ &&
           data_ == o.data_;
  }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  double pixel_pitch_ = 1.0;
  std::vector<double> data_;
};

/// Copy of the pixels inside `r`. Throws BoundsError if `r` leaves the image.
ImageF crop(const ImageF& img, const Rect& r);

/// Removes `fraction` of the width/height on every side (lens-shading margin).
ImageF crop_border(const ImageF& img, double fraction = 0.05);

/// Catmull-Rom cubic weight (a = -0.5) for offset t in [0, 1) of taps -1..2.
void catmull_rom_weights(double t, double w[4]);

/// Catmull-Rom sample of channel `c` at continuous pixel-centre coordinates;
/// coordinates outside the image are clamped to the border.
double sample_bicubic(const ImageF& img, int c, double x, double y);

/// Separable Catmull-Rom resampling with pixel-centre alignment and clamped
/// borders. Resizing to the same size reproduces the input exactly.
ImageF resize_bicubic(const ImageF& img, int new_w, int new_h);

/// `count` patches of side `patch` with top-left corners drawn uniformly (with
/// replacement) over every valid position inside `region`.
std::vector<ImageF> sample_patches(const ImageF& img, const Rect& region, int patch,
                                   int count, Rng& rng);

/// Top-left corners only; same draw order as sample_patches.
std::vector<Rect> sample_patch_rects(const Rect& region, int patch, int count, Rng& rng);

/// Rec. 601 luma for 3-channel images; single-channel input is returned as is.
ImageF to_gray(const ImageF& img);

ImageF clamp01(ImageF img);

double mean(const ImageF& img);
double variance(const ImageF& img);

}  // namespace dr2s
