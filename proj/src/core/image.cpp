#include "dr2s/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dr2s/core/error.hpp"

namespace dr2s {

namespace {

std::string rect_str(const Rect& r) {
  return "(" + std::to_string(r.x) + "," + std::to_string(r.y) + "," + std::to_string(r.w) +
         "," + std::to_string(r.h) + ")";
}

// Per-output-sample source taps for a 1-D Catmull-Rom resampling pass.
struct Taps {
  std::vector<int> index;    // 4 per output sample
  std::vector<double> weight;
};

Taps make_taps(int src_n, int dst_n) {
  Taps t;
  t.index.resize(static_cast<std::size_t>(dst_n) * 4);
  t.weight.resize(static_cast<std::size_t>(dst_n) * 4);
  const double scale = static_cast<double>(src_n) / dst_n;
  for (int i = 0; i < dst_n; ++i) {
    const double s = (i + 0.5) * scale - 0.5;
    const double fl = std::floor(s);
    const int base = static_cast<int>(fl);
    double w[4];
    catmull_rom_weights(s - fl, w);
    for (int k = 0; k < 4; ++k) {
      t.index[i * 4 + k] = std::clamp(base - 1 + k, 0, src_n - 1);
      t.weight[i * 4 + k] = w[k];
    }
  }
  return t;
}

}  // namespace

ImageF::ImageF(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 1 || height < 1 || channels < 1) {
    throw SizeError("image dimensions must be positive");
  }
  data_.assign(plane_size() * static_cast<std::size_t>(channels), fill);
}

ImageF::ImageF(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 1 || height < 1 || channels < 1) {
    throw SizeError("image dimensions must be positive");
  }
  if (data_.size() != plane_size() * static_cast<std::size_t>(channels)) {
    throw SizeError("image data length does not match width*height*channels");
  }
}

ImageF crop(const ImageF& img, const Rect& r) {
  if (r.w < 1 || r.h < 1 || !img.bounds().contains(r)) {
    throw BoundsError("crop rect " + rect_str(r) + " outside " + std::to_string(img.width()) +
                      "x" + std::to_string(img.height()) + " image");
  }
  ImageF out(r.w, r.h, img.channels());
  out.set_pixel_pitch(img.pixel_pitch());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < r.h; ++y) {
      auto src = img.row(c, r.y + y).subspan(static_cast<std::size_t>(r.x), static_cast<std::size_t>(r.w));
      std::copy(src.begin(), src.end(), out.row(c, y).begin());
    }
  }
  return out;
}

ImageF crop_border(const ImageF& img, double fraction) {
  if (fraction < 0.0 || fraction >= 0.5) {
    throw ConfigError("border fraction must lie in [0, 0.5)");
  }
  const int mx = static_cast<int>(std::floor(img.width() * fraction));
  const int my = static_cast<int>(std::floor(img.height() * fraction));
  return crop(img, Rect{mx, my, img.width() - 2 * mx, img.height() - 2 * my});
}

void catmull_rom_weights(double t, double w[4]) {
  constexpr double a = -0.5;
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = a * (t3 - 2.0 * t2 + t);
  w[1] = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0;
  w[2] = -(a + 2.0) * t3 + (2.0 * a + 3.0) * t2 - a * t;
  w[3] = -a * (t3 - t2);
}

double sample_bicubic(const ImageF& img, int c, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  double wx[4];
  double wy[4];
  catmull_rom_weights(x - fx, wx);
  catmull_rom_weights(y - fy, wy);
  const int bx = static_cast<int>(fx) - 1;
  const int by = static_cast<int>(fy) - 1;
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    const int yy = std::clamp(by + j, 0, img.height() - 1);
    double racc = 0.0;
    for (int i = 0; i < 4; ++i) {
      const int xx = std::clamp(bx + i, 0, img.width() - 1);
      racc += wx[i] * img.at(c, yy, xx);
    }
    acc += wy[j] * racc;
  }
  return acc;
}

ImageF resize_bicubic(const ImageF& img, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw SizeError("resize target must be at least 1x1");
  if (new_w == img.width() && new_h == img.height()) return img;
  const Taps tx = make_taps(img.width(), new_w);
  const Taps ty = make_taps(img.height(), new_h);
  ImageF tmp(new_w, img.height(), img.channels());
  ImageF out(new_w, new_h, img.channels());
  out.set_pixel_pitch(img.pixel_pitch() * img.height() / new_h);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      auto src = img.row(c, y);
      auto dst = tmp.row(c, y);
      for (int x = 0; x < new_w; ++x) {
        const std::size_t k = static_cast<std::size_t>(x) * 4;
        dst[x] = tx.weight[k] * src[tx.index[k]] + tx.weight[k + 1] * src[tx.index[k + 1]] +
                 tx.weight[k + 2] * src[tx.index[k + 2]] + tx.weight[k + 3] * src[tx.index[k + 3]];
      }
    }
    for (int y = 0; y < new_h; ++y) {
      const std::size_t k = static_cast<std::size_t>(y) * 4;
      auto dst = out.row(c, y);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (int j = 0; j < 4; ++j) {
        const double w = ty.weight[k + j];
        auto src = tmp.row(c, ty.index[k + j]);
        for (int x = 0; x < new_w; ++x) dst[x] += w * src[x];
      }
    }
  }
  return out;
}

std::vector<Rect> sample_patch_rects(const Rect& region, int patch, int count, Rng& rng) {
  if (patch < 1 || patch > std::min(region.w, region.h)) {
    throw SizeError("patch size " + std::to_string(patch) + " larger than region " +
                    rect_str(region));
  }
  const auto nx = static_cast<std::uint64_t>(region.w - patch + 1);
  const auto ny = static_cast<std::uint64_t>(region.h - patch + 1);
  std::vector<Rect> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const auto pos = rng.uniform_int(nx * ny);
    out.push_back(Rect{region.x + static_cast<int>(pos % nx), region.y + static_cast<int>(pos / nx),
                       patch, patch});
  }
  return out;
}

std::vector<ImageF> sample_patches(const ImageF& img, const Rect& region, int patch, int count,
                                   Rng& rng) {
  if (!img.bounds().contains(region)) {
    throw BoundsError("sampling region " + rect_str(region) + " outside image");
  }
  std::vector<ImageF> out;
  for (const Rect& r : sample_patch_rects(region, patch, count, rng)) out.push_back(crop(img, r));
  return out;
}

ImageF to_gray(const ImageF& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw SizeError("gray conversion expects 1 or 3 channels");
  ImageF out(img.width(), img.height(), 1);
  out.set_pixel_pitch(img.pixel_pitch());
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

ImageF clamp01(ImageF img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

double mean(const ImageF& img) {
  double s = 0.0;
  for (double v : img.data()) s += v;
  return s / static_cast<double>(img.size());
}

double variance(const ImageF& img) {
  const double m = mean(img);
  double s = 0.0;
  for (double v : img.data()) s += (v - m) * (v - m);
  return s / static_cast<double>(img.size());
}

}  // namespace dr2s
