#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "dr2s/core/image.hpp"

namespace dr2s::registration {

/// Continuous pixel-centre coordinates: pixel (x, y) covers [x - 0.5, x + 0.5].
struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Projective map of the plane, row-major 3 x 3. Stored normalized so the
/// bottom-right element is 1 when it is nonzero, otherwise to unit Frobenius
/// norm. Construction throws NumericError when |det| <= 1e-12.
class Homography {
 public:
  Homography();  // identity
  explicit Homography(const std::array<double, 9>& m);

  static Homography translation(double tx, double ty);
  /// Exact map of four source points onto four destination points.
  static Homography from_four(const std::array<Point, 4>& src, const std::array<Point, 4>& dst);

  const std::array<double, 9>& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_[static_cast<std::size_t>(r * 3 + c)]; }
  double det() const;

  Point apply(const Point& p) const;
  Homography inverse() const;
  /// (a * b)(p) = a(b(p)).
  friend Homography operator*(const Homography& a, const Homography& b);

 private:
  std::array<double, 9> m_;
};

struct Correspondence {
  Point src;
  Point dst;
  double score = 0.0;  // normalized cross-correlation of the match
};

struct Corner {
  Point p;
  double response = 0.0;
};

/// Harris corners (Sobel gradients, Gaussian structure tensor sigma 1.5,
/// k = 0.04) with non-maximum suppression over `nms_radius`, responses above
/// 1% of the strongest, and sub-pixel refinement by gradient orthogonality.
/// Strongest first, ties by (y, x). Colour input is converted to luma.
/// DataError when fewer than 4 corners survive.
std::vector<Corner> detect_corners(const ImageF& img, int max_n, int nms_radius = 5);

/// For each corner, the best normalized cross-correlation position of the
/// `window` x `window` template from `src` within +-`search` px of the same
/// position in `dst`, refined to sub-pixel by parabola fits. Matches below
/// `min_ncc` are dropped; DataError when none survive.
std::vector<Correspondence> match_ncc(const ImageF& src, const ImageF& dst, const std::vector<Corner>& corners,
                                      int window = 11, int search = 40, double min_ncc = 0.8);

/// Number of NCC candidates evaluated by the last match_ncc call on this
/// thread, for diagnostics.
std::size_t last_match_candidates();

/// Least-squares homography mapping src to dst with Hartley normalization.
/// Needs >= 4 correspondences; NumericError on a degenerate configuration.
Homography fit_homography(const std::vector<Correspondence>& matches);

struct RansacResult {
  Homography h;
  std::vector<bool> inliers;
  int inlier_count = 0;
  double rms = 0.0;  // reprojection RMS over inliers, px
};

/// RANSAC over minimal 4-point samples with the given reprojection threshold,
/// then least-squares refits on the inlier set until it stops changing.
/// Deterministic given `seed`. NumericError when fewer than 4 inliers remain.
RansacResult estimate_homography_ransac(const std::vector<Correspondence>& matches, int iters = 1000,
                                        double inlier_px = 2.0, std::uint64_t seed = 1);

struct Warped {
  ImageF image;
  ImageF valid;  // 1 where the source point lies inside the source image
};

/// out(p) = img(h^-1 p) by Catmull-Rom sampling; `h` maps source to output
/// coordinates. Points outside the source take the clamped border value and
/// are flagged 0 in `valid`.
Warped warp(const ImageF& img, const Homography& h, int out_w, int out_h);

struct RegisterConfig {
  int max_corners = 300;
  int window = 11;
  int coarse_search = 40;
  int fine_search = 3;
  double min_ncc = 0.8;
  int ransac_iters = 1000;
  double inlier_px = 2.0;
  std::uint64_t seed = 1;
};

struct RegistrationResult {
  Homography capture_to_reference;
  int matches = 0;
  int inliers = 0;
  double rms = 0.0;
};

/// Two passes: a coarse match and fit against the raw capture, then a fine
/// match against the capture warped into the reference frame. Corners come
/// from the reference.
RegistrationResult register_capture(const ImageF& capture, const ImageF& reference, const RegisterConfig& cfg = {});

/// Capture resampled into the reference frame.
Warped align(const ImageF& capture, const RegistrationResult& r, int ref_w, int ref_h);

/// Random homography moving each image corner by at most `max_shift` px.
Homography random_corner_homography(int width, int height, double max_shift, std::uint64_t seed);

/// Mean distance between the images of the four image corners under a and b.
double corner_reprojection_error(const Homography& a, const Homography& b, int width, int height);

nlohmann::json to_json(const RegistrationResult& r);

}  // namespace dr2s::registration
