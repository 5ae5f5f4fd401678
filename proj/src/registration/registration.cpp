#include "dr2s/registration/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "dr2s/core/error.hpp"
#include "dr2s/core/rng.hpp"
#include "dr2s/devsim/filters.hpp"

namespace dr2s::registration {

namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const std::array<double, 9>& m) {
  Mat3 e;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) e(r, c) = m[static_cast<std::size_t>(r * 3 + c)];
  }
  return e;
}

std::array<double, 9> from_eigen(const Mat3& e) {
  std::array<double, 9> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 3 + c)] = e(r, c);
  }
  return m;
}

// Similarity taking the points to zero mean and mean distance sqrt(2).
Mat3 hartley(const std::vector<Point>& pts) {
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += std::hypot(p.x - mx, p.y - my);
  d /= static_cast<double>(pts.size());
  const double s = d > 0.0 ? std::numbers::sqrt2 / d : 1.0;
  Mat3 t;
  t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  return t;
}

std::optional<Mat3> dlt(const std::vector<Point>& src, const std::vector<Point>& dst) {
  const Mat3 ts = hartley(src);
  const Mat3 td = hartley(dst);
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ps = src[static_cast<std::size_t>(i)];
    const auto& pd = dst[static_cast<std::size_t>(i)];
    const double x = ts(0, 0) * ps.x + ts(0, 2);
    const double y = ts(1, 1) * ps.y + ts(1, 2);
    const double u = td(0, 0) * pd.x + td(0, 2);
    const double v = td(1, 1) * pd.y + td(1, 2);
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  // Null vector of the design matrix: the last right singular vector.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) < 1e-10 * sv(0)) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3 out = td.inverse() * hn * ts;
  if (!out.allFinite() || std::abs(out.determinant()) <= 1e-12 * std::pow(out.norm(), 3)) return std::nullopt;
  return out;
}

thread_local std::size_t g_candidates = 0;

// Offset of the vertex of the parabola through (-1, a), (0, b), (1, c).
double parabola_peak(double a, double b, double c) {
  const double den = a - 2.0 * b + c;
  if (den >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
}

}  // namespace

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography::Homography(const std::array<double, 9>& m) : m_(m) {
  for (double v : m_) {
    if (!std::isfinite(v)) throw NumericError("homography has non-finite entries");
  }
  if (std::abs(m_[8]) > 1e-12) {
    const double s = m_[8];
    for (double& v : m_) v /= s;
  } else {
    double n = 0.0;
    for (double v : m_) n += v * v;
    n = std::sqrt(n);
    if (n == 0.0) throw NumericError("homography is the zero matrix");
    for (double& v : m_) v /= n;
  }
  if (std::abs(det()) <= 1e-12) throw NumericError("homography is singular");
}

Homography Homography::translation(double tx, double ty) { return Homography({1, 0, tx, 0, 1, ty, 0, 0, 1}); }

Homography Homography::from_four(const std::array<Point, 4>& src, const std::array<Point, 4>& dst) {
  const auto h = dlt({src.begin(), src.end()}, {dst.begin(), dst.end()});
  if (!h) throw NumericError("four-point homography is degenerate");
  return Homography(from_eigen(*h));
}

double Homography::det() const { return to_eigen(m_).determinant(); }

Point Homography::apply(const Point& p) const {
  const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
  return {(m_[0] * p.x + m_[1] * p.y + m_[2]) / w, (m_[3] * p.x + m_[4] * p.y + m_[5]) / w};
}

Homography Homography::inverse() const { return Homography(from_eigen(to_eigen(m_).inverse())); }

Homography operator*(const Homography& a, const Homography& b) {
  return Homography(from_eigen(to_eigen(a.m_) * to_eigen(b.m_)));
}

std::vector<Corner> detect_corners(const ImageF& img, int max_n, int nms_radius) {
  if (max_n < 4) throw ConfigError("max_n must be at least 4");
  const ImageF g = to_gray(img);
  const int w = g.width();
  const int h = g.height();
  ImageF ixx(w, h);
  ImageF iyy(w, h);
  ImageF ixy(w, h);
  ImageF gxs(w, h);
  ImageF gys(w, h);
  auto px = [&](int y, int x) { return g.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1) - px(y - 1, x - 1) -
                         2 * px(y, x - 1) - px(y + 1, x - 1)) / 8.0;
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1) - px(y - 1, x - 1) -
                         2 * px(y - 1, x) - px(y - 1, x + 1)) / 8.0;
      gxs.at(y, x) = gx;
      gys.at(y, x) = gy;
      ixx.at(y, x) = gx * gx;
      iyy.at(y, x) = gy * gy;
      ixy.at(y, x) = gx * gy;
    }
  }
  ixx = devsim::gaussian_blur(ixx, 1.5);
  iyy = devsim::gaussian_blur(iyy, 1.5);
  ixy = devsim::gaussian_blur(ixy, 1.5);
  ImageF r(w, h);
  double rmax = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = ixx.data()[i];
    const double b = iyy.data()[i];
    const double c = ixy.data()[i];
    r.data()[i] = a * b - c * c - 0.04 * (a + b) * (a + b);
    rmax = std::max(rmax, r.data()[i]);
  }
  std::vector<Corner> out;
  if (rmax <= 0.0) throw DataError("no corners found");
  const double thresh = 0.01 * rmax;
  const int margin = 2;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double v = r.at(y, x);
      if (v <= thresh) continue;
      bool keep = true;
      for (int dy = -nms_radius; dy <= nms_radius && keep; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -nms_radius; dx <= nms_radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || (dx == 0 && dy == 0) || dx * dx + dy * dy > nms_radius * nms_radius) continue;
          const double q = r.at(yy, xx);
          // Plateaus keep their first pixel in scan order.
          if (q > v || (q == v && (dy < 0 || (dy == 0 && dx < 0)))) {
            keep = false;
            break;
          }
        }
      }
      if (!keep) continue;
      Point p{x + parabola_peak(r.at(y, x - 1), v, r.at(y, x + 1)),
              y + parabola_peak(r.at(y - 1, x), v, r.at(y + 1, x))};
      // The Harris peak sits inside the true corner. Refine to the point q
      // that minimises sum (g_i . (q - p_i))^2 over a local window, which is
      // exact for an ideal corner.
      const int rad = 4;
      for (int iter = 0; iter < 5; ++iter) {
        const int qx = static_cast<int>(std::lround(p.x));
        const int qy = static_cast<int>(std::lround(p.y));
        Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
        Eigen::Vector2d b = Eigen::Vector2d::Zero();
        for (int yy = std::max(qy - rad, 0); yy <= std::min(qy + rad, h - 1); ++yy) {
          for (int xx = std::max(qx - rad, 0); xx <= std::min(qx + rad, w - 1); ++xx) {
            const Eigen::Vector2d g(gxs.at(yy, xx), gys.at(yy, xx));
            const Eigen::Matrix2d gg = g * g.transpose();
            a += gg;
            b += gg * Eigen::Vector2d(xx, yy);
          }
        }
        const double tr = a.trace();
        if (tr <= 0.0 || a.determinant() < 1e-3 * tr * tr) break;
        const Eigen::Vector2d q = a.ldlt().solve(b);
        if (std::hypot(q.x() - x, q.y() - y) > 2.0) break;
        const double moved = std::hypot(q.x() - p.x, q.y() - p.y);
        p = {q.x(), q.y()};
        if (moved < 1e-3) break;
      }
      out.push_back({p, v});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Corner& a, const Corner& b) { return a.response > b.response; });
  if (static_cast<int>(out.size()) > max_n) out.resize(static_cast<std::size_t>(max_n));
  if (out.size() < 4) throw DataError("found " + std::to_string(out.size()) + " corners, need at least 4");
  return out;
}

std::vector<Correspondence> match_ncc(const ImageF& src, const ImageF& dst, const std::vector<Corner>& corners,
                                      int window, int search, double min_ncc) {
  if (window < 3 || window % 2 == 0) throw ConfigError("NCC window must be odd and >= 3");
  if (search < 1) throw ConfigError("NCC search radius must be >= 1");
  const ImageF s = to_gray(src);
  const ImageF d = to_gray(dst);
  const int half = window / 2;
  const int dw = d.width();
  const int dh = d.height();
  const double area = static_cast<double>(window) * window;

  // Integral images of dst and dst^2 for window means and energies.
  std::vector<double> i1(static_cast<std::size_t>(dw + 1) * (dh + 1), 0.0);
  std::vector<double> i2(i1.size(), 0.0);
  auto idx = [&](int y, int x) { return static_cast<std::size_t>(y) * (dw + 1) + x; };
  for (int y = 0; y < dh; ++y) {
    double r1 = 0.0;
    double r2 = 0.0;
    for (int x = 0; x < dw; ++x) {
      const double v = d.at(y, x);
      r1 += v;
      r2 += v * v;
      i1[idx(y + 1, x + 1)] = i1[idx(y, x + 1)] + r1;
      i2[idx(y + 1, x + 1)] = i2[idx(y, x + 1)] + r2;
    }
  }
  auto box = [&](const std::vector<double>& ii, int cy, int cx) {
    const int y0 = cy - half;
    const int x0 = cx - half;
    return ii[idx(y0 + window, x0 + window)] - ii[idx(y0, x0 + window)] - ii[idx(y0 + window, x0)] + ii[idx(y0, x0)];
  };

  std::vector<double> tmpl(static_cast<std::size_t>(window) * window);
  const int side = 2 * search + 1;
  std::vector<double> scores(static_cast<std::size_t>(side) * side);
  std::vector<Correspondence> out;
  g_candidates = 0;
  for (const auto& c : corners) {
    const int cx = static_cast<int>(std::lround(c.p.x));
    const int cy = static_cast<int>(std::lround(c.p.y));
    if (cx - half < 0 || cy - half < 0 || cx + half >= s.width() || cy + half >= s.height()) continue;
    double tm = 0.0;
    for (int y = 0; y < window; ++y) {
      for (int x = 0; x < window; ++x) {
        tmpl[static_cast<std::size_t>(y * window + x)] = s.at(cy - half + y, cx - half + x);
        tm += tmpl[static_cast<std::size_t>(y * window + x)];
      }
    }
    tm /= area;
    double tn = 0.0;
    for (double& v : tmpl) {
      v -= tm;
      tn += v * v;
    }
    if (tn < 1e-10 * area) continue;
    tn = std::sqrt(tn);

    std::fill(scores.begin(), scores.end(), -2.0);
    double best = -2.0;
    int bx = 0;
    int by = 0;
    for (int oy = -search; oy <= search; ++oy) {
      const int py = cy + oy;
      if (py - half < 0 || py + half >= dh) continue;
      for (int ox = -search; ox <= search; ++ox) {
        const int qx = cx + ox;
        if (qx - half < 0 || qx + half >= dw) continue;
        ++g_candidates;
        const double sum = box(i1, py, qx);
        const double var = box(i2, py, qx) - sum * sum / area;
        double ncc = 0.0;
        if (var > 1e-12) {
          // The zero-mean template makes the dst mean drop out of the cross term.
          double cross = 0.0;
          for (int y = 0; y < window; ++y) {
            const double* row = d.row(0, py - half + y).data() + (qx - half);
            const double* t = &tmpl[static_cast<std::size_t>(y * window)];
            for (int x = 0; x < window; ++x) cross += t[x] * row[x];
          }
          ncc = cross / (tn * std::sqrt(var));
        }
        scores[static_cast<std::size_t>((oy + search) * side + ox + search)] = ncc;
        if (ncc > best) {
          best = ncc;
          bx = ox;
          by = oy;
        }
      }
    }
    if (best < min_ncc) continue;
    auto at = [&](int oy, int ox) {
      if (std::abs(oy) > search || std::abs(ox) > search) return -2.0;
      return scores[static_cast<std::size_t>((oy + search) * side + ox + search)];
    };
    double fx = 0.0;
    double fy = 0.0;
    if (at(by, bx - 1) > -2.0 && at(by, bx + 1) > -2.0) fx = parabola_peak(at(by, bx - 1), best, at(by, bx + 1));
    if (at(by - 1, bx) > -2.0 && at(by + 1, bx) > -2.0) fy = parabola_peak(at(by - 1, bx), best, at(by + 1, bx));
    const Point ps{static_cast<double>(cx), static_cast<double>(cy)};
    out.push_back({ps, {cx + bx + fx, cy + by + fy}, best});
  }
  if (out.empty()) throw DataError("no NCC match reached " + std::to_string(min_ncc));
  return out;
}

std::size_t last_match_candidates() { return g_candidates; }

Homography fit_homography(const std::vector<Correspondence>& matches) {
  if (matches.size() < 4) throw NumericError("homography fit needs at least 4 correspondences");
  std::vector<Point> s;
  std::vector<Point> d;
  for (const auto& m : matches) {
    s.push_back(m.src);
    d.push_back(m.dst);
  }
  const auto h = dlt(s, d);
  if (!h) throw NumericError("correspondences are degenerate for a homography");
  return Homography(from_eigen(*h));
}

namespace {

double reproj_sq(const Homography& h, const Correspondence& m) {
  const Point p = h.apply(m.src);
  const double dx = p.x - m.dst.x;
  const double dy = p.y - m.dst.y;
  const double e = dx * dx + dy * dy;
  return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

int mark_inliers(const Homography& h, const std::vector<Correspondence>& matches, double t2, std::vector<bool>& mask,
                 double& sse) {
  int n = 0;
  sse = 0.0;
  mask.assign(matches.size(), false);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const double e = reproj_sq(h, matches[i]);
    if (e <= t2) {
      mask[i] = true;
      sse += e;
      ++n;
    }
  }
  return n;
}

}  // namespace

RansacResult estimate_homography_ransac(const std::vector<Correspondence>& matches, int iters, double inlier_px,
                                        std::uint64_t seed) {
  if (matches.size() < 4) throw NumericError("RANSAC needs at least 4 matches, got " + std::to_string(matches.size()));
  if (iters < 1 || inlier_px <= 0.0) throw ConfigError("RANSAC needs iters >= 1 and a positive threshold");
  const double t2 = inlier_px * inlier_px;
  Rng rng(seed);
  std::optional<Homography> best;
  int best_n = -1;
  double best_sse = 0.0;
  std::vector<bool> mask;
  const std::size_t n = matches.size();
  for (int it = 0; it < iters; ++it) {
    std::array<std::size_t, 4> pick{};
    for (int k = 0; k < 4; ++k) {
      bool dup = true;
      while (dup) {
        pick[static_cast<std::size_t>(k)] = static_cast<std::size_t>(rng.uniform_int(n));
        dup = std::find(pick.begin(), pick.begin() + k, pick[static_cast<std::size_t>(k)]) != pick.begin() + k;
      }
    }
    std::vector<Point> s;
    std::vector<Point> d;
    for (std::size_t i : pick) {
      s.push_back(matches[i].src);
      d.push_back(matches[i].dst);
    }
    const auto h = dlt(s, d);
    if (!h) continue;
    Homography hh;
    try {
      hh = Homography(from_eigen(*h));
    } catch (const NumericError&) {
      continue;
    }
    double sse = 0.0;
    const int cnt = mark_inliers(hh, matches, t2, mask, sse);
    if (cnt > best_n || (cnt == best_n && sse < best_sse)) {
      best = hh;
      best_n = cnt;
      best_sse = sse;
    }
  }
  if (!best || best_n < 4) throw NumericError("RANSAC found fewer than 4 inliers");

  RansacResult r;
  r.h = *best;
  double sse = 0.0;
  r.inlier_count = mark_inliers(r.h, matches, t2, r.inliers, sse);
  for (int round = 0; round < 10; ++round) {
    std::vector<Correspondence> in;
    for (std::size_t i = 0; i < n; ++i) {
      if (r.inliers[i]) in.push_back(matches[i]);
    }
    const auto h = fit_homography(in);
    std::vector<bool> mask2;
    const int cnt = mark_inliers(h, matches, t2, mask2, sse);
    if (cnt < 4) break;
    const bool same = mask2 == r.inliers;
    r.h = h;
    r.inliers = std::move(mask2);
    r.inlier_count = cnt;
    if (same) break;
  }
  mark_inliers(r.h, matches, t2, r.inliers, sse);
  r.rms = std::sqrt(sse / r.inlier_count);
  return r;
}

Warped warp(const ImageF& img, const Homography& h, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ConfigError("warp output must be non-empty");
  const Homography inv = h.inverse();
  Warped out{ImageF(out_w, out_h, img.channels()), ImageF(out_w, out_h)};
  const double xmax = img.width() - 1;
  const double ymax = img.height() - 1;
  const double eps = 1e-9;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const bool inside = p.x >= -eps && p.y >= -eps && p.x <= xmax + eps && p.y <= ymax + eps;
      out.valid.at(y, x) = inside ? 1.0 : 0.0;
      for (int c = 0; c < img.channels(); ++c) out.image.at(c, y, x) = sample_bicubic(img, c, p.x, p.y);
    }
  }
  return out;
}

RegistrationResult register_capture(const ImageF& capture, const ImageF& reference, const RegisterConfig& cfg) {
  const auto corners = detect_corners(reference, cfg.max_corners);
  const auto coarse = match_ncc(reference, capture, corners, cfg.window, cfg.coarse_search, cfg.min_ncc);
  const auto r1 = estimate_homography_ransac(coarse, cfg.ransac_iters, cfg.inlier_px, derive_seed(cfg.seed, "register.coarse"));
  // Capture resampled into the reference frame leaves only a small residual.
  const auto w = warp(capture, r1.h.inverse(), reference.width(), reference.height());
  const auto fine = match_ncc(reference, w.image, corners, cfg.window, cfg.fine_search, cfg.min_ncc);
  const auto r2 = estimate_homography_ransac(fine, cfg.ransac_iters, cfg.inlier_px, derive_seed(cfg.seed, "register.fine"));
  RegistrationResult out;
  out.capture_to_reference = (r1.h * r2.h).inverse();
  out.matches = static_cast<int>(fine.size());
  out.inliers = r2.inlier_count;
  out.rms = r2.rms;
  return out;
}

Warped align(const ImageF& capture, const RegistrationResult& r, int ref_w, int ref_h) {
  return warp(capture, r.capture_to_reference, ref_w, ref_h);
}

Homography random_corner_homography(int width, int height, double max_shift, std::uint64_t seed) {
  Rng rng(seed);
  const std::array<Point, 4> src{{{0, 0}, {width - 1.0, 0}, {width - 1.0, height - 1.0}, {0, height - 1.0}}};
  std::array<Point, 4> dst = src;
  for (auto& p : dst) {
    const double r = max_shift * std::sqrt(rng.uniform());
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    p.x += r * std::cos(a);
    p.y += r * std::sin(a);
  }
  return Homography::from_four(src, dst);
}

double corner_reprojection_error(const Homography& a, const Homography& b, int width, int height) {
  const std::array<Point, 4> pts{{{0, 0}, {width - 1.0, 0}, {width - 1.0, height - 1.0}, {0, height - 1.0}}};
  double sum = 0.0;
  for (const auto& p : pts) {
    const Point pa = a.apply(p);
    const Point pb = b.apply(p);
    sum += std::hypot(pa.x - pb.x, pa.y - pb.y);
  }
  return sum / 4.0;
}

nlohmann::json to_json(const RegistrationResult& r) {
  return {{"homography", r.capture_to_reference.matrix()},
          {"matches", r.matches},
          {"inliers", r.inliers},
          {"rms", r.rms}};
}

}  // namespace dr2s::registration
