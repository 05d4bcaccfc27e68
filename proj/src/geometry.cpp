#include "pigseg/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace pigseg {

namespace {

double wrap_half_turn(double angle) {
  angle = std::fmod(angle, M_PI);
  if (angle < 0.0) angle += M_PI;
  if (angle >= M_PI) angle = 0.0;  // fmod rounding can land exactly on pi
  return angle + 0.0;              // clears a negative zero
}

// Conservative axis-aligned bounding box of a rotated ellipse.
void bounding_box(const Ellipse& e, double& x0, double& x1, double& y0, double& y1) {
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const double ex = std::sqrt(e.a * e.a * ct * ct + e.b * e.b * st * st);
  const double ey = std::sqrt(e.a * e.a * st * st + e.b * e.b * ct * ct);
  x0 = e.cx - ex;
  x1 = e.cx + ex;
  y0 = e.cy - ey;
  y1 = e.cy + ey;
}

}  // namespace

bool is_valid(const Ellipse& e) {
  return std::isfinite(e.cx) && std::isfinite(e.cy) && std::isfinite(e.a) &&
         std::isfinite(e.b) && std::isfinite(e.theta) && e.a >= e.b && e.b > 0.0 &&
         e.theta >= 0.0 && e.theta < M_PI;
}

void require_valid(const Ellipse& e) {
  if (!is_valid(e)) throw std::invalid_argument("ellipse violates a >= b > 0, theta in [0, pi)");
}

Ellipse canonicalized(const Ellipse& e) {
  Ellipse out = e;
  if (out.a < out.b) {
    std::swap(out.a, out.b);
    out.theta += M_PI / 2.0;
  }
  const double raw = out.theta;
  out.theta = wrap_half_turn(out.theta);
  if (out.head_sign != HeadSign::unknown) {
    // Wrapping by an odd number of half-turns flips the directed end.
    const double turns = std::round((raw - out.theta) / M_PI);
    if (std::llround(turns) % 2 != 0) {
      out.head_sign = out.head_sign == HeadSign::positive ? HeadSign::negative : HeadSign::positive;
    }
  }
  return out;
}

double directed_angle(const Ellipse& e) {
  if (e.head_sign == HeadSign::unknown)
    throw std::invalid_argument("directed_angle requires a known head_sign");
  return e.head_sign == HeadSign::positive ? e.theta : e.theta + M_PI;
}

bool contains(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const double u = dx * ct + dy * st;   // along major axis
  const double v = -dx * st + dy * ct;  // along minor axis
  return (u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0;
}

Ellipse scale(const Ellipse& e, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be positive");
  Ellipse out = e;
  out.a = e.a * factor;
  out.b = e.b * factor;
  return out;
}

ConicCoefficients conic_from_ellipse(const Ellipse& e) {
  require_valid(e);
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  const double ia = 1.0 / (e.a * e.a);
  const double ib = 1.0 / (e.b * e.b);
  // Quadratic form M = R diag(1/a^2, 1/b^2) R^T; boundary is
  // (p - c)^T M (p - c) = 1.
  const double m00 = ia * ct * ct + ib * st * st;
  const double m01 = (ia - ib) * ct * st;
  const double m11 = ia * st * st + ib * ct * ct;
  ConicCoefficients c;
  c.A = m00;
  c.B = 2.0 * m01;
  c.C = m11;
  c.D = -2.0 * (m00 * e.cx + m01 * e.cy);
  c.E = -2.0 * (m01 * e.cx + m11 * e.cy);
  c.F = m00 * e.cx * e.cx + 2.0 * m01 * e.cx * e.cy + m11 * e.cy * e.cy - 1.0;
  return c;
}

Ellipse ellipse_from_conic(const ConicCoefficients& c) {
  const double disc = c.B * c.B - 4.0 * c.A * c.C;
  if (!(disc < 0.0)) throw fit_error("conic is not an ellipse (discriminant >= 0)");

  const double cx = (2.0 * c.C * c.D - c.B * c.E) / disc;
  const double cy = (2.0 * c.A * c.E - c.B * c.D) / disc;
  // Value at the center; the centered conic is A u^2 + B uv + C v^2 = -mu.
  const double mu = c.A * cx * cx + c.B * cx * cy + c.C * cy * cy + c.D * cx + c.E * cy + c.F;

  const double half_tr = (c.A + c.C) / 2.0;
  const double off = std::sqrt((c.A - c.C) * (c.A - c.C) / 4.0 + c.B * c.B / 4.0);
  double lam_small = half_tr - off;
  double lam_large = half_tr + off;

  // Both eigenvalues must carry the opposite sign of mu for real axes.
  if (mu > 0.0) {
    lam_small = -lam_small;
    lam_large = -lam_large;
    std::swap(lam_small, lam_large);
  }
  const double scale_val = std::abs(mu);
  if (!(lam_small > 0.0 && lam_large > 0.0) || scale_val <= 0.0)
    throw fit_error("conic degenerates to a point or imaginary ellipse");

  Ellipse e;
  e.cx = cx;
  e.cy = cy;
  e.a = std::sqrt(scale_val / lam_small);
  e.b = std::sqrt(scale_val / lam_large);

  // Major axis direction = eigenvector of the smaller |eigenvalue| of
  // [[A, B/2], [B/2, C]].
  const double sign = mu > 0.0 ? -1.0 : 1.0;
  const double a00 = sign * c.A, a01 = sign * c.B / 2.0, a11 = sign * c.C;
  double vx, vy;
  if (std::abs(a01) > 1e-300) {
    vx = a01;
    vy = lam_small - a00;
    if (std::abs(vy) < std::abs(lam_small - a11)) {
      vx = lam_small - a11;
      vy = a01;
    }
  } else {
    // Already axis-aligned.
    if (a00 <= a11) {
      vx = 1.0;
      vy = 0.0;
    } else {
      vx = 0.0;
      vy = 1.0;
    }
  }
  e.theta = wrap_half_turn(std::atan2(vy, vx));
  e.head_sign = HeadSign::unknown;
  e.depth = 0;
  return canonicalized(e);
}

Ellipse fit_ellipse(const std::vector<std::pair<double, double>>& points) {
  const std::size_t n = points.size();
  if (n < 6) throw fit_error("ellipse fit needs at least 6 points");

  // Shift to the centroid and scale to unit RMS radius before solving;
  // the raw formulation is ill-conditioned on pixel coordinates.
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double rms = 0.0;
  for (const auto& [x, y] : points) {
    const double dx = x - mx;
    const double dy = y - my;
    rms += dx * dx + dy * dy;
  }
  rms = std::sqrt(rms / static_cast<double>(n));
  if (!(rms > 0.0)) throw fit_error("all points coincide");
  const double s = 1.0 / rms;

  // Split design matrix: D1 = [u^2, uv, v^2], D2 = [u, v, 1].
  Eigen::Matrix3d s1 = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d s2 = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d s3 = Eigen::Matrix3d::Zero();
  for (const auto& [x, y] : points) {
    const double u = (x - mx) * s;
    const double v = (y - my) * s;
    Eigen::Vector3d d1(u * u, u * v, v * v);
    Eigen::Vector3d d2(u, v, 1.0);
    s1 += d1 * d1.transpose();
    s2 += d1 * d2.transpose();
    s3 += d2 * d2.transpose();
  }

  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible()) throw fit_error("degenerate point configuration");
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;

  // Reduced constraint matrix for 4AC - B^2 = 1; premultiplied by C1^-1.
  Eigen::Matrix3d c1_inv_m;
  c1_inv_m.row(0) = 0.5 * m.row(2);
  c1_inv_m.row(1) = -m.row(1);
  c1_inv_m.row(2) = 0.5 * m.row(0);

  Eigen::EigenSolver<Eigen::Matrix3d> eig(c1_inv_m);
  if (eig.info() != Eigen::Success) throw fit_error("eigen decomposition failed");

  // Exactly one eigenvector satisfies the ellipse constraint with a
  // positive value; if several qualify numerically, take the smallest
  // algebraic residual.
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  double best_residual = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(eig.eigenvalues()[k].imag()) > 1e-9 * (1.0 + std::abs(eig.eigenvalues()[k].real())))
      continue;
    Eigen::Vector3d v = eig.eigenvectors().col(k).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    if (cond <= 0.0) continue;
    v /= std::sqrt(cond);
    const Eigen::Vector3d v2 = t * v;
    double residual = 0.0;
    for (const auto& [x, y] : points) {
      const double u = (x - mx) * s;
      const double w = (y - my) * s;
      const double q = v[0] * u * u + v[1] * u * w + v[2] * w * w + v2[0] * u + v2[1] * w + v2[2];
      residual += q * q;
    }
    if (residual < best_residual) {
      best_residual = residual;
      best = v;
      found = true;
    }
  }
  if (!found) throw fit_error("no eigenvector satisfies the ellipse constraint");

  const Eigen::Vector3d lin = t * best;
  // De-normalize: substitute u = s(x - mx), v = s(y - my).
  const double s2_ = s * s;
  ConicCoefficients c;
  c.A = best[0] * s2_;
  c.B = best[1] * s2_;
  c.C = best[2] * s2_;
  c.D = -2.0 * best[0] * s2_ * mx - best[1] * s2_ * my + lin[0] * s;
  c.E = -best[1] * s2_ * mx - 2.0 * best[2] * s2_ * my + lin[1] * s;
  c.F = best[0] * s2_ * mx * mx + best[1] * s2_ * mx * my + best[2] * s2_ * my * my -
        lin[0] * s * mx - lin[1] * s * my + lin[2];
  return ellipse_from_conic(c);
}

std::vector<std::pair<int, int>> raster_pixels(const Ellipse& e, const GridSpec& grid) {
  require_valid(e);
  double x0, x1, y0, y1;
  bounding_box(e, x0, x1, y0, y1);
  const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int ix1 = std::min(grid.width - 1, static_cast<int>(std::ceil(x1)));
  const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int iy1 = std::min(grid.height - 1, static_cast<int>(std::ceil(y1)));
  std::vector<std::pair<int, int>> pixels;
  for (int y = iy0; y <= iy1; ++y)
    for (int x = ix0; x <= ix1; ++x)
      if (contains(e, x, y)) pixels.emplace_back(x, y);
  return pixels;
}

double ellipse_iou(const Ellipse& e1, const Ellipse& e2, const GridSpec& grid) {
  std::size_t inter = 0;
  std::size_t uni = 0;
  double x0a, x1a, y0a, y1a, x0b, x1b, y0b, y1b;
  bounding_box(e1, x0a, x1a, y0a, y1a);
  bounding_box(e2, x0b, x1b, y0b, y1b);
  const int ix0 = std::max(0, static_cast<int>(std::floor(std::min(x0a, x0b))));
  const int ix1 = std::min(grid.width - 1, static_cast<int>(std::ceil(std::max(x1a, x1b))));
  const int iy0 = std::max(0, static_cast<int>(std::floor(std::min(y0a, y0b))));
  const int iy1 = std::min(grid.height - 1, static_cast<int>(std::ceil(std::max(y1a, y1b))));
  for (int y = iy0; y <= iy1; ++y) {
    for (int x = ix0; x <= ix1; ++x) {
      const bool in1 = contains(e1, x, y);
      const bool in2 = contains(e2, x, y);
      if (in1 && in2) ++inter;
      if (in1 || in2) ++uni;
    }
  }
  if (uni == 0) throw std::invalid_argument("both ellipses rasterize to zero pixels");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

void to_json(nlohmann::json& j, const Ellipse& e) {
  j = nlohmann::json{{"cx", e.cx},       {"cy", e.cy},
                     {"a", e.a},         {"b", e.b},
                     {"theta", e.theta}, {"head_sign", static_cast<int>(e.head_sign)},
                     {"depth", e.depth}};
}

void from_json(const nlohmann::json& j, Ellipse& e) {
  e.cx = j.at("cx").get<double>();
  e.cy = j.at("cy").get<double>();
  e.a = j.at("a").get<double>();
  e.b = j.at("b").get<double>();
  e.theta = j.at("theta").get<double>();
  const int hs = j.at("head_sign").get<int>();
  if (hs != -1 && hs != 0 && hs != 1) throw std::invalid_argument("head_sign must be -1, 0 or +1");
  e.head_sign = static_cast<HeadSign>(hs);
  e.depth = j.at("depth").get<int>();
}

std::vector<Ellipse> read_ellipses_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  std::vector<Ellipse> out;
  for (const auto& item : j) {
    Ellipse e = item.get<Ellipse>();
    require_valid(e);
    out.push_back(e);
  }
  return out;
}

void write_ellipses_json(const std::string& path, const std::vector<Ellipse>& ellipses) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : ellipses) j.push_back(e);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace pigseg
