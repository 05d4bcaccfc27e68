#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pigseg {

/// Thrown when a direct least-squares fit cannot produce a valid ellipse
/// (too few points, collinear input, no eigenvector satisfying the
/// ellipse constraint).
struct fit_error : std::runtime_error {
  explicit fit_error(const std::string& what) : std::runtime_error(what) {}
};

enum class HeadSign : int {
  unknown = 0,
  positive = +1,  // head lies at the +theta end of the major axis
  negative = -1,  // head lies at the theta+pi end
};

/// Elliptical annotation primitive. Canonical form: a >= b > 0,
/// theta in [0, pi). The directed orientation (which end is the head)
/// is carried separately in head_sign; depth rank orders occlusion,
/// larger = nearer the camera.
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;
  HeadSign head_sign = HeadSign::unknown;
  int depth = 0;
};

/// General conic Ax^2 + Bxy + Cy^2 + Dx + Ey + F = 0 restricted to
/// ellipses (B^2 - 4AC < 0).
struct ConicCoefficients {
  double A = 0.0, B = 0.0, C = 0.0, D = 0.0, E = 0.0, F = 0.0;
};

/// Integer pixel grid; pixel (x, y) is sampled at its center point
/// (x, y) for x in [0, width), y in [0, height).
struct GridSpec {
  int width = 0;
  int height = 0;
};

inline double area(const Ellipse& e) { return M_PI * e.a * e.b; }

bool is_valid(const Ellipse& e);
void require_valid(const Ellipse& e);

/// Normalizes to the canonical form: swaps axes if a < b (rotating theta
/// by pi/2) and wraps theta into [0, pi). head_sign is preserved relative
/// to the resulting major axis direction.
Ellipse canonicalized(const Ellipse& e);

/// Directed orientation angle: theta for head_sign=+1, theta+pi for -1.
/// Throws std::invalid_argument when head_sign is unknown.
double directed_angle(const Ellipse& e);

/// True iff (x, y) lies inside or on the boundary, evaluated with the
/// rotated-axes quadratic form.
bool contains(const Ellipse& e, double x, double y);

/// Scales both semi-axes by factor; center, theta, head_sign and depth
/// are unchanged. factor must be positive.
Ellipse scale(const Ellipse& e, double factor);

/// Direct least-squares ellipse fit (Fitzgibbon constraint 4AC - B^2 = 1)
/// on the given points, solved in a centered/unit-RMS frame for numerical
/// stability. Needs at least 6 points in general position; the returned
/// ellipse has head_sign unknown and depth 0. Throws fit_error on
/// degenerate input.
Ellipse fit_ellipse(const std::vector<std::pair<double, double>>& points);

/// Conic coefficients of the ellipse boundary (normalized so F-free scale
/// is arbitrary; discriminant is negative by construction).
ConicCoefficients conic_from_ellipse(const Ellipse& e);

/// Geometric parameters of an elliptical conic. Throws fit_error when the
/// coefficients do not describe a real ellipse.
Ellipse ellipse_from_conic(const ConicCoefficients& c);

/// Pixel centers of the grid covered by the ellipse, row-major order.
std::vector<std::pair<int, int>> raster_pixels(const Ellipse& e, const GridSpec& grid);

/// Rasterized intersection-over-union of two ellipses on a shared grid.
/// Throws std::invalid_argument when both rasters are empty.
double ellipse_iou(const Ellipse& e1, const Ellipse& e2, const GridSpec& grid);

void to_json(nlohmann::json& j, const Ellipse& e);
void from_json(const nlohmann::json& j, Ellipse& e);

/// Annotation files are JSON arrays of ellipse objects.
std::vector<Ellipse> read_ellipses_json(const std::string& path);
void write_ellipses_json(const std::string& path, const std::vector<Ellipse>& ellipses);

}  // namespace pigseg
