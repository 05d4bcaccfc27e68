#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pigseg/geometry.hpp"

using namespace pigseg;

namespace {

std::vector<std::pair<double, double>> sample_boundary(const Ellipse& e, int count) {
  std::vector<std::pair<double, double>> points;
  const double ct = std::cos(e.theta);
  const double st = std::sin(e.theta);
  for (int i = 0; i < count; ++i) {
    const double t = 2.0 * M_PI * i / count;
    const double u = e.a * std::cos(t);
    const double v = e.b * std::sin(t);
    points.emplace_back(e.cx + u * ct - v * st, e.cy + u * st + v * ct);
  }
  return points;
}

double angle_diff_mod_pi(double lhs, double rhs) {
  double d = std::fmod(std::abs(lhs - rhs), M_PI);
  return std::min(d, M_PI - d);
}

Ellipse random_ellipse(std::mt19937& rng) {
  std::uniform_real_distribution<double> center(20.0, 80.0);
  std::uniform_real_distribution<double> major(8.0, 20.0);
  std::uniform_real_distribution<double> ratio(0.3, 1.0);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  Ellipse e;
  e.cx = center(rng);
  e.cy = center(rng);
  e.a = major(rng);
  e.b = e.a * ratio(rng);
  e.theta = angle(rng);
  return e;
}

}  // namespace

TEST_CASE("contains: unit circle basics") {
  const Ellipse unit{0.0, 0.0, 1.0, 1.0, 0.0};
  CHECK(contains(unit, 0.0, 0.0));
  CHECK_FALSE(contains(unit, 2.0, 0.0));
  CHECK(contains(unit, 1.0, 0.0));  // boundary included
}

TEST_CASE("contains: rotated ellipse quadratic form") {
  // a=2 along theta=pi/2 (vertical), b=1 horizontal.
  const Ellipse e{0.0, 0.0, 2.0, 1.0, M_PI / 2.0};
  // (0,1.9): u=1.9 along major -> 1.9^2/4 = 0.9025 <= 1.
  CHECK(contains(e, 0.0, 1.9));
  // (1.9,0): v=-1.9 along minor -> 3.61 > 1.
  CHECK_FALSE(contains(e, 1.9, 0.0));
}

TEST_CASE("scale: inverse pair and area scaling") {
  Ellipse e{10.0, 20.0, 4.0, 2.0, 0.3};
  const Ellipse back = scale(scale(e, 0.5), 2.0);
  CHECK(back.a == e.a);
  CHECK(back.b == e.b);

  const Ellipse half = scale(e, 0.5);
  CHECK(half.a == doctest::Approx(2.0));
  CHECK(half.b == doctest::Approx(1.0));

  const double k = 0.7;
  CHECK(area(scale(e, k)) == doctest::Approx(k * k * area(e)).epsilon(1e-12));

  CHECK_THROWS_AS(scale(e, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(scale(e, -1.0), std::invalid_argument);
}

TEST_CASE("fit_ellipse: exact boundary samples recovered to 1e-6") {
  const Ellipse truth{50.0, 40.0, 20.0, 10.0, 0.6};
  const Ellipse fit = fit_ellipse(sample_boundary(truth, 100));
  CHECK(std::abs(fit.cx - truth.cx) / truth.cx < 1e-6);
  CHECK(std::abs(fit.cy - truth.cy) / truth.cy < 1e-6);
  CHECK(std::abs(fit.a - truth.a) / truth.a < 1e-6);
  CHECK(std::abs(fit.b - truth.b) / truth.b < 1e-6);
  CHECK(angle_diff_mod_pi(fit.theta, truth.theta) < 1e-6);
  CHECK(fit.head_sign == HeadSign::unknown);
}

TEST_CASE("fit_ellipse: degenerate input raises fit_error") {
  std::vector<std::pair<double, double>> five{{0, 0}, {1, 0}, {2, 1}, {0, 2}, {2, 2}};
  CHECK_THROWS_AS(fit_ellipse(five), fit_error);

  std::vector<std::pair<double, double>> collinear;
  for (int i = 0; i < 20; ++i) collinear.emplace_back(i, 2.0 * i + 1.0);
  CHECK_THROWS_AS(fit_ellipse(collinear), fit_error);

  std::vector<std::pair<double, double>> coincident(10, {3.0, 4.0});
  CHECK_THROWS_AS(fit_ellipse(coincident), fit_error);
}

TEST_CASE("fit_ellipse: filled raster disk gives a centered circle") {
  const Ellipse disk{15.0, 15.0, 10.0, 10.0, 0.0};
  const auto pixels = raster_pixels(disk, {31, 31});
  std::vector<std::pair<double, double>> points;
  for (const auto& [x, y] : pixels) points.emplace_back(x, y);
  const Ellipse fit = fit_ellipse(points);
  CHECK(std::abs(fit.cx - 15.0) < 0.5);
  CHECK(std::abs(fit.cy - 15.0) < 0.5);
  CHECK(fit.a / fit.b < 1.05);  // circular up to raster asymmetry
}

TEST_CASE("fit_ellipse: invariant under point permutation") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Ellipse truth = random_ellipse(rng);
    auto points = sample_boundary(truth, 60);
    const Ellipse direct = fit_ellipse(points);
    std::shuffle(points.begin(), points.end(), rng);
    const Ellipse shuffled = fit_ellipse(points);
    CHECK(std::abs(direct.cx - shuffled.cx) < 1e-6);
    CHECK(std::abs(direct.cy - shuffled.cy) < 1e-6);
    CHECK(std::abs(direct.a - shuffled.a) < 1e-6);
    CHECK(std::abs(direct.b - shuffled.b) < 1e-6);
    CHECK(angle_diff_mod_pi(direct.theta, shuffled.theta) < 1e-6);
  }
}

TEST_CASE("fit_ellipse: equivariant under rigid transformation") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> shift(-30.0, 30.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Ellipse truth = random_ellipse(rng);
    const auto points = sample_boundary(truth, 60);
    const Ellipse direct = fit_ellipse(points);

    const double phi = angle(rng);
    const double tx = shift(rng);
    const double ty = shift(rng);
    std::vector<std::pair<double, double>> moved;
    for (const auto& [x, y] : points)
      moved.emplace_back(x * std::cos(phi) - y * std::sin(phi) + tx,
                         x * std::sin(phi) + y * std::cos(phi) + ty);
    const Ellipse fit_moved = fit_ellipse(moved);

    // Transform the direct fit forward and compare.
    const double ex = direct.cx * std::cos(phi) - direct.cy * std::sin(phi) + tx;
    const double ey = direct.cx * std::sin(phi) + direct.cy * std::cos(phi) + ty;
    CHECK(std::abs(fit_moved.cx - ex) < 1e-6);
    CHECK(std::abs(fit_moved.cy - ey) < 1e-6);
    CHECK(std::abs(fit_moved.a - direct.a) < 1e-6);
    CHECK(std::abs(fit_moved.b - direct.b) < 1e-6);
    CHECK(angle_diff_mod_pi(fit_moved.theta, direct.theta + phi) < 1e-6);
  }
}

TEST_CASE("contains: scale monotonicity") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  std::uniform_real_distribution<double> factor(1.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Ellipse e = random_ellipse(rng);
    const double x = coord(rng);
    const double y = coord(rng);
    if (contains(e, x, y)) CHECK(contains(scale(e, factor(rng)), x, y));
  }
}

TEST_CASE("ellipse_iou: identical, disjoint and analytic circle pair") {
  const GridSpec grid{280, 200};
  const Ellipse a{100.0, 100.0, 30.0, 18.0, 0.4};
  CHECK(ellipse_iou(a, a, grid) == doctest::Approx(1.0));

  const Ellipse far{230.0, 100.0, 20.0, 10.0, 1.2};
  CHECK(ellipse_iou(a, far, grid) == doctest::Approx(0.0));

  // Unit-radius circles, centers one radius apart, scaled onto the grid.
  // Closed-form lens area: 2 r^2 acos(d/2r) - (d/2) sqrt(4 r^2 - d^2).
  const double r = 60.0;
  const double d = 60.0;
  const double lens = 2.0 * r * r * std::acos(d / (2.0 * r)) - (d / 2.0) * std::sqrt(4.0 * r * r - d * d);
  const double expected = lens / (2.0 * M_PI * r * r - lens);
  CHECK(expected == doctest::Approx(0.24303).epsilon(1e-3));
  const Ellipse c1{100.0, 100.0, r, r, 0.0};
  const Ellipse c2{100.0 + d, 100.0, r, r, 0.0};
  CHECK(std::abs(ellipse_iou(c1, c2, grid) - expected) < 0.02);

  // Zero-raster inputs are an error.
  const GridSpec tiny{5, 5};
  const Ellipse off{100.0, 100.0, 1.0, 1.0, 0.0};
  CHECK_THROWS_AS(ellipse_iou(off, off, tiny), std::invalid_argument);
}

TEST_CASE("ellipse_iou: symmetric") {
  std::mt19937 rng(23);
  const GridSpec grid{120, 120};
  for (int trial = 0; trial < 20; ++trial) {
    const Ellipse a = random_ellipse(rng);
    const Ellipse b = random_ellipse(rng);
    CHECK(ellipse_iou(a, b, grid) == ellipse_iou(b, a, grid));
  }
}

TEST_CASE("conic round trip") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Ellipse e = random_ellipse(rng);
    const ConicCoefficients c = conic_from_ellipse(e);
    CHECK(c.B * c.B - 4.0 * c.A * c.C < 0.0);
    const Ellipse back = ellipse_from_conic(c);
    CHECK(back.cx == doctest::Approx(e.cx).epsilon(1e-9));
    CHECK(back.cy == doctest::Approx(e.cy).epsilon(1e-9));
    CHECK(back.a == doctest::Approx(e.a).epsilon(1e-9));
    CHECK(back.b == doctest::Approx(e.b).epsilon(1e-9));
    CHECK(angle_diff_mod_pi(back.theta, e.theta) < 1e-9);
  }
}

TEST_CASE("canonicalized keeps the directed end stable") {
  Ellipse e{0.0, 0.0, 2.0, 4.0, 0.2, HeadSign::positive, 0};  // a < b on purpose
  const Ellipse canon = canonicalized(e);
  CHECK(canon.a == 4.0);
  CHECK(canon.b == 2.0);
  CHECK(canon.theta == doctest::Approx(0.2 + M_PI / 2.0));
  // The rotated theta stays within [0, pi): no direction flip here.
  CHECK(canon.head_sign == HeadSign::positive);

  Ellipse wrapped{0.0, 0.0, 4.0, 2.0, 0.2 + M_PI, HeadSign::positive, 0};
  const Ellipse canon2 = canonicalized(wrapped);
  CHECK(canon2.theta == doctest::Approx(0.2));
  CHECK(canon2.head_sign == HeadSign::negative);
  CHECK(directed_angle(canon2) == doctest::Approx(0.2 + M_PI));
}

TEST_CASE("ellipse JSON round trip") {
  const std::string path = "test_ellipses.json";
  std::vector<Ellipse> ellipses{{50.5, 40.25, 20.0, 10.0, 0.6, HeadSign::positive, 2},
                                {10.0, 12.0, 5.0, 3.0, 1.1, HeadSign::unknown, 1}};
  write_ellipses_json(path, ellipses);
  const std::vector<Ellipse> back = read_ellipses_json(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].cx == 50.5);
  CHECK(back[0].theta == 0.6);
  CHECK(back[0].head_sign == HeadSign::positive);
  CHECK(back[0].depth == 2);
  CHECK(back[1].head_sign == HeadSign::unknown);
  std::remove(path.c_str());
}
