#include "doctest.h"
#include "ufem/geometry.hpp"

#include <cmath>
#include <fstream>
#include <random>

using namespace ufem;

TEST_CASE("classify_point on the unit circle") {
  auto circle = make_circle({0, 0}, 1.0);
  double eps = 1e-12 * 2.0;
  CHECK(classify_point(circle, {0, 0}, eps) == Side::kInside);
  CHECK(classify_point(circle, {2, 0}, eps) == Side::kOutside);
  CHECK(classify_point(circle, {0.3, -0.4}, eps) == Side::kInside);
  CHECK(classify_point(circle, {0.8, 0.8}, eps) == Side::kOutside);
}

TEST_CASE("classify_point five-star center (winding oracle)") {
  auto star = make_five_star();
  double eps = 1e-12 * 4.0;
  CHECK(classify_point(star, {0, 0}, eps) == Side::kInside);
  // Brute-force winding number over a very dense polyline as the oracle.
  const int N = 200000;
  auto angle = [](Point a, Point b) {
    return std::atan2(a.cross(b), a.dot(b));
  };
  double total = 0.0;
  Point p{0, 0};
  Point prev = star.at(0.0) - p;
  for (int i = 1; i <= N; ++i) {
    Point cur = star.at(5.0 * i / N) - p;
    total += angle(prev, cur);
    prev = cur;
  }
  CHECK(std::abs(total - 2 * M_PI) < 1e-6);  // winding 1 -> inside
}

TEST_CASE("classify_point rejects open curves") {
  std::vector<CurveSegment> segs;
  segs.emplace_back([](double t) { return Point{t, t}; },
                    [](double) { return Vec2{1, 1}; });
  PiecewiseCurve open(std::move(segs), false);
  CHECK_THROWS_AS(classify_point(open, {0, 0}, 1e-12), UsageError);
}

TEST_CASE("classify_point inside convex curve, dense sample property") {
  auto circle = make_circle({0.2, -0.1}, 0.7);
  double eps = 1e-12 * 1.4;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ur(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    double r = 0.65 * std::sqrt(ur(rng));
    double th = 2 * M_PI * ur(rng);
    Point p{0.2 + r * std::cos(th), -0.1 + r * std::sin(th)};
    CHECK(classify_point(circle, p, eps) == Side::kInside);
  }
}

TEST_CASE("edge_intersections: circle vs vertical edge") {
  auto circle = make_circle({0, 0}, 0.5);
  // Edge (0.3,0)-(0.3,1) meets the circle once at (0.3, 0.4).
  int hits = 0;
  for (int s = 0; s < circle.num_segments(); ++s) {
    auto xs = edge_intersections(circle.segment(s), {0.3, 0.0}, {0.3, 1.0},
                                 1e-12);
    for (const auto& x : xs) {
      ++hits;
      CHECK(x.point.x == doctest::Approx(0.3).epsilon(1e-10));
      CHECK(x.point.y == doctest::Approx(0.4).epsilon(1e-10));
    }
  }
  CHECK(hits == 1);
}

TEST_CASE("edge_intersections: diagonal segment vs horizontal edge") {
  std::vector<CurveSegment> segs;
  segs.emplace_back([](double t) { return Point{t, t}; },
                    [](double) { return Vec2{1, 1}; });
  PiecewiseCurve diag(std::move(segs), false);
  auto xs = edge_intersections(diag.segment(0), {0.0, 0.5}, {1.0, 0.5}, 1e-12);
  REQUIRE(xs.size() == 1);
  CHECK(xs[0].point.x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(xs[0].point.y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("edge_intersections symmetric under edge reversal") {
  auto circle = make_circle({0.1, 0.2}, 0.55);
  for (int s = 0; s < circle.num_segments(); ++s) {
    auto f = edge_intersections(circle.segment(s), {-0.5, 0.0}, {0.9, 0.0}, 1e-12);
    auto b = edge_intersections(circle.segment(s), {0.9, 0.0}, {-0.5, 0.0}, 1e-12);
    REQUIRE(f.size() == b.size());
    for (size_t i = 0; i < f.size(); ++i)
      CHECK(f[i].t_seg == doctest::Approx(b[i].t_seg).epsilon(1e-10));
  }
}

TEST_CASE("edge_intersections: tangency reports no hits") {
  auto circle = make_circle({0, 0}, 0.5);
  int hits = 0;
  for (int s = 0; s < circle.num_segments(); ++s)
    hits += (int)edge_intersections(circle.segment(s), {0.5, -1.0}, {0.5, 1.0},
                                    1e-12).size();
  CHECK(hits == 0);
}

TEST_CASE("chord_deviation basics") {
  double eps = 1e-12;
  SUBCASE("straight arc deviates zero") {
    auto arc = [](double t) { return Point{t, 0.0}; };
    double d = chord_deviation(arc, {0, 0}, {1, 0}, {0.5, 1.0}, eps);
    CHECK(d == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("60-degree circular arc, apex at distance 1") {
    // Unit-radius arc spanning 60 degrees: chord length 1, sagitta 1-cos(30deg).
    auto arc = [](double t) {
      double th = M_PI / 3 + t * (2 * M_PI / 3 - M_PI / 3);
      return Point{std::cos(th), std::sin(th)};
    };
    Point a = arc(0.0), b = arc(1.0);
    Vec2 mid = (a + b) * 0.5;
    Vec2 n = (b - a).rot90().normalized();
    Point apex1 = Point{mid.x, mid.y} + n * 1.0;
    double expect = 1.0 - std::cos(M_PI / 6);  // 0.13397459621556135
    double d1 = chord_deviation(arc, a, b, apex1, eps);
    CHECK(d1 == doctest::Approx(expect).epsilon(2e-4));
    Point apex2 = Point{mid.x, mid.y} + n * 2.0;
    double d2 = chord_deviation(arc, a, b, apex2, eps);
    CHECK(d2 == doctest::Approx(expect / 2).epsilon(2e-4));
  }
  SUBCASE("degenerate chord is an error") {
    auto arc = [](double) { return Point{0, 0}; };
    CHECK_THROWS_AS(chord_deviation(arc, {0, 0}, {0, 0}, {1, 1}, 1e-12),
                    GeometryError);
  }
}

TEST_CASE("chord deviation refinement: halving the arc quarters the sagitta") {
  double eps = 1e-12;
  auto full = [](double t) {
    double th = t * (M_PI / 3);
    return Point{std::cos(th), std::sin(th)};
  };
  auto half = [](double t) {
    double th = t * (M_PI / 6);
    return Point{std::cos(th), std::sin(th)};
  };
  Point apex{0.0, 0.0};  // circle center
  double dfull = chord_deviation(full, full(0), full(1), apex, eps);
  double dhalf = chord_deviation(half, half(0), half(1), apex, eps);
  CHECK(dhalf < 0.5 * dfull);
  // Pure sagitta (deviation times apex-to-chord distance) shrinks by the
  // asymptotic factor 4 when the arc is halved: (1-cos30)/(1-cos15) = 3.93.
  double sfull = dfull * point_segment_distance(apex, full(0), full(1));
  double shalf = dhalf * point_segment_distance(apex, half(0), half(1));
  CHECK(sfull / shalf == doctest::Approx((1 - std::cos(M_PI / 6)) /
                                         (1 - std::cos(M_PI / 12))).epsilon(0.01));
}

TEST_CASE("singular vertices of the benchmark curves") {
  auto star = make_five_star();
  CHECK(star.singular_vertices().size() == 5);
  double q0 = 2 * std::pow(M_PI / 5, 2) + 4.0 / 9.0;
  for (const auto& sv : star.singular_vertices())
    CHECK(sv.point.norm() == doctest::Approx(q0).epsilon(1e-9));

  auto lens = make_lens(2 * M_PI / 5);
  CHECK(lens.singular_vertices().size() == 2);
  double s3 = std::sqrt(3.0) / 2.0, th = 2 * M_PI / 5;
  Point A{-s3 * std::sin(th), s3 * std::cos(th)};
  bool found = false;
  for (const auto& sv : lens.singular_vertices())
    if ((sv.point - A).norm() < 1e-9) found = true;
  CHECK(found);

  auto circle = make_circle({0, 0}, 1.0);  // tangential junctions: not singular
  CHECK(circle.singular_vertices().empty());
}

TEST_CASE("near-tangent junction below theta_tol is not singular") {
  // Two straight pieces meeting at 179.999 degrees (turn under 1e-6 rad is
  // tangential; this turn is ~1.7e-5 rad, above the tolerance).
  double turn = (180.0 - 179.999) * M_PI / 180.0;
  std::vector<CurveSegment> segs;
  Vec2 d1{1.0, 0.0};
  Vec2 d2{std::cos(turn), std::sin(turn)};
  segs.emplace_back([=](double t) { return Point{t, 0}; },
                    [=](double) { return d1; });
  segs.emplace_back([=](double t) { return Point{1 + t * d2.x, t * d2.y}; },
                    [=](double) { return d2; });
  PiecewiseCurve c(std::move(segs), false);
  CHECK(c.singular_vertices().size() == 1);  // above default theta_tol
  PiecewiseCurve c2({c.segment(0), c.segment(1)}, false, 1e-4);
  CHECK(c2.singular_vertices().empty());  // below a coarser tolerance
}

TEST_CASE("curve description file round trip") {
  const char* path = "test_curve_file.txt";
  {
    std::ofstream out(path);
    out << "# unit square\n";
    out << "line 0 0 1 0\n";
    out << "line 1 0 1 1\n";
    out << "line 1 1 0 1\n";
    out << "line 0 1 0 0\n";
  }
  auto c = load_curve_file(path);
  CHECK(c.num_segments() == 4);
  CHECK(c.closed());
  CHECK(c.singular_vertices().size() == 4);
  CHECK(classify_point(c, {0.5, 0.5}, 1e-12) == Side::kInside);
  std::remove(path);
}

TEST_CASE("domain config regions") {
  DomainConfig dom;
  dom.outer = make_square({-2, -2}, {2, 2});
  dom.outer_fitted = true;
  dom.interfaces.push_back(make_circle({0, 0}, 1.0));
  dom.a1 = 10.0;
  dom.a2 = 1.0;
  dom.finalize();
  CHECK(dom.region_of({0, 0}) == 1);
  CHECK(dom.region_of({1.5, 0}) == 2);
  CHECK(dom.region_of({3, 0}) == 0);
  CHECK(dom.coeff(1) == 10.0);
  CHECK(dom.coeff(2) == 1.0);
}
