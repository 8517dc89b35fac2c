#pragma once

// Parametric piecewise-C2 curves (interfaces and boundaries), point
// classification, curve/segment intersection and chord deviation.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufem {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 normalized() const { double n = norm(); return {x / n, y / n}; }
  Vec2 rot90() const { return {-y, x}; }
};
inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

using Point = Vec2;

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One C2-smooth piece of a curve, parametrized over t in [0,1] with a
// nonvanishing derivative.
class CurveSegment {
 public:
  using MapFn = std::function<Point(double)>;
  using DerFn = std::function<Vec2(double)>;

  CurveSegment() = default;
  CurveSegment(MapFn map, DerFn der, bool forward = true)
      : map_(std::move(map)), der_(std::move(der)), forward_(forward) {}

  Point at(double t) const { return map_(t); }
  Vec2 tangent(double t) const { return der_(t); }
  bool forward() const { return forward_; }

  Point start() const { return at(0.0); }
  Point end() const { return at(1.0); }

  // Polyline approximation with n+1 points, cached for repeated queries.
  const std::vector<Point>& polyline(int n) const;

  double arc_length_estimate() const;

 private:
  MapFn map_;
  DerFn der_;
  bool forward_ = true;
  mutable std::vector<Point> cached_poly_;
};

// Closed or open chain of segments. Consecutive segments share endpoints;
// junctions where the tangent direction turns by more than theta_tol are
// recorded as singular vertices.
class PiecewiseCurve {
 public:
  struct SingularVertex {
    Point point;
    int seg_before = -1;  // segment ending at the vertex
    int seg_after = -1;   // segment starting at the vertex
    Vec2 arm_in;          // unit tangent of incoming piece (pointing away from vertex)
    Vec2 arm_out;         // unit tangent of outgoing piece (pointing away from vertex)
  };

  PiecewiseCurve() = default;
  PiecewiseCurve(std::vector<CurveSegment> segs, bool closed,
                 double theta_tol = 1e-6);

  int num_segments() const { return static_cast<int>(segments_.size()); }
  const CurveSegment& segment(int i) const { return segments_[i]; }
  bool closed() const { return closed_; }
  const std::vector<SingularVertex>& singular_vertices() const {
    return singular_;
  }

  // Global parameter: t in [0, n_segments), piece i covers [i, i+1).
  Point at(double t) const;
  Vec2 tangent(double t) const;
  double param_span() const { return static_cast<double>(segments_.size()); }

  // Dense polyline of the whole curve (closed: first point not repeated).
  const std::vector<Point>& dense_polyline() const;
  void bounding_box(Point& lo, Point& hi) const;

  double distance_to(const Point& p) const;

  // Fast queries against the dense polyline (bucketed).
  bool winding_inside(const Point& p) const;
  // Minimum distance to the curve when the point lies within about one grid
  // cell of it; returns a value larger than `far` otherwise.
  double near_distance(const Point& p, double far) const;

 private:
  struct Accel;
  void build_accel() const;

  std::vector<CurveSegment> segments_;
  bool closed_ = false;
  std::vector<SingularVertex> singular_;
  mutable std::vector<Point> dense_poly_;
  mutable std::shared_ptr<Accel> accel_;
};

enum class Side { kInside, kOutside, kOnCurve };

// Winding-number classification against the dense polyline; points within
// eps_geom of the curve report kOnCurve.
Side classify_point(const PiecewiseCurve& curve, const Point& p,
                    double eps_geom);

struct EdgeIntersection {
  double t_seg = 0.0;    // parameter on the curve segment
  Point point;
  double s_edge = 0.0;   // relative position along the query edge in [0,1]
  double cross_angle = 0.0;  // angle between curve tangent and edge
};

// All transversal intersections of one curve segment with an axis-aligned
// segment e = [a,b]. Tangential grazes (crossing angle below angle_tol) are
// dropped, following the convention that a curve tangent to an edge does not
// intersect it.
std::vector<EdgeIntersection> edge_intersections(const CurveSegment& seg,
                                                 const Point& a, const Point& b,
                                                 double eps_geom,
                                                 double angle_tol = 1e-6);

// One-sided Hausdorff distance from the chord to the arc divided by the
// distance from the apex to the chord. `arc` samples the sub-curve, chord is
// the straight segment between the arc endpoints, `apex` the opposite vertex.
double chord_deviation(const std::function<Point(double)>& arc,
                       const Point& chord_a, const Point& chord_b,
                       const Point& apex, double eps_geom,
                       int chord_samples = 65, int arc_samples = 257);

double point_segment_distance(const Point& p, const Point& a, const Point& b);

// Domain description: outer boundary, optional interior boundary components
// (holes) and interface components, with the piecewise-constant coefficient.
struct DomainConfig {
  PiecewiseCurve outer;                 // Sigma, outer component
  std::vector<PiecewiseCurve> holes;    // Sigma, interior components
  std::vector<PiecewiseCurve> interfaces;  // Gamma components
  double a1 = 1.0;  // coefficient in Omega_1 (inside the interface)
  double a2 = 1.0;  // coefficient in Omega_2
  // When true the outer boundary coincides with the mesh bounding box and is
  // treated as mesh-aligned (no cut cells; boundary data lives on mesh faces).
  bool outer_fitted = false;
  Point box_lo, box_hi;  // root-mesh bounding box
  double eps_geom = 0.0;  // set by finalize(): 1e-12 * diam

  void finalize();

  // Region of a point: 1 = inside an interface (Omega_1), 2 = in Omega_2,
  // 0 = outside the domain.
  int region_of(const Point& p) const;
  double coeff(int region) const { return region == 1 ? a1 : a2; }

  int num_curves() const {
    return (outer_fitted ? 0 : 1) + static_cast<int>(holes.size()) +
           static_cast<int>(interfaces.size());
  }
  // Curve indexing: unfitted outer first (if present), then holes, then
  // interfaces.
  const PiecewiseCurve& curve(int id) const;
  bool curve_is_interface(int id) const;
};

// Built-in benchmark curves.
PiecewiseCurve make_circle(Point center, double radius);
PiecewiseCurve make_lens(double theta);               // Example 1 domain
PiecewiseCurve make_five_star();                      // Example 2 interface
PiecewiseCurve make_diamond(double alpha, double beta, double b1, double b2);
PiecewiseCurve make_smoothed_diamond(double alpha, double beta, double b1,
                                     double b2, double eps);
PiecewiseCurve make_square(Point lo, Point hi);

// Plain-text curve description: one segment per line,
//   line x0 y0 x1 y1
//   arc cx cy r theta0 theta1
PiecewiseCurve load_curve_file(const std::string& path);

}  // namespace ufem
