#include "ufem/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ufem {

const std::vector<Point>& CurveSegment::polyline(int n) const {
  if (static_cast<int>(cached_poly_.size()) != n + 1) {
    cached_poly_.resize(n + 1);
    for (int i = 0; i <= n; ++i) cached_poly_[i] = at(double(i) / n);
  }
  return cached_poly_;
}

double CurveSegment::arc_length_estimate() const {
  const auto& poly = polyline(64);
  double len = 0.0;
  for (size_t i = 1; i < poly.size(); ++i) len += (poly[i] - poly[i - 1]).norm();
  return len;
}

PiecewiseCurve::PiecewiseCurve(std::vector<CurveSegment> segs, bool closed,
                               double theta_tol)
    : segments_(std::move(segs)), closed_(closed) {
  const int n = num_segments();
  if (n == 0) return;
  for (int i = 0; i + 1 < n; ++i) {
    double gap = (segments_[i].end() - segments_[i + 1].start()).norm();
    if (gap > 1e-9 * (1.0 + segments_[i].arc_length_estimate()))
      throw UsageError("piecewise curve: segments " + std::to_string(i) +
                       " and " + std::to_string(i + 1) + " do not meet");
  }
  if (closed_) {
    double gap = (segments_[n - 1].end() - segments_[0].start()).norm();
    if (gap > 1e-9 * (1.0 + segments_[0].arc_length_estimate()))
      throw UsageError("piecewise curve: not closed");
  }
  // Junction scan: a vertex is singular when the one-sided tangents disagree
  // by more than theta_tol.
  const int njunc = closed_ ? n : n - 1;
  for (int i = 0; i < njunc; ++i) {
    int j = (i + 1) % n;
    Vec2 tin = segments_[i].tangent(1.0).normalized();
    Vec2 tout = segments_[j].tangent(0.0).normalized();
    double ang = std::atan2(std::abs(tin.cross(tout)), tin.dot(tout));
    if (tin.dot(tout) < 0.0) ang = M_PI - std::atan2(std::abs(tin.cross(tout)), -tin.dot(tout));
    if (std::abs(ang) > theta_tol) {
      SingularVertex sv;
      sv.point = segments_[j].start();
      sv.seg_before = i;
      sv.seg_after = j;
      sv.arm_in = (tin * -1.0).normalized();  // pointing away from the vertex
      sv.arm_out = tout;
      singular_.push_back(sv);
    }
  }
}

Point PiecewiseCurve::at(double t) const {
  const int n = num_segments();
  if (closed_) {
    t = std::fmod(t, double(n));
    if (t < 0) t += n;
  }
  int i = std::min(n - 1, std::max(0, int(std::floor(t))));
  return segments_[i].at(std::min(1.0, std::max(0.0, t - i)));
}

Vec2 PiecewiseCurve::tangent(double t) const {
  const int n = num_segments();
  if (closed_) {
    t = std::fmod(t, double(n));
    if (t < 0) t += n;
  }
  int i = std::min(n - 1, std::max(0, int(std::floor(t))));
  return segments_[i].tangent(std::min(1.0, std::max(0.0, t - i)));
}

const std::vector<Point>& PiecewiseCurve::dense_polyline() const {
  if (dense_poly_.empty()) {
    // Adaptive density: enough points that the polyline sagitta is far below
    // the classification tolerance for the benchmark curves.
    for (const auto& seg : segments_) {
      int n = 2048;
      const auto& poly = seg.polyline(n);
      for (int i = 0; i < n; ++i) dense_poly_.push_back(poly[i]);
    }
    if (!closed_) dense_poly_.push_back(segments_.back().end());
  }
  return dense_poly_;
}

void PiecewiseCurve::bounding_box(Point& lo, Point& hi) const {
  const auto& poly = dense_polyline();
  lo = hi = poly[0];
  for (const auto& p : poly) {
    lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y);
  }
}

double PiecewiseCurve::distance_to(const Point& p) const {
  const auto& poly = dense_polyline();
  double d = std::numeric_limits<double>::max();
  const size_t n = poly.size();
  const size_t last = closed_ ? n : n - 1;
  for (size_t i = 0; i < last; ++i) {
    d = std::min(d, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
  }
  return d;
}

struct PiecewiseCurve::Accel {
  Point lo, hi;
  int nyb = 512;
  std::vector<std::vector<int>> ybuckets;  // polyline edge ids per y-slab
  int gx = 128, gy = 128;
  std::vector<std::vector<int>> grid;      // polyline edge ids per 2D cell
  double cw = 0, ch = 0;
};

void PiecewiseCurve::build_accel() const {
  if (accel_) return;
  auto acc = std::make_shared<Accel>();
  const auto& poly = dense_polyline();
  const size_t n = poly.size();
  const size_t nedge = closed_ ? n : n - 1;
  Point lo = poly[0], hi = poly[0];
  for (const auto& p : poly) {
    lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y);
  }
  double pad = 1e-9 * ((hi - lo).norm() + 1.0);
  lo.x -= pad; lo.y -= pad; hi.x += pad; hi.y += pad;
  acc->lo = lo; acc->hi = hi;
  acc->ybuckets.assign(acc->nyb, {});
  acc->grid.assign(acc->gx * acc->gy, {});
  acc->cw = (hi.x - lo.x) / acc->gx;
  acc->ch = (hi.y - lo.y) / acc->gy;
  double ybh = (hi.y - lo.y) / acc->nyb;
  for (size_t e = 0; e < nedge; ++e) {
    const Point& a = poly[e];
    const Point& b = poly[(e + 1) % n];
    int y0 = std::clamp(int((std::min(a.y, b.y) - lo.y) / ybh), 0, acc->nyb - 1);
    int y1 = std::clamp(int((std::max(a.y, b.y) - lo.y) / ybh), 0, acc->nyb - 1);
    for (int k = y0; k <= y1; ++k) acc->ybuckets[k].push_back(int(e));
    int gx0 = std::clamp(int((std::min(a.x, b.x) - lo.x) / acc->cw), 0, acc->gx - 1);
    int gx1 = std::clamp(int((std::max(a.x, b.x) - lo.x) / acc->cw), 0, acc->gx - 1);
    int gy0 = std::clamp(int((std::min(a.y, b.y) - lo.y) / acc->ch), 0, acc->gy - 1);
    int gy1 = std::clamp(int((std::max(a.y, b.y) - lo.y) / acc->ch), 0, acc->gy - 1);
    for (int j = gy0; j <= gy1; ++j)
      for (int i = gx0; i <= gx1; ++i) acc->grid[j * acc->gx + i].push_back(int(e));
  }
  accel_ = std::move(acc);
}

bool PiecewiseCurve::winding_inside(const Point& p) const {
  build_accel();
  const Accel& acc = *accel_;
  if (p.x < acc.lo.x || p.x > acc.hi.x || p.y < acc.lo.y || p.y > acc.hi.y)
    return false;
  const auto& poly = dense_polyline();
  const size_t n = poly.size();
  int k = std::clamp(int((p.y - acc.lo.y) / ((acc.hi.y - acc.lo.y) / acc.nyb)),
                     0, acc.nyb - 1);
  int crossings = 0;
  for (int e : acc.ybuckets[k]) {
    const Point& a = poly[e];
    const Point& b = poly[(e + 1) % n];
    if ((a.y > p.y) == (b.y > p.y)) continue;
    double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
    if (xint > p.x) ++crossings;
  }
  return crossings % 2 == 1;
}

double PiecewiseCurve::near_distance(const Point& p, double far) const {
  build_accel();
  const Accel& acc = *accel_;
  const auto& poly = dense_polyline();
  const size_t n = poly.size();
  int ci = int((p.x - acc.lo.x) / acc.cw);
  int cj = int((p.y - acc.lo.y) / acc.ch);
  double best = far + std::max(acc.cw, acc.ch);
  for (int dj = -1; dj <= 1; ++dj)
    for (int di = -1; di <= 1; ++di) {
      int i = ci + di, j = cj + dj;
      if (i < 0 || j < 0 || i >= acc.gx || j >= acc.gy) continue;
      for (int e : acc.grid[j * acc.gx + i]) {
        best = std::min(best,
                        point_segment_distance(p, poly[e], poly[(e + 1) % n]));
      }
    }
  return best;
}

double point_segment_distance(const Point& p, const Point& a, const Point& b) {
  Vec2 ab = b - a;
  double len2 = ab.squared_norm();
  if (len2 == 0.0) return (p - a).norm();
  double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * s)).norm();
}

Side classify_point(const PiecewiseCurve& curve, const Point& p,
                    double eps_geom) {
  if (!curve.closed()) throw UsageError("classify_point: curve not closed");
  if (curve.near_distance(p, 2 * eps_geom) <= eps_geom) return Side::kOnCurve;
  return curve.winding_inside(p) ? Side::kInside : Side::kOutside;
}

std::vector<EdgeIntersection> edge_intersections(const CurveSegment& seg,
                                                 const Point& a, const Point& b,
                                                 double eps_geom,
                                                 double angle_tol) {
  Vec2 d = b - a;
  double edge_len = d.norm();
  if (edge_len <= 0.0) throw UsageError("edge_intersections: degenerate edge");
  Vec2 nrm = d.rot90() / edge_len;  // unit normal to the edge line

  double arc_len = seg.arc_length_estimate();
  int nsamp = std::max(64, 8 * (int)std::ceil(arc_len / edge_len));
  nsamp = std::min(nsamp, 1 << 14);

  auto f = [&](double t) { return nrm.dot(seg.at(t) - a); };

  std::vector<EdgeIntersection> out;
  double t0 = 0.0, f0 = f(0.0);
  for (int i = 1; i <= nsamp; ++i) {
    double t1 = double(i) / nsamp, f1 = f(t1);
    if ((f0 < 0.0 && f1 >= 0.0) || (f0 >= 0.0 && f1 < 0.0)) {
      // Bracketed sign change: bisection to high relative tolerance.
      double lo = t0, hi = t1, flo = f0;
      for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = f(mid);
        if ((flo < 0.0) == (fm < 0.0)) { lo = mid; flo = fm; } else { hi = mid; }
        if (hi - lo < 1e-14 * std::max(1.0, std::abs(lo))) break;
      }
      double t = 0.5 * (lo + hi);
      Point x = seg.at(t);
      double s = (x - a).dot(d) / (edge_len * edge_len);
      if (s >= -eps_geom / edge_len && s <= 1.0 + eps_geom / edge_len) {
        Vec2 tang = seg.tangent(t).normalized();
        double ca = std::abs(std::asin(std::clamp(std::abs(tang.cross(d / edge_len)), 0.0, 1.0)));
        if (ca >= angle_tol) {
          EdgeIntersection ei;
          ei.t_seg = t;
          ei.point = x;
          ei.s_edge = std::clamp(s, 0.0, 1.0);
          ei.cross_angle = ca;
          out.push_back(ei);
        }
      }
    }
    t0 = t1; f0 = f1;
  }
  std::sort(out.begin(), out.end(),
            [](const EdgeIntersection& u, const EdgeIntersection& v) {
              return u.t_seg < v.t_seg;
            });
  return out;
}

double chord_deviation(const std::function<Point(double)>& arc,
                       const Point& chord_a, const Point& chord_b,
                       const Point& apex, double eps_geom, int chord_samples,
                       int arc_samples) {
  double chord_len = (chord_b - chord_a).norm();
  if (chord_len < eps_geom)
    throw GeometryError("chord_deviation: degenerate chord");
  std::vector<Point> arcp(arc_samples + 1);
  for (int i = 0; i <= arc_samples; ++i) arcp[i] = arc(double(i) / arc_samples);
  double dH = 0.0;
  for (int i = 0; i <= chord_samples; ++i) {
    Point c = chord_a + (chord_b - chord_a) * (double(i) / chord_samples);
    double dmin = std::numeric_limits<double>::max();
    for (int j = 0; j < arc_samples; ++j)
      dmin = std::min(dmin, point_segment_distance(c, arcp[j], arcp[j + 1]));
    dH = std::max(dH, dmin);
  }
  double da = point_segment_distance(apex, chord_a, chord_b);
  if (da < eps_geom)
    throw GeometryError("chord_deviation: apex on the chord line");
  return dH / da;
}

void DomainConfig::finalize() {
  Point lo, hi;
  outer.bounding_box(lo, hi);
  box_lo = lo; box_hi = hi;
  double diam = (hi - lo).norm();
  eps_geom = 1e-12 * diam;
  if (a1 <= 0.0 || a2 <= 0.0) throw UsageError("coefficients must be positive");
}

int DomainConfig::region_of(const Point& p) const {
  if (outer_fitted) {
    if (p.x < box_lo.x - eps_geom || p.x > box_hi.x + eps_geom ||
        p.y < box_lo.y - eps_geom || p.y > box_hi.y + eps_geom)
      return 0;
  } else {
    if (classify_point(outer, p, eps_geom) != Side::kInside) return 0;
  }
  for (const auto& h : holes)
    if (classify_point(h, p, eps_geom) == Side::kInside) return 0;
  for (const auto& g : interfaces)
    if (classify_point(g, p, eps_geom) == Side::kInside) return 1;
  return 2;
}

const PiecewiseCurve& DomainConfig::curve(int id) const {
  int k = id;
  if (!outer_fitted) {
    if (k == 0) return outer;
    --k;
  }
  if (k < static_cast<int>(holes.size())) return holes[k];
  k -= static_cast<int>(holes.size());
  return interfaces[k];
}

bool DomainConfig::curve_is_interface(int id) const {
  int nb = (outer_fitted ? 0 : 1) + static_cast<int>(holes.size());
  return id >= nb;
}

// ---------------------------------------------------------------------------
// Built-in curves
// ---------------------------------------------------------------------------

static CurveSegment arc_segment(Point c, double r, double th0, double th1) {
  return CurveSegment(
      [=](double t) {
        double th = th0 + t * (th1 - th0);
        return Point{c.x + r * std::cos(th), c.y + r * std::sin(th)};
      },
      [=](double t) {
        double th = th0 + t * (th1 - th0);
        return Vec2{-r * std::sin(th) * (th1 - th0), r * std::cos(th) * (th1 - th0)};
      });
}

static CurveSegment line_segment(Point a, Point b) {
  return CurveSegment([=](double t) { return a + (b - a) * t; },
                      [=](double) { return b - a; });
}

PiecewiseCurve make_circle(Point center, double radius) {
  std::vector<CurveSegment> segs;
  for (int k = 0; k < 4; ++k)
    segs.push_back(arc_segment(center, radius, k * M_PI / 2, (k + 1) * M_PI / 2));
  return PiecewiseCurve(std::move(segs), true);
}

PiecewiseCurve make_lens(double theta) {
  // Intersection of the unit disks centered at (+-1/2, 0) in the (xi, eta)
  // frame rotated by theta. Corners at (0, +-sqrt(3)/2).
  const double s3 = std::sqrt(3.0) / 2.0;
  double c = std::cos(theta), s = std::sin(theta);
  auto tophys = [=](Point q) {
    return Point{c * q.x - s * q.y, s * q.x + c * q.y};
  };
  auto tophys_v = [=](Vec2 q) {
    return Vec2{c * q.x - s * q.y, s * q.x + c * q.y};
  };
  // Right lobe: circle centered (-1/2,0) radius 1, angles -pi/3..pi/3
  // runs from (0,-s3) to (0,s3). Left lobe: circle centered (1/2,0),
  // angles 2pi/3..4pi/3, runs from (0,s3) to (0,-s3).
  std::vector<CurveSegment> segs;
  auto param_arc = [&](Point cen, double th0, double th1) {
    return CurveSegment(
        [=](double t) {
          double th = th0 + t * (th1 - th0);
          return tophys(Point{cen.x + std::cos(th), cen.y + std::sin(th)});
        },
        [=](double t) {
          double th = th0 + t * (th1 - th0);
          return tophys_v(Vec2{-std::sin(th) * (th1 - th0), std::cos(th) * (th1 - th0)});
        });
  };
  segs.push_back(param_arc(Point{-0.5, 0.0}, -M_PI / 3, M_PI / 3));
  segs.push_back(param_arc(Point{0.5, 0.0}, 2 * M_PI / 3, 4 * M_PI / 3));
  return PiecewiseCurve(std::move(segs), true);
}

PiecewiseCurve make_five_star() {
  // r = q(theta) = 2(theta - 3pi/10 - 2pi j/5)^2 + 4/9 on
  // [pi/10 + 2pi j/5, pi/2 + 2pi j/5), j = 0..4.
  std::vector<CurveSegment> segs;
  for (int j = 0; j < 5; ++j) {
    double ta = M_PI / 10 + 2 * M_PI * j / 5;
    double tb = M_PI / 2 + 2 * M_PI * j / 5;
    double tm = 3 * M_PI / 10 + 2 * M_PI * j / 5;
    segs.push_back(CurveSegment(
        [=](double t) {
          double th = ta + t * (tb - ta);
          double r = 2 * (th - tm) * (th - tm) + 4.0 / 9.0;
          return Point{r * std::cos(th), r * std::sin(th)};
        },
        [=](double t) {
          double th = ta + t * (tb - ta);
          double r = 2 * (th - tm) * (th - tm) + 4.0 / 9.0;
          double dr = 4 * (th - tm);
          double sc = tb - ta;
          return Vec2{(dr * std::cos(th) - r * std::sin(th)) * sc,
                      (dr * std::sin(th) + r * std::cos(th)) * sc};
        }));
  }
  return PiecewiseCurve(std::move(segs), true);
}

PiecewiseCurve make_diamond(double alpha, double beta, double b1, double b2) {
  // alpha |X| + beta |Y| = 1 in the frame X = b1 x1 + b2 x2,
  // Y = -b2 x1 + b1 x2; four straight edges, four corners.
  auto tophys = [=](Point q) {
    return Point{b1 * q.x - b2 * q.y, b2 * q.x + b1 * q.y};
  };
  Point E = tophys({1.0 / alpha, 0.0});
  Point N = tophys({0.0, 1.0 / beta});
  Point W = tophys({-1.0 / alpha, 0.0});
  Point S = tophys({0.0, -1.0 / beta});
  std::vector<CurveSegment> segs;
  segs.push_back(line_segment(E, N));
  segs.push_back(line_segment(N, W));
  segs.push_back(line_segment(W, S));
  segs.push_back(line_segment(S, E));
  return PiecewiseCurve(std::move(segs), true);
}

PiecewiseCurve make_smoothed_diamond(double alpha, double beta, double b1,
                                     double b2, double eps) {
  // alpha sqrt(X^2 + eps) + beta sqrt(Y^2 + eps) = 1, parametrized by the
  // polar angle phi in the (X, Y) frame; the radius solves the implicit
  // equation by Newton iteration and the derivative follows from implicit
  // differentiation.
  auto radius = [=](double phi) {
    double cp = std::cos(phi), sp = std::sin(phi);
    double r = (1.0 - (alpha + beta) * std::sqrt(eps)) /
               std::max(1e-12, alpha * std::abs(cp) + beta * std::abs(sp));
    r = std::max(r, 1e-8);
    for (int it = 0; it < 60; ++it) {
      double X = r * cp, Y = r * sp;
      double qx = std::sqrt(X * X + eps), qy = std::sqrt(Y * Y + eps);
      double F = alpha * qx + beta * qy - 1.0;
      double dF = alpha * X * cp / qx + beta * Y * sp / qy;
      double step = F / dF;
      r -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, r)) break;
    }
    return r;
  };
  auto rprime = [=](double phi) {
    double cp = std::cos(phi), sp = std::sin(phi);
    double r = radius(phi);
    double X = r * cp, Y = r * sp;
    double qx = std::sqrt(X * X + eps), qy = std::sqrt(Y * Y + eps);
    // F_r dr + F_phi dphi = 0
    double Fr = alpha * X * cp / qx + beta * Y * sp / qy;
    double Fphi = alpha * X * (-r * sp) / qx + beta * Y * (r * cp) / qy;
    return -Fphi / Fr;
  };
  auto tophys = [=](Point q) {
    return Point{b1 * q.x - b2 * q.y, b2 * q.x + b1 * q.y};
  };
  auto tophys_v = [=](Vec2 q) {
    return Vec2{b1 * q.x - b2 * q.y, b2 * q.x + b1 * q.y};
  };
  std::vector<CurveSegment> segs;
  for (int k = 0; k < 4; ++k) {
    double p0 = k * M_PI / 2, p1 = (k + 1) * M_PI / 2;
    segs.push_back(CurveSegment(
        [=](double t) {
          double phi = p0 + t * (p1 - p0);
          double r = radius(phi);
          return tophys(Point{r * std::cos(phi), r * std::sin(phi)});
        },
        [=](double t) {
          double phi = p0 + t * (p1 - p0);
          double r = radius(phi), dr = rprime(phi);
          double sc = p1 - p0;
          return tophys_v(Vec2{(dr * std::cos(phi) - r * std::sin(phi)) * sc,
                               (dr * std::sin(phi) + r * std::cos(phi)) * sc});
        }));
  }
  return PiecewiseCurve(std::move(segs), true);
}

PiecewiseCurve make_square(Point lo, Point hi) {
  std::vector<CurveSegment> segs;
  segs.push_back(line_segment({lo.x, lo.y}, {hi.x, lo.y}));
  segs.push_back(line_segment({hi.x, lo.y}, {hi.x, hi.y}));
  segs.push_back(line_segment({hi.x, hi.y}, {lo.x, hi.y}));
  segs.push_back(line_segment({lo.x, hi.y}, {lo.x, lo.y}));
  return PiecewiseCurve(std::move(segs), true);
}

PiecewiseCurve load_curve_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open curve file: " + path);
  std::vector<CurveSegment> segs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind) || kind[0] == '#') continue;
    if (kind == "line") {
      double x0, y0, x1, y1;
      if (!(ss >> x0 >> y0 >> x1 >> y1))
        throw UsageError("curve file line " + std::to_string(lineno) +
                         ": expected 'line x0 y0 x1 y1'");
      segs.push_back(line_segment({x0, y0}, {x1, y1}));
    } else if (kind == "arc") {
      double cx, cy, r, th0, th1;
      if (!(ss >> cx >> cy >> r >> th0 >> th1))
        throw UsageError("curve file line " + std::to_string(lineno) +
                         ": expected 'arc cx cy r theta0 theta1'");
      segs.push_back(arc_segment({cx, cy}, r, th0, th1));
    } else {
      throw UsageError("curve file line " + std::to_string(lineno) +
                       ": unknown segment type '" + kind + "'");
    }
  }
  if (segs.empty()) throw UsageError("curve file is empty: " + path);
  return PiecewiseCurve(std::move(segs), true);
}

}  // namespace ufem
