#include "ufem/cutcell.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace ufem {

double theta_factor(double eta, int p) {
  if (eta < 0.0) throw UsageError("theta_factor: eta must be nonnegative");
  if (eta >= 1.0) return std::numeric_limits<double>::infinity();
  double t = (1.0 + 3.0 * eta) / (1.0 - eta);
  double T = t + std::sqrt(std::max(0.0, t * t - 1.0));
  return std::pow(T, 2 * p + 3);
}

CutOracle::CutOracle(const QuadtreeMesh& mesh, const DomainConfig& domain)
    : mesh_(&mesh), domain_(&domain) {}

int CutOracle::region_class(const Point& p) const { return domain_->region_of(p); }

const std::vector<Crossing>& CutOracle::line_crossings(int curve, int axis,
                                                       std::int64_t line) const {
  LineKey key{curve, axis, line};
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  const PiecewiseCurve& pc = domain_->curve(curve);
  const double fine = double(std::int64_t(1) << QuadtreeMesh::kMaxLevel);
  double coord = (axis == 0)
                     ? mesh_->domain_lo().x + mesh_->root_hx() * (double(line) / fine)
                     : mesh_->domain_lo().y + mesh_->root_hy() * (double(line) / fine);

  std::vector<Crossing> out;
  const double angle_tol = 1e-6;
  const double ftol = 1e-13 * std::max({1.0, std::abs(coord),
                                        mesh_->root_hx(), mesh_->root_hy()});
  for (int si = 0; si < pc.num_segments(); ++si) {
    const CurveSegment& seg = pc.segment(si);
    auto f = [&](double t) {
      Point x = seg.at(t);
      return (axis == 0 ? x.x : x.y) - coord;
    };
    auto emit = [&](double t) {
      Vec2 tang = seg.tangent(t).normalized();
      double along = (axis == 0) ? std::abs(tang.y) : std::abs(tang.x);
      double perp = (axis == 0) ? std::abs(tang.x) : std::abs(tang.y);
      double ang = std::atan2(perp, along);
      if (ang < angle_tol) return;
      Crossing c;
      c.curve = curve;
      c.axis = axis;
      c.line = line;
      c.t = si + t;
      c.point = seg.at(t);
      // snap exactly onto the grid line
      (axis == 0 ? c.point.x : c.point.y) = coord;
      c.tangent = tang;
      out.push_back(c);
    };
    int nsamp = std::max(
        64, 8 * (int)std::ceil(seg.arc_length_estimate() /
                               std::min(mesh_->root_hx(), mesh_->root_hy())));
    nsamp = std::min(nsamp, 1 << 14);
    // A curve junction can land exactly on the line; segment start points with
    // f ~ 0 are roots in their own right (ends are the next segment's start,
    // except for the tail of an open curve).
    bool start_root = std::abs(f(0.0)) <= ftol;
    if (start_root) emit(0.0);
    if (!pc.closed() && si + 1 == pc.num_segments() && std::abs(f(1.0)) <= ftol)
      emit(1.0);
    // Sign-change scan skipping the near-zero plateau around endpoint roots.
    double t0 = 0.0, f0 = f(0.0);
    bool have_prev = !start_root;
    for (int i = 1; i <= nsamp; ++i) {
      double t1 = double(i) / nsamp, f1 = f(t1);
      if (std::abs(f1) <= ftol && i < nsamp) continue;
      if (!have_prev) {
        if (std::abs(f1) > ftol) { t0 = t1; f0 = f1; have_prev = true; }
        continue;
      }
      if ((f0 < 0.0 && f1 >= 0.0) || (f0 >= 0.0 && f1 < 0.0)) {
        double lo = t0, hi = t1, flo = f0;
        for (int k = 0; k < 100; ++k) {
          double mid = 0.5 * (lo + hi), fm = f(mid);
          if ((flo < 0.0) == (fm < 0.0)) { lo = mid; flo = fm; } else { hi = mid; }
          if (hi - lo < 1e-15) break;
        }
        emit(0.5 * (lo + hi));
      }
      t0 = t1; f0 = f1;
    }
  }
  // Order along the line and drop near-duplicate roots.
  std::sort(out.begin(), out.end(), [&](const Crossing& a, const Crossing& b) {
    return (axis == 0 ? a.point.y : a.point.x) < (axis == 0 ? b.point.y : b.point.x);
  });
  std::vector<Crossing> dedup;
  for (const auto& c : out) {
    if (!dedup.empty()) {
      const Crossing& p = dedup.back();
      double d = (axis == 0) ? std::abs(c.point.y - p.point.y)
                             : std::abs(c.point.x - p.point.x);
      double span = pc.param_span();
      double dt = std::abs(c.t - p.t);
      dt = std::min(dt, span - dt);
      if (d < 1e-12 && dt < 1e-9 * span) continue;
    }
    dedup.push_back(c);
  }
  for (size_t i = 0; i < dedup.size(); ++i) dedup[i].index = static_cast<int>(i);
  auto res = cache_.emplace(key, std::move(dedup));
  return res.first->second;
}

std::vector<SideCrossing> CutOracle::rect_crossings(const Rect& r,
                                                    std::int64_t fx0,
                                                    std::int64_t fy0,
                                                    std::int64_t fx1,
                                                    std::int64_t fy1) const {
  const double w = r.width(), h = r.height();
  // Absolute vertex-hit tolerance, identical for every element.
  const double eps_vtx =
      1e-12 * std::min(mesh_->root_hx(), mesh_->root_hy());
  std::vector<SideCrossing> out;

  auto corner_of = [&](const Point& p) -> int {
    Point cs[4] = {{r.lo.x, r.lo.y}, {r.hi.x, r.lo.y}, {r.hi.x, r.hi.y}, {r.lo.x, r.hi.y}};
    for (int k = 0; k < 4; ++k)
      if ((p - cs[k]).norm() <= eps_vtx) return k;
    return -1;
  };

  for (int curve = 0; curve < domain_->num_curves(); ++curve) {
    // side 0: bottom (axis 1, line fy0), 1: right (axis 0, fx1),
    // 2: top (axis 1, fy1), 3: left (axis 0, fx0)
    struct SideDef { int axis; std::int64_t line; double a, b; };
    SideDef sides[4] = {{1, fy0, r.lo.x, r.hi.x},
                        {0, fx1, r.lo.y, r.hi.y},
                        {1, fy1, r.lo.x, r.hi.x},
                        {0, fx0, r.lo.y, r.hi.y}};
    for (int sd = 0; sd < 4; ++sd) {
      const auto& cs = line_crossings(curve, sides[sd].axis, sides[sd].line);
      for (const auto& c : cs) {
        double pos = (sides[sd].axis == 0) ? c.point.y : c.point.x;
        if (pos < sides[sd].a - eps_vtx || pos > sides[sd].b + eps_vtx) continue;
        int corner = corner_of(c.point);
        if (corner >= 0) {
          // Vertex-hit convention: the crossing belongs to the incident edge
          // more aligned with the curve tangent; when that edge is parallel to
          // the curve the tangency rule drops it entirely.
          bool to_vertical = std::abs(c.tangent.y) >= std::abs(c.tangent.x);
          bool this_vertical = (sides[sd].axis == 0);
          if (to_vertical != this_vertical) continue;
          double ang = this_vertical
                           ? std::atan2(std::abs(c.tangent.x), std::abs(c.tangent.y))
                           : std::atan2(std::abs(c.tangent.y), std::abs(c.tangent.x));
          if (ang < 1e-6) continue;
        }
        SideCrossing s;
        s.cross = c;
        s.side = sd;
        double frac;
        if (sd == 0) frac = (c.point.x - r.lo.x) / w;
        else if (sd == 1) frac = (c.point.y - r.lo.y) / h;
        else if (sd == 2) frac = (r.hi.x - c.point.x) / w;
        else frac = (r.hi.y - c.point.y) / h;
        s.s = std::clamp(frac, 0.0, 1.0);
        out.push_back(s);
      }
    }
  }
  return out;
}

CutInfo CutOracle::classify_rect(const Rect& r, std::int64_t fx0,
                                 std::int64_t fy0, std::int64_t fx1,
                                 std::int64_t fy1) const {
  CutInfo info;
  auto crossings = rect_crossings(r, fx0, fy0, fx1, fy1);

  // Singular vertices strictly inside (or on the boundary, which degenerates).
  int n_sing = 0;
  Point Q;
  double tQ = 0.0;
  int q_curve = -1;
  bool q_on_boundary = false;
  for (int curve = 0; curve < domain_->num_curves(); ++curve) {
    const auto& pc = domain_->curve(curve);
    for (const auto& sv : pc.singular_vertices()) {
      const Point& p = sv.point;
      double mx = 1e-12 * std::max(r.width(), r.height());
      bool inside = p.x > r.lo.x + mx && p.x < r.hi.x - mx && p.y > r.lo.y + mx &&
                    p.y < r.hi.y - mx;
      bool on_bd = !inside && p.x >= r.lo.x - mx && p.x <= r.hi.x + mx &&
                   p.y >= r.lo.y - mx && p.y <= r.hi.y + mx;
      if (inside) {
        ++n_sing;
        Q = p;
        tQ = sv.seg_after;  // junction parameter: start of the outgoing piece
        q_curve = curve;
      } else if (on_bd) {
        q_on_boundary = true;
      }
    }
  }
  if (n_sing > 1)
    throw StandingAssumptionError(
        "element contains more than one singular point");

  std::sort(crossings.begin(), crossings.end(),
            [](const SideCrossing& a, const SideCrossing& b) {
              return a.cross.t < b.cross.t;
            });

  int curves_seen = -1;
  bool multi_curve = false;
  for (const auto& c : crossings) {
    if (curves_seen >= 0 && c.cross.curve != curves_seen) multi_curve = true;
    curves_seen = c.cross.curve;
  }
  if (q_curve >= 0 && curves_seen >= 0 && q_curve != curves_seen)
    multi_curve = true;

  if (multi_curve) {
    info.kind = CutInfo::Kind::kInterface;
    info.type = CutInfo::Type::kImproper;
    info.why_improper = "element meets more than one curve";
    return info;
  }

  if (crossings.empty()) {
    if (n_sing > 0) {
      info.kind = domain_->curve_is_interface(q_curve) ? CutInfo::Kind::kInterface
                                                       : CutInfo::Kind::kBoundary;
      info.type = CutInfo::Type::kImproper;
      info.why_improper = "singular point inside but no boundary crossings";
      info.Q = Q;
      return info;
    }
    // A curve component can sit entirely inside the rectangle.
    for (int curve = 0; curve < domain_->num_curves(); ++curve) {
      Point lo, hi;
      domain_->curve(curve).bounding_box(lo, hi);
      if (lo.x >= r.lo.x && hi.x <= r.hi.x && lo.y >= r.lo.y && hi.y <= r.hi.y) {
        info.kind = domain_->curve_is_interface(curve) ? CutInfo::Kind::kInterface
                                                       : CutInfo::Kind::kBoundary;
        info.type = CutInfo::Type::kImproper;
        info.why_improper = "curve component contained in element";
        return info;
      }
    }
    int rc = region_class(r.center());
    info.kind = rc == 1   ? CutInfo::Kind::kUncut1
                : rc == 2 ? CutInfo::Kind::kUncut2
                          : CutInfo::Kind::kOutside;
    info.type = CutInfo::Type::kNone;
    return info;
  }

  int curve = curves_seen;
  info.curve = curve;
  info.kind = domain_->curve_is_interface(curve) ? CutInfo::Kind::kInterface
                                                 : CutInfo::Kind::kBoundary;
  if (n_sing > 0) {
    info.singular = true;
    info.Q = Q;
    info.tQ = tQ;
  } else if (q_on_boundary) {
    info.type = CutInfo::Type::kImproper;
    info.why_improper = "singular point on element boundary";
    return info;
  }

  if (crossings.size() != 2) {
    info.type = CutInfo::Type::kImproper;
    info.why_improper = "boundary crossed " + std::to_string(crossings.size()) +
                        " times";
    return info;
  }

  const SideCrossing& c1 = crossings[0];
  const SideCrossing& c2 = crossings[1];
  if (c1.side == c2.side) {
    if (!info.singular) {
      info.type = CutInfo::Type::kImproper;
      info.why_improper = "same side crossed twice without a singular point";
      return info;
    }
    info.type = CutInfo::Type::kT3;
  } else if ((c1.side ^ c2.side) == 2) {
    info.type = CutInfo::Type::kT2;  // sides 0/2 or 1/3 are opposite
  } else {
    info.type = CutInfo::Type::kT1;
  }

  // Pick the arc between the two crossings that lies inside the rectangle;
  // the closed rectangle, since the arc may graze a side from inside.
  const PiecewiseCurve& pc = domain_->curve(curve);
  double span = pc.param_span();
  double slack = 1e-12 * std::max(r.width(), r.height());
  auto arc_inside = [&](double ta, double tb) {
    for (int k = 0; k < 7; ++k) {
      double t = ta + (tb - ta) * (k + 0.5) / 7.0;
      if (pc.closed()) t = std::fmod(std::fmod(t, span) + span, span);
      Point p = pc.at(t);
      if (p.x < r.lo.x - slack || p.x > r.hi.x + slack || p.y < r.lo.y - slack ||
          p.y > r.hi.y + slack)
        return false;
    }
    return true;
  };
  double t1 = c1.cross.t, t2 = c2.cross.t;
  bool fwd_ok = arc_inside(t1, t2);
  bool wrap_ok = pc.closed() && arc_inside(t2, t1 + span);
  if (fwd_ok == wrap_ok) {
    info.type = CutInfo::Type::kImproper;
    info.why_improper = "ambiguous arc between crossings";
    return info;
  }
  if (fwd_ok) {
    info.A = c1; info.B = c2;
    info.t_in = t1;
    info.t_len = t2 - t1;
  } else {
    info.A = c2; info.B = c1;
    info.t_in = t2;
    info.t_len = t1 + span - t2;
  }
  if (info.singular) {
    double dq = info.tQ - info.t_in;
    if (pc.closed()) dq = std::fmod(dq + 2 * span, span);
    if (dq <= 0.0 || dq >= info.t_len) {
      info.type = CutInfo::Type::kImproper;
      info.why_improper = "singular point not on the interior arc";
      return info;
    }
  } else if (info.type == CutInfo::Type::kT3) {
    info.type = CutInfo::Type::kImproper;
    info.why_improper = "same-side double crossing without singular point";
    return info;
  }

  info.delta = geometric_index(r, info);
  if (info.singular) info.delta_tilde = singular_index(r, *info.Q);
  return info;
}

CutInfo CutOracle::classify_leaf(int leaf) const {
  const Cell& c = mesh_->cell(leaf);
  return classify_cells(c.level, c.ix, c.iy, c.ix + 1, c.iy + 1);
}

CutInfo CutOracle::classify_cells(int level, std::int64_t ix0, std::int64_t iy0,
                                  std::int64_t ix1, std::int64_t iy1) const {
  int shift = QuadtreeMesh::kMaxLevel - level;
  double sx = mesh_->root_hx() / double(std::int64_t(1) << level);
  double sy = mesh_->root_hy() / double(std::int64_t(1) << level);
  Rect r{Point{mesh_->domain_lo().x + ix0 * sx, mesh_->domain_lo().y + iy0 * sy},
         Point{mesh_->domain_lo().x + ix1 * sx, mesh_->domain_lo().y + iy1 * sy}};
  return classify_rect(r, ix0 << shift, iy0 << shift, ix1 << shift, iy1 << shift);
}

double CutOracle::geometric_index(const Rect& r, const CutInfo& cut) const {
  bool iface = cut.kind == CutInfo::Kind::kInterface;
  double delta = 1.0;
  for (int sd = 0; sd < 4; ++sd) {
    std::vector<double> ss;
    for (const SideCrossing* c : {&cut.A, &cut.B})
      if (c->side == sd) ss.push_back(c->s);
    ss.push_back(0.0);
    ss.push_back(1.0);
    std::sort(ss.begin(), ss.end());
    double len1 = 0.0, len2 = 0.0;  // per region class
    Point p0, dir;
    double slen;
    switch (sd) {
      case 0: p0 = {r.lo.x, r.lo.y}; dir = {1, 0}; slen = r.width(); break;
      case 1: p0 = {r.hi.x, r.lo.y}; dir = {0, 1}; slen = r.height(); break;
      case 2: p0 = {r.hi.x, r.hi.y}; dir = {-1, 0}; slen = r.width(); break;
      default: p0 = {r.lo.x, r.hi.y}; dir = {0, -1}; slen = r.height(); break;
    }
    for (size_t i = 0; i + 1 < ss.size(); ++i) {
      double a = ss[i], b = ss[i + 1];
      if (b - a < 1e-12) continue;
      Point mid = p0 + dir * (0.5 * (a + b) * slen);
      int rc = region_class(mid);
      int cls = iface ? rc : (rc > 0 ? 1 : 2);
      if (cls == 1) len1 += b - a; else len2 += b - a;
    }
    if (len1 > 1e-12) delta = std::min(delta, len1);
    if (len2 > 1e-12) delta = std::min(delta, len2);
  }
  return delta;
}

double CutOracle::singular_index(const Rect& r, const Point& Q) const {
  double w = r.width(), h = r.height();
  if (Q.x <= r.lo.x || Q.x >= r.hi.x || Q.y <= r.lo.y || Q.y >= r.hi.y)
    return 0.0;
  // dist(Q, e) / (|e_perp| / 2): vertical sides pair with the horizontal
  // extent and vice versa.
  double d = std::min({(Q.x - r.lo.x) / (w / 2), (r.hi.x - Q.x) / (w / 2),
                       (Q.y - r.lo.y) / (h / 2), (r.hi.y - Q.y) / (h / 2)});
  return d;
}

SubTriangulation CutOracle::subtriangulate(const Rect& r,
                                           const CutInfo& cut) const {
  if (!cut.proper())
    throw GeometryError("subtriangulate: improper cut");
  SubTriangulation sub;
  const PiecewiseCurve& pc = domain_->curve(cut.curve);
  double span = pc.param_span();
  auto curve_at = [&](double t) {
    return pc.at(pc.closed() ? std::fmod(std::fmod(t, span) + span, span) : t);
  };

  struct LV { Point p; int tag; double s_loop; };
  Point corners[4] = {{r.lo.x, r.lo.y}, {r.hi.x, r.lo.y}, {r.hi.x, r.hi.y}, {r.lo.x, r.hi.y}};
  std::vector<LV> loop;
  for (int sd = 0; sd < 4; ++sd) {
    loop.push_back({corners[sd], sd, double(sd)});
    std::vector<const SideCrossing*> cs;
    if (cut.A.side == sd) cs.push_back(&cut.A);
    if (cut.B.side == sd) cs.push_back(&cut.B);
    std::sort(cs.begin(), cs.end(),
              [](const SideCrossing* a, const SideCrossing* b) { return a->s < b->s; });
    for (auto* c : cs)
      loop.push_back({c->cross.point, c == &cut.A ? -1 : -2, sd + std::clamp(c->s, 1e-12, 1.0 - 1e-12)});
  }
  std::sort(loop.begin(), loop.end(),
            [](const LV& a, const LV& b) { return a.s_loop < b.s_loop; });

  const int n = static_cast<int>(loop.size());
  int ia = -1, ib = -1;
  for (int i = 0; i < n; ++i) {
    if (loop[i].tag == -1) ia = i;
    if (loop[i].tag == -2) ib = i;
  }
  assert(ia >= 0 && ib >= 0);

  const double area_tol = 1e-14 * r.width() * r.height();
  bool iface = cut.kind == CutInfo::Kind::kInterface;
  double t_end = cut.t_in + cut.t_len;

  // Two boundary paths A->B and B->A (ccw); each spans one subdomain side.
  for (int pass = 0; pass < 2; ++pass) {
    int i0 = pass == 0 ? ia : ib;
    int i1 = pass == 0 ? ib : ia;
    std::vector<LV> path;
    for (int i = i0;; i = (i + 1) % n) {
      path.push_back(loop[i]);
      if (i == i1) break;
    }
    // Region of this path from a boundary point away from the crossings.
    Point probe;
    if (path.size() >= 2) {
      double best = -1.0;
      for (size_t i = 0; i + 1 < path.size(); ++i) {
        double len = (path[i + 1].p - path[i].p).norm();
        if (len > best) { best = len; probe = (path[i].p + path[i + 1].p) * 0.5; }
      }
    } else {
      probe = path[0].p;
    }
    int rc = region_class(probe);
    int region = iface ? rc : (rc > 0 ? 2 : 0);
    if (!iface && region == 0) continue;  // outside part of a boundary element
    if (iface && (rc != 1 && rc != 2))
      throw GeometryError("subtriangulate: interface path classifies outside");

    // Arc parameters across this pass: pass 0 walks A->B along the rect ccw,
    // so the chord closes B->A; curved edges carry the matching arc ranges.
    if (cut.singular) {
      // Fan from Q over the path A..B (or B..A).
      std::vector<LV> u = path;
      Point Q = *cut.Q;
      double tq = cut.tQ;
      if (pc.closed()) {
        double dq = std::fmod(tq - cut.t_in + 2 * span, span);
        tq = cut.t_in + dq;
      }
      for (size_t j = 0; j + 1 < u.size(); ++j) {
        SubTri tri;
        tri.v[0] = Q; tri.v[1] = u[j].p; tri.v[2] = u[j + 1].p;
        tri.tag[0] = -3; tri.tag[1] = u[j].tag; tri.tag[2] = u[j + 1].tag;
        tri.region = region;
        tri.curve = cut.curve;
        if (u[j].tag < 0 && j == 0) {
          // edge v0->v1 is the chord Q->(A or B)
          tri.curved[tri.n_curved++] =
              {0, tq, (u[j].tag == -1) ? cut.t_in : t_end};
        }
        if (u[j + 1].tag < 0 && j + 2 == u.size()) {
          // edge v2->v0 is the chord (A or B)->Q
          tri.curved[tri.n_curved++] =
              {2, (u[j + 1].tag == -1) ? cut.t_in : t_end, tq};
        }
        if (tri.area() > area_tol) sub.tris.push_back(tri);
      }
    } else {
      // Apex: path corner with maximal distance to the chord line.
      Point A = path.front().p, B = path.back().p;
      int apex = -1;
      double best = -1.0;
      for (size_t i = 1; i + 1 < path.size(); ++i) {
        double d = point_segment_distance(path[i].p, A, B);
        if (d > best) { best = d; apex = static_cast<int>(i); }
      }
      if (apex < 0)
        throw GeometryError("subtriangulate: path without interior vertex");
      // Fan from path[apex] over the polygon cycle (path + chord closing edge).
      std::vector<LV> u;
      for (size_t i = apex + 1; i < path.size(); ++i) u.push_back(path[i]);
      for (size_t i = 0; i < static_cast<size_t>(apex); ++i) u.push_back(path[i]);
      for (size_t j = 0; j + 1 < u.size(); ++j) {
        SubTri tri;
        tri.v[0] = path[apex].p; tri.v[1] = u[j].p; tri.v[2] = u[j + 1].p;
        tri.tag[0] = path[apex].tag; tri.tag[1] = u[j].tag; tri.tag[2] = u[j + 1].tag;
        tri.region = region;
        tri.curve = cut.curve;
        if (u[j].tag < 0 && u[j + 1].tag < 0) {
          // edge v1->v2 is the chord (B->A on pass 0, A->B on pass 1)
          tri.curved[tri.n_curved++] =
              {1, (u[j].tag == -1) ? cut.t_in : t_end,
               (u[j + 1].tag == -1) ? cut.t_in : t_end};
        }
        if (tri.area() > area_tol) sub.tris.push_back(tri);
      }
    }
  }

  // Shape-regularity guard from Lemma 2.1: inscribed radius bounded below.
  double hmin = std::min(r.width(), r.height());
  for (const auto& t : sub.tris) {
    double a = (t.v[1] - t.v[0]).norm(), b = (t.v[2] - t.v[1]).norm(),
           c = (t.v[0] - t.v[2]).norm();
    double s = 0.5 * (a + b + c);
    double inr = t.area() / s;
    if (inr < 1e-4 * hmin)
      throw GeometryError("subtriangulate: degenerate fan triangle (inscribed radius " +
                          std::to_string(inr / hmin) + " h)");
  }
  return sub;
}

double CutOracle::deviation(const CutInfo& cut, const SubTriangulation& sub) const {
  const PiecewiseCurve& pc = domain_->curve(cut.curve);
  double span = pc.param_span();
  double eta = 0.0;
  for (const auto& tri : sub.tris) {
    for (int ci = 0; ci < tri.n_curved; ++ci) {
      int e = tri.curved[ci].edge;
      Point a = tri.v[e], b = tri.v[(e + 1) % 3], apex = tri.v[(e + 2) % 3];
      double t0 = tri.curved[ci].t0, t1 = tri.curved[ci].t1;
      auto arc = [&](double u) {
        double t = t0 + u * (t1 - t0);
        if (pc.closed()) t = std::fmod(std::fmod(t, span) + span, span);
        return pc.at(t);
      };
      if ((a - b).norm() < domain_->eps_geom) continue;
      eta = std::max(eta, chord_deviation(arc, a, b, apex, domain_->eps_geom));
    }
  }
  return eta;
}

}  // namespace ufem
