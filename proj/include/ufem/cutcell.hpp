#pragma once

// Classification of how the interface or boundary cuts an axis-aligned
// rectangle (leaf or macro-element): cut type, entry/exit points, geometric
// and singular indices, fan sub-triangulation and interface deviation.

#include <map>
#include <optional>

#include "ufem/geometry.hpp"
#include "ufem/mesh.hpp"

namespace ufem {

struct StandingAssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A transversal crossing of one domain curve with a grid line, cached by the
// CutOracle; (curve, axis, line, index) identifies it exactly across all
// elements that share it.
struct Crossing {
  int curve = -1;
  int axis = 0;              // 0: vertical line x=const, 1: horizontal line
  std::int64_t line = 0;     // fine-unit coordinate of the line
  int index = 0;             // position among crossings on this line, by t
  double t = 0.0;            // global curve parameter
  Point point;
  Vec2 tangent;              // unit tangent at the crossing
};

struct SideCrossing {
  Crossing cross;
  int side = 0;     // 0 bottom, 1 right, 2 top, 3 left
  double s = 0.0;   // relative position along the side (ccw orientation)
};

struct CutInfo {
  enum class Kind { kUncut1, kUncut2, kInterface, kBoundary, kOutside };
  enum class Type { kNone, kT1, kT2, kT3, kImproper };
  Kind kind = Kind::kUncut2;
  Type type = Type::kNone;
  int curve = -1;
  bool singular = false;
  SideCrossing A, B;        // entry and exit, ordered along the curve
  std::optional<Point> Q;   // singular vertex inside the element
  double tQ = 0.0;
  double t_in = 0.0, t_len = 0.0;  // arc t_in .. t_in + t_len lies inside
  double delta = 1.0;              // geometric index
  double delta_tilde = -1.0;       // singular index; < 0 when no Q
  std::string why_improper;

  bool cut() const {
    return kind == Kind::kInterface || kind == Kind::kBoundary;
  }
  bool proper() const { return cut() && type != Type::kImproper; }
};

struct CurvedEdge {
  int edge = -1;                      // local edge (i, i+1 mod 3)
  double t0 = 0.0, t1 = 0.0;          // arc params: arc(t0)=v[e], arc(t1)=v[e+1]
};

struct SubTri {
  Point v[3];                         // ccw
  int region = 0;        // 1 or 2 for interface cuts; 2 for boundary cuts
  int n_curved = 0;      // 0..2 edges replaced by arcs (two only at a wedge)
  CurvedEdge curved[2];
  int curve = -1;
  // provenance of each vertex for dof identification:
  // >= 0: rect corner id (0 SW, 1 SE, 2 NE, 3 NW); -1: crossing A; -2: crossing
  // B; -3: singular vertex Q.
  int tag[3] = {0, 0, 0};

  double area() const {
    return 0.5 * std::abs((v[1] - v[0]).cross(v[2] - v[0]));
  }
  bool edge_curved(int e) const {
    for (int i = 0; i < n_curved; ++i)
      if (curved[i].edge == e) return true;
    return false;
  }
};

struct SubTriangulation {
  std::vector<SubTri> tris;
  int count(int region) const {
    int n = 0;
    for (const auto& t : tris) n += (t.region == region) ? 1 : 0;
    return n;
  }
  double area(int region) const {
    double a = 0.0;
    for (const auto& t : tris) a += (t.region == region) ? t.area() : 0.0;
    return a;
  }
};

// Curve/grid-line crossing cache bound to a mesh frame and a domain.
class CutOracle {
 public:
  CutOracle(const QuadtreeMesh& mesh, const DomainConfig& domain);

  const DomainConfig& domain() const { return *domain_; }
  const QuadtreeMesh& mesh() const { return *mesh_; }

  // All crossings of the given curve with the grid line, sorted by position
  // along the line.
  const std::vector<Crossing>& line_crossings(int curve, int axis,
                                              std::int64_t line) const;

  // Crossings on the boundary of an axis-aligned rectangle whose corners are
  // grid vertices, with the vertex-hit convention applied.
  std::vector<SideCrossing> rect_crossings(const Rect& r, std::int64_t fx0,
                                           std::int64_t fy0, std::int64_t fx1,
                                           std::int64_t fy1) const;

  CutInfo classify_rect(const Rect& r, std::int64_t fx0, std::int64_t fy0,
                        std::int64_t fx1, std::int64_t fy1) const;
  CutInfo classify_leaf(int leaf) const;
  // Classify a rectangle of same-level cells [ix0, ix1) x [iy0, iy1).
  CutInfo classify_cells(int level, std::int64_t ix0, std::int64_t iy0,
                         std::int64_t ix1, std::int64_t iy1) const;

  double geometric_index(const Rect& r, const CutInfo& cut) const;
  double singular_index(const Rect& r, const Point& Q) const;

  SubTriangulation subtriangulate(const Rect& r, const CutInfo& cut) const;

  // Interface deviation: max chord deviation over the curved-sided triangles.
  double deviation(const CutInfo& cut, const SubTriangulation& sub) const;

  void invalidate() { cache_.clear(); }

 private:
  int region_class(const Point& p) const;  // 1, 2 or 0 (outside)

  const QuadtreeMesh* mesh_;
  const DomainConfig* domain_;
  struct LineKey {
    int curve, axis;
    std::int64_t line;
    bool operator<(const LineKey& o) const {
      if (curve != o.curve) return curve < o.curve;
      if (axis != o.axis) return axis < o.axis;
      return line < o.line;
    }
  };
  mutable std::map<LineKey, std::vector<Crossing>> cache_;
};

// Penalty amplification factor Theta_K = [T((1+3 eta)/(1-eta))]^(2p+3),
// T(t) = t + sqrt(t^2-1); equals 1 at eta = 0.
double theta_factor(double eta, int p);

}  // namespace ufem
