#pragma once

// Cell merging: chains of cut elements, singular patterns around interface
// and boundary corners, outlet-patch refinement, and the induced mesh of
// large macro-elements.

#include <array>
#include <unordered_set>
#include <unordered_map>

#include "ufem/cutcell.hpp"

namespace ufem {

struct MergeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rectangle of same-level cells [ix0,ix1) x [iy0,iy1) at `level`.
struct MacroRect {
  int level = 0;
  std::int64_t ix0 = 0, iy0 = 0, ix1 = 0, iy1 = 0;

  std::int64_t nx() const { return ix1 - ix0; }
  std::int64_t ny() const { return iy1 - iy0; }
  bool contains_cell(const Cell& c) const {
    if (c.level < level) return false;
    int s = c.level - level;
    std::int64_t x = c.ix >> s, y = c.iy >> s;
    return x >= ix0 && x < ix1 && y >= iy0 && y < iy1;
  }
  bool overlaps(const MacroRect& o) const {
    int l = std::max(level, o.level);
    std::int64_t a0 = ix0 << (l - level), a1 = ix1 << (l - level);
    std::int64_t b0 = o.ix0 << (l - o.level), b1 = o.ix1 << (l - o.level);
    if (a1 <= b0 || b1 <= a0) return false;
    std::int64_t c0 = iy0 << (l - level), c1 = iy1 << (l - level);
    std::int64_t d0 = o.iy0 << (l - o.level), d1 = o.iy1 << (l - o.level);
    return !(c1 <= d0 || d1 <= c0);
  }
  Rect bounds(const QuadtreeMesh& m) const {
    double sx = m.root_hx() / double(std::int64_t(1) << level);
    double sy = m.root_hy() / double(std::int64_t(1) << level);
    Point lo{m.domain_lo().x + ix0 * sx, m.domain_lo().y + iy0 * sy};
    return Rect{lo, Point{lo.x + nx() * sx, lo.y + ny() * sy}};
  }
};

struct Chain {
  int curve = -1;
  bool closed = false;
  std::vector<int> cells;  // leaf ids ordered by curve parameter
};

struct ChainViolation {
  int rule = 0;  // Def 3.1 rule number 1..4
  int cell = -1;
  std::string note;
};

// Lemma 3.1 singular pattern: macro rectangle around a singular point with
// two outlet patches.
struct SingularPattern {
  Point Q;
  double tQ = 0.0;
  int curve = -1;
  MacroRect rect;
  int m1 = 0, m2 = 0, n1 = 0, n2 = 0;  // extents in the Q-local frame
  double lambda1 = 0.0, lambda2 = 0.0;
  int case_id = 0;  // 0 mixed, 1 same-region, 2 opposite-region
  using CellXY = std::array<std::int64_t, 2>;
  std::vector<CellXY> patch1, patch2;  // outlet patches (ring cell coords)

  // Lemma 3.1's guaranteed singular index min(1/(m1+m2), 1/(n1+n2)); the
  // sums equal the rectangle extents under any frame normalization.
  double index_bound() const {
    return std::min(1.0 / double(rect.nx()), 1.0 / double(rect.ny()));
  }
};

// Result of the Lemma 3.1 dimension formulas: normal-frame extents plus the
// host-relative occupied cell box mapped back to the original frame.
struct PatternDims {
  int m1, m2, n1, n2;           // normal-frame extents
  long ulo, uhi, vlo, vhi;      // original-frame box, host cell at (0,0)
  int case_id;
  double lambda1, lambda2;
};

// Strict floor from Lemma 3.1: the greatest integer strictly less than g.
long strict_floor(double g);

// Dimensions of the singular pattern for a sector with the given arm
// directions (unit vectors pointing away from Q), in a frame where the host
// cell has side lengths hx, hy.
PatternDims pattern_dims(Vec2 arm1, Vec2 arm2, double hx, double hy);

// Geometric (straight-arm) validation data for a pattern placed on the grid.
struct RayOutlet {
  std::vector<SingularPattern::CellXY> cells;  // ring cells cut by the arm
  bool t2 = false;                             // single cell crossed on opposite sides
  bool t1_pair = false;                        // two neighboring cells, adjacent-side cuts
};

class Merger {
 public:
  struct Params {
    double delta0 = 0.2;          // user bound; effective is min(delta0, delta_s)
    int max_rounds = 40;          // iteration guard for Algorithms 1 and 3
    int growth_cap = 4;           // cells per axis for smooth-chain macros
    bool log = false;
  };

  Merger(QuadtreeMesh& mesh, CutOracle& oracle, Params params);
  Merger(QuadtreeMesh& mesh, CutOracle& oracle);

  const CutInfo& classify_cached(int leaf);

  // Refine leaves violating the standing assumptions (proper intersections,
  // one curve and at most one singular point per element) until none remain.
  void enforce_standing_assumptions();

  std::vector<Chain> build_chains();

  std::vector<ChainViolation> check_admissible(const Chain& chain) const;

  // Lemma 3.1 construction on the current mesh; refines the pattern
  // neighborhood to a uniform level and validates against the real curve,
  // shrinking (refining) until the outlet structure holds.
  SingularPattern build_singular_pattern(Point Q, double tQ, int curve,
                                         Vec2 arm1, Vec2 arm2);

  // Straight-arm construction at a prescribed level, no curve validation.
  // Exposed for the Lemma 3.1 property tests.
  SingularPattern place_pattern(Point Q, Vec2 arm1, Vec2 arm2, int level,
                                const PatternDims& dims) const;
  // place_pattern + enlargement fallback + outlet scan (straight arms only).
  SingularPattern build_pattern_geometric(Point Q, Vec2 arm1, Vec2 arm2,
                                          int level) const;
  // Ring scan of the straight arms; throws MergeError when an arm misses the
  // ring entirely.
  std::array<RayOutlet, 2> scan_outlets(const SingularPattern& pat, Vec2 arm1,
                                        Vec2 arm2) const;
  static int ring_distance(const SingularPattern& pat,
                           const std::array<RayOutlet, 2>& outlets);
  bool pattern_geometry_ok(const SingularPattern& pat, Vec2 arm1,
                           Vec2 arm2) const;

  // Lemma 3.2: rebuild the pattern after quad-refining its cells; same
  // dimensions, nested rectangle, singular-index bound preserved.
  SingularPattern refine_singular_pattern(const SingularPattern& pat,
                                          Vec2 arm1, Vec2 arm2);

  // Algorithm 1: refine an outlet patch `rounds` times; emitted large
  // elements covering the vacated curve are appended to `out`. The patch is
  // given as ring-cell coordinates at the pattern level; refined patch leaves
  // are returned.
  std::vector<int> refine_outlet(const SingularPattern& pat,
                                 std::vector<SingularPattern::CellXY> patch,
                                 int rounds, std::vector<MacroRect>& out);

  // Theorem 3.1 contract: merge an admissible same-size run of cut leaves
  // into large rectangular macros (greedy directional growth, validated).
  std::vector<MacroRect> merge_smooth_subchain(const std::vector<int>& run,
                                               double delta0);

  // Algorithm 3: split a connecting run into admissible constant-size
  // subchains with qualifying junctions, refining as needed; updates `run`
  // in place and returns [start, end] index rows.
  std::vector<std::array<int, 2>> find_admissible_subchains(
      std::vector<int>& run);

  // Algorithm 4 driver for one chain (its singular patterns are built by the
  // caller and passed in).
  void merge_chain(const Chain& chain, std::vector<SingularPattern>& patterns,
                   std::vector<MacroRect>& macros, double delta0);

  // Leaves covering the rectangle (any levels).
  std::vector<int> leaves_in_rect(const MacroRect& r) const;
  bool cell_consumed(int leaf) const;
  void mark_consumed(const MacroRect& r);

  QuadtreeMesh& mesh() { return *mesh_; }
  CutOracle& oracle() { return *oracle_; }
  const Params& params() const { return params_; }

 private:
  void uniformize_region(const MacroRect& r, int margin);
  int region_max_level(const MacroRect& r, int margin) const;

  QuadtreeMesh* mesh_;
  CutOracle* oracle_;
  Params params_;
  std::unordered_map<int, CutInfo> cut_cache_;
  std::vector<MacroRect> consumed_;           // emitted macros and patterns
  std::unordered_set<int> consumed_leaves_;
};

// One element of the induced mesh.
struct InducedMacro {
  MacroRect rect;            // single cell for uncut leaves
  std::vector<int> leaves;   // member leaf ids
  CutInfo cut;               // kind kUncut*/kInterface/kBoundary
  SubTriangulation sub;      // cut macros only
  bool singular = false;
  double eta = 0.0;          // interface deviation
  double pattern_bound = 0.0;  // index bound for singular patterns
};

struct InducedMesh {
  std::vector<InducedMacro> macros;
  std::unordered_map<int, int> leaf_to_macro;
  double delta0_effective = 0.2;  // min(1/5-or-config, delta_s)
  int n_singular_patterns = 0;

  const InducedMacro& macro_of_leaf(int leaf) const {
    return macros[leaf_to_macro.at(leaf)];
  }
};

struct InducedMeshParams {
  double delta0 = 0.2;
  int max_rounds = 40;
  bool log = false;
  // curve samples for the coverage invariant
  int coverage_samples = 1000;
  bool validate = true;
};

// Full pipeline: standing assumptions, chains, Algorithm 4 per chain,
// assembly and invariant validation of M = Induced(T). Refines `mesh`.
InducedMesh build_induced_mesh(QuadtreeMesh& mesh, CutOracle& oracle,
                               const InducedMeshParams& params);

// Validation used by both the pipeline and the fuzz harness; throws
// MergeError describing the first violated invariant.
void validate_induced_mesh(const InducedMesh& im, const QuadtreeMesh& mesh,
                           CutOracle& oracle, int coverage_samples);

}  // namespace ufem
