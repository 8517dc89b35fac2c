#include "ufem/merging.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_set>

namespace ufem {

long strict_floor(double g) {
  double f = std::floor(g);
  if (f == g) f -= 1.0;
  return static_cast<long>(f);
}

namespace {

enum Dir { kR = 0, kL = 1, kU = 2, kD = 3 };

Dir dominant_dir(const Vec2& a) {
  if (std::abs(a.x) >= std::abs(a.y)) return a.x > 0 ? kR : kL;
  return a.y > 0 ? kU : kD;
}

}  // namespace

PatternDims pattern_dims(Vec2 arm1, Vec2 arm2, double hx, double hy) {
  // Cell units: the host cell is the unit square.
  Vec2 a1 = Vec2{arm1.x / hx, arm1.y / hy}.normalized();
  Vec2 a2 = Vec2{arm2.x / hx, arm2.y / hy}.normalized();

  // Normalize by axis reflections (sx, sy, applied first) and an axis swap
  // (applied second) onto the frames of the Lemma 3.1 proof:
  //   case 0 (mixed): arm1 shallow to the right, arm2 steep downward;
  //   case 1 (same region): both arms steep downward;
  //   case 2 (opposite): arm1 steep up, arm2 steep down.
  int sx = 1, sy = 1;
  bool swap = false;
  int case_id;
  Dir d1 = dominant_dir(a1), d2 = dominant_dir(a2);
  bool sh1 = (d1 == kR || d1 == kL), sh2 = (d2 == kR || d2 == kL);
  if (sh1 != sh2) {
    if (!sh1) { std::swap(a1, a2); std::swap(d1, d2); }
    sx = (d1 == kL) ? -1 : 1;
    sy = (d2 == kU) ? -1 : 1;
    case_id = 0;
  } else if (!sh1) {  // both steep
    if (d1 == d2) {
      sy = (d1 == kU) ? -1 : 1;
      case_id = 1;
    } else {
      if (d1 == kD) std::swap(a1, a2);
      case_id = 2;
    }
  } else {  // both shallow: swap axes (R -> U, L -> D)
    swap = true;
    if (d1 == d2) {
      sx = (d1 == kR) ? -1 : 1;  // reflect so both end up downward
      case_id = 1;
    } else {
      if (d1 == kL) std::swap(a1, a2);  // arm1 becomes the upward one
      case_id = 2;
    }
  }
  auto fwd = [&](const Vec2& v) {
    Vec2 r{sx * v.x, sy * v.y};
    if (swap) std::swap(r.x, r.y);
    return r;
  };
  Vec2 b1 = fwd(a1), b2 = fwd(a2);

  PatternDims out{};
  out.case_id = case_id;
  long m1, m2, n1, n2;
  if (case_id == 0) {
    double l1 = b1.y / b1.x;  // slope of the shallow arm, |l1| <= 1
    double l2 = b2.x / b2.y;  // inverse slope of the steep arm, |l2| < 1
    out.lambda1 = l1;
    out.lambda2 = l2;
    if (l1 < 0 && l2 < 0) {
      m1 = 2; n2 = 2;
      m2 = strict_floor((2 - l2) / (1 - l1 * l2));
      n1 = strict_floor((1 - 2 * l1) / (1 - l1 * l2)) + 1;
    } else if (l1 >= 0 && l2 >= 0) {
      m1 = strict_floor(2 * l2) + 2;
      m2 = 1;
      n1 = 1;
      n2 = strict_floor(2 * l1) + 3;
    } else if (l1 >= 0 && l2 < 0) {
      m1 = 2;
      m2 = strict_floor(2 * (-l2)) + 2;
      n1 = 1;
      n2 = strict_floor((m2 + 1) * l1) + 3;
    } else {  // l1 < 0, l2 >= 0
      n1 = strict_floor(2 * (-l1)) + 2;
      n2 = 2;
      m2 = 1;
      m1 = strict_floor((n1 + 1) * l2) + 2;
    }
  } else {
    auto pos = [](double x) { return x > 0 ? x : 0.0; };
    double l1 = b1.x / b1.y, l2 = b2.x / b2.y;  // inverse slopes
    out.lambda1 = l1;
    out.lambda2 = l2;
    if (case_id == 1) {
      double dl = std::max(std::abs(l1 - l2), 1e-9);
      n1 = strict_floor(3.0 / dl) + 1;
      n2 = 2;
      m1 = std::max(strict_floor((n1 + 1) * pos(l1)),
                    strict_floor((n1 + 1) * pos(l2))) + 3;
      m2 = std::max(strict_floor((n1 + 1) * pos(-l1)),
                    strict_floor((n1 + 1) * pos(-l2))) + 2;
    } else {
      m1 = std::max(strict_floor(2 * pos(l1)), strict_floor(2 * pos(l2))) + 3;
      m2 = std::max(strict_floor(2 * pos(-l1)), strict_floor(2 * pos(-l2))) + 2;
      n1 = 1;
      n2 = 2;
    }
  }
  // Keep the singular-index guarantee for every host-cell position of Q: the
  // sides behind Q need two cells of margin.
  m1 = std::max(m1, 2L);
  n2 = std::max(n2, 2L);
  m2 = std::max(m2, 1L);
  n1 = std::max(n1, 1L);
  out.m1 = (int)m1; out.m2 = (int)m2; out.n1 = (int)n1; out.n2 = (int)n2;

  // Host-relative occupied cell box in the normal frame: u in [-m1+1, m2],
  // v in [-n1, n2-1]; map back by undoing the swap, then the reflections.
  long ulo = -m1 + 1, uhi = m2, vlo = -n1, vhi = n2 - 1;
  if (swap) { std::swap(ulo, vlo); std::swap(uhi, vhi); }
  if (sx < 0) { long t = ulo; ulo = -uhi; uhi = -t; }
  if (sy < 0) { long t = vlo; vlo = -vhi; vhi = -t; }
  out.ulo = ulo; out.uhi = uhi; out.vlo = vlo; out.vhi = vhi;
  return out;
}

Merger::Merger(QuadtreeMesh& mesh, CutOracle& oracle, Params params)
    : mesh_(&mesh), oracle_(&oracle), params_(params) {}

Merger::Merger(QuadtreeMesh& mesh, CutOracle& oracle)
    : Merger(mesh, oracle, Params{}) {}

const CutInfo& Merger::classify_cached(int leaf) {
  auto it = cut_cache_.find(leaf);
  if (it != cut_cache_.end()) return it->second;
  auto res = cut_cache_.emplace(leaf, oracle_->classify_leaf(leaf));
  return res.first->second;
}

std::vector<int> Merger::leaves_in_rect(const MacroRect& r) const {
  std::vector<int> out;
  for (std::int64_t y = r.iy0; y < r.iy1; ++y)
    for (std::int64_t x = r.ix0; x < r.ix1; ++x) {
      // descend from (r.level, x, y) to all covered leaves
      std::vector<CellKey> todo{{r.level, x, y}};
      while (!todo.empty()) {
        CellKey k = todo.back();
        todo.pop_back();
        if (!mesh_->in_range(k.level, k.ix, k.iy)) continue;
        int leaf = mesh_->find_leaf(k.level, k.ix, k.iy);
        if (leaf >= 0) {
          out.push_back(leaf);
          continue;
        }
        int cov = mesh_->covering_leaf(k.level, k.ix, k.iy);
        if (cov >= 0) {
          // covered by a coarser leaf: include it once (when it starts here)
          const Cell& c = mesh_->cell(cov);
          int s = k.level - c.level;
          if ((c.ix << s) == k.ix && (c.iy << s) == k.iy) out.push_back(cov);
          continue;
        }
        // finer: recurse
        for (int q = 0; q < 4; ++q)
          todo.push_back({k.level + 1, 2 * k.ix + (q & 1), 2 * k.iy + (q >> 1)});
      }
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void Merger::enforce_standing_assumptions() {
  for (int round = 0; round < params_.max_rounds; ++round) {
    std::vector<int> bad;
    for (int id : mesh_->leaves()) {
      try {
        const CutInfo& cut = classify_cached(id);
        if (cut.cut() && !cut.proper()) bad.push_back(id);
      } catch (const StandingAssumptionError&) {
        bad.push_back(id);
      }
    }
    if (bad.empty()) return;
    mesh_->refine(bad);
  }
  throw MergeError("standing assumptions not resolved within the level budget");
}

std::vector<Chain> Merger::build_chains() {
  struct Entry {
    double t;
    int leaf;
  };
  std::map<int, std::vector<Entry>> per_curve;
  for (int id : mesh_->leaves()) {
    const CutInfo& cut = classify_cached(id);
    if (!cut.cut()) continue;
    if (!cut.proper())
      throw MergeError("build_chains: improper cut cell remains");
    per_curve[cut.curve].push_back({cut.t_in, id});
  }
  std::vector<Chain> chains;
  for (auto& [curve, entries] : per_curve) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.t < b.t; });
    Chain c;
    c.curve = curve;
    c.closed = oracle_->domain().curve(curve).closed();
    for (const auto& e : entries) c.cells.push_back(e.leaf);
    double span = oracle_->domain().curve(curve).param_span();
    const int n = static_cast<int>(c.cells.size());
    for (int i = 0; i < n; ++i) {
      if (!c.closed && i + 1 == n) break;
      const CutInfo& a = classify_cached(c.cells[i]);
      const CutInfo& b = classify_cached(c.cells[(i + 1) % n]);
      double gap = b.t_in - (a.t_in + a.t_len);
      if (c.closed) gap = std::fmod(std::fmod(gap, span) + span, span);
      if (std::min(std::abs(gap), std::abs(gap - span)) > 1e-7 * span)
        throw MergeError("build_chains: chain of curve " +
                         std::to_string(curve) + " is not continuous");
    }
    if (!c.closed) {
      const auto& dom = oracle_->domain();
      Point p0 = dom.curve(curve).at(0.0);
      Point p1 = dom.curve(curve).at(dom.curve(curve).param_span());
      auto on_box = [&](const Point& p) {
        double e = 1e-9 * (dom.box_hi - dom.box_lo).norm();
        return std::abs(p.x - dom.box_lo.x) < e || std::abs(p.x - dom.box_hi.x) < e ||
               std::abs(p.y - dom.box_lo.y) < e || std::abs(p.y - dom.box_hi.y) < e;
      };
      // Open interfaces may only terminate on the mesh-aligned outer boundary
      // (Omega_1 strictly inside Omega otherwise).
      if (!dom.outer_fitted || !on_box(p0) || !on_box(p1))
        throw MergeError(
            "interface must be closed inside the domain or end on the fitted "
            "outer boundary");
    }
    chains.push_back(std::move(c));
  }
  return chains;
}

std::vector<ChainViolation> Merger::check_admissible(const Chain& chain) const {
  std::vector<ChainViolation> out;
  std::set<int> chain_set(chain.cells.begin(), chain.cells.end());
  auto& m = *mesh_;
  for (int id : chain.cells) {
    const Cell& c = m.cell(id);
    for (int nb : m.layer(id, 2))
      if (m.cell(nb).level != c.level) {
        out.push_back({1, id, "S(K)_2 element of different size"});
        break;
      }
    CutInfo cut = oracle_->classify_leaf(id);
    const std::int64_t dx[4] = {0, 1, 0, -1};
    const std::int64_t dy[4] = {-1, 0, 1, 0};
    for (int sd = 0; sd < 4; ++sd) {
      bool side_cut = (cut.A.side == sd || cut.B.side == sd);
      if (side_cut) continue;
      if (m.find_leaf(c.level, c.ix + dx[sd], c.iy + dy[sd]) < 0) {
        // not a full side of a same-size neighbor (coarser or finer or absent)
        if (m.covering_leaf(c.level, c.ix + dx[sd], c.iy + dy[sd]) >= 0 ||
            m.covering_leaf(c.level + 1, 2 * (c.ix + dx[sd]), 2 * (c.iy + dy[sd])) >= 0)
          out.push_back({2, id, "interior side without same-size neighbor"});
      }
    }
  }
  std::map<int, int> count;
  for (int id : chain.cells)
    for (int nb : m.edge_neighbors(id))
      if (!chain_set.count(nb)) count[nb]++;
  for (auto& [nb, k] : count)
    if (k > 2) out.push_back({3, nb, "uncut cell neighbors >2 chain cells"});
  for (auto& [nb, k] : count) {
    for (int j = 1; j <= 2; ++j) {
      std::vector<int> cuts;
      for (int c2 : m.layer(nb, j))
        if (chain_set.count(c2)) cuts.push_back(c2);
      if (cuts.size() <= 1) continue;
      std::set<int> seen{cuts[0]};
      std::vector<int> stack{cuts[0]};
      while (!stack.empty()) {
        int curc = stack.back();
        stack.pop_back();
        for (int adj : m.corner_neighbors(curc))
          if (!seen.count(adj) &&
              std::find(cuts.begin(), cuts.end(), adj) != cuts.end()) {
            seen.insert(adj);
            stack.push_back(adj);
          }
      }
      if (seen.size() != cuts.size()) {
        out.push_back({4, nb, "disconnected cut cells in S(K)_" + std::to_string(j)});
        break;
      }
    }
  }
  return out;
}

SingularPattern Merger::place_pattern(Point Q, Vec2 arm1, Vec2 arm2, int level,
                                      const PatternDims& dims) const {
  double sx = mesh_->root_hx() / double(std::int64_t(1) << level);
  double sy = mesh_->root_hy() / double(std::int64_t(1) << level);
  double fx = (Q.x - mesh_->domain_lo().x) / sx;
  double fy = (Q.y - mesh_->domain_lo().y) / sy;
  // Host cell containing Q; a Q on a grid line belongs to the upper-right
  // cell (deterministic vertex convention).
  std::int64_t hx = (std::int64_t)std::floor(fx + 1e-9);
  std::int64_t hy = (std::int64_t)std::floor(fy + 1e-9);
  SingularPattern pat;
  pat.Q = Q;
  pat.m1 = dims.m1;
  pat.m2 = dims.m2;
  pat.n1 = dims.n1;
  pat.n2 = dims.n2;
  pat.lambda1 = dims.lambda1;
  pat.lambda2 = dims.lambda2;
  pat.case_id = dims.case_id;
  pat.rect.level = level;
  pat.rect.ix0 = hx + dims.ulo;
  pat.rect.ix1 = hx + dims.uhi + 1;
  pat.rect.iy0 = hy + dims.vlo;
  pat.rect.iy1 = hy + dims.vhi + 1;
  return pat;
}

std::array<RayOutlet, 2> Merger::scan_outlets(const SingularPattern& pat,
                                              Vec2 arm1, Vec2 arm2) const {
  const MacroRect& r = pat.rect;
  double sx = mesh_->root_hx() / double(std::int64_t(1) << r.level);
  double sy = mesh_->root_hy() / double(std::int64_t(1) << r.level);
  double qx = (pat.Q.x - mesh_->domain_lo().x) / sx;
  double qy = (pat.Q.y - mesh_->domain_lo().y) / sy;

  std::array<RayOutlet, 2> out;
  for (int a = 0; a < 2; ++a) {
    Vec2 d = (a == 0) ? arm1 : arm2;
    Vec2 v = Vec2{d.x / sx, d.y / sy}.normalized();
    double px = qx, py = qy;
    std::int64_t cx = (std::int64_t)std::floor(px);
    std::int64_t cy = (std::int64_t)std::floor(py);
    int enter_side = -1;
    auto in_rect = [&](std::int64_t x, std::int64_t y) {
      return x >= r.ix0 && x < r.ix1 && y >= r.iy0 && y < r.iy1;
    };
    auto in_band = [&](std::int64_t x, std::int64_t y) {
      bool inbox = x >= r.ix0 - 1 && x < r.ix1 + 1 && y >= r.iy0 - 1 && y < r.iy1 + 1;
      return inbox && !in_rect(x, y);
    };
    std::vector<int> enters, exits;
    for (int steps = 0; steps < (1 << 14); ++steps) {
      double tx = std::numeric_limits<double>::max(), ty = tx;
      if (v.x > 1e-15) tx = ((cx + 1) - px) / v.x;
      else if (v.x < -1e-15) tx = (cx - px) / v.x;
      if (v.y > 1e-15) ty = ((cy + 1) - py) / v.y;
      else if (v.y < -1e-15) ty = (cy - py) / v.y;
      double t = std::min(tx, ty);
      int exit_side;
      std::int64_t nx = cx, ny = cy;
      if (tx <= ty) {
        exit_side = v.x > 0 ? 1 : 3;
        nx += v.x > 0 ? 1 : -1;
      } else {
        exit_side = v.y > 0 ? 2 : 0;
        ny += v.y > 0 ? 1 : -1;
      }
      if (in_band(cx, cy)) {
        out[a].cells.push_back({cx, cy});
        enters.push_back(enter_side);
        exits.push_back(exit_side);
      }
      if (!in_band(nx, ny) && !in_rect(nx, ny)) break;
      px += t * v.x;
      py += t * v.y;
      enter_side = exit_side ^ 2;
      cx = nx;
      cy = ny;
    }
    RayOutlet& o = out[a];
    if (o.cells.empty())
      throw MergeError("singular pattern: arm does not reach the ring");
    if (o.cells.size() == 1) {
      o.t2 = enters[0] >= 0 && ((enters[0] ^ exits[0]) == 2);
    } else if (o.cells.size() == 2) {
      o.t1_pair = (std::abs(o.cells[0][0] - o.cells[1][0]) +
                   std::abs(o.cells[0][1] - o.cells[1][1])) == 1;
    }
  }
  return out;
}

int Merger::ring_distance(const SingularPattern& pat,
                          const std::array<RayOutlet, 2>& outlets) {
  const MacroRect& r = pat.rect;
  std::vector<SingularPattern::CellXY> ring;
  for (std::int64_t x = r.ix0 - 1; x <= r.ix1; ++x) ring.push_back({x, r.iy0 - 1});
  for (std::int64_t y = r.iy0; y <= r.iy1; ++y) ring.push_back({r.ix1, y});
  for (std::int64_t x = r.ix1 - 1; x >= r.ix0 - 1; --x) ring.push_back({x, r.iy1});
  for (std::int64_t y = r.iy1 - 1; y >= r.iy0; --y) ring.push_back({r.ix0 - 1, y});
  const int n = static_cast<int>(ring.size());
  auto idx_of = [&](const RayOutlet& o) {
    std::vector<int> idx;
    for (auto& c : o.cells)
      for (int i = 0; i < n; ++i)
        if (ring[i] == c) idx.push_back(i);
    return idx;
  };
  std::vector<int> i1 = idx_of(outlets[0]), i2 = idx_of(outlets[1]);
  if (i1.empty() || i2.empty()) return 0;
  int best = n;
  for (int s : i1) {
    for (int dir : {1, -1}) {
      int gap = 0;
      for (int k = 1; k < n; ++k) {
        int j = ((s + dir * k) % n + n) % n;
        if (std::find(i2.begin(), i2.end(), j) != i2.end()) {
          best = std::min(best, gap);
          break;
        }
        if (std::find(i1.begin(), i1.end(), j) == i1.end()) ++gap;
      }
    }
  }
  return best;
}

bool Merger::pattern_geometry_ok(const SingularPattern& pat, Vec2 arm1,
                                 Vec2 arm2) const {
  Rect b = pat.rect.bounds(*mesh_);
  double dt = oracle_->singular_index(b, pat.Q);
  if (dt + 1e-12 < pat.index_bound()) return false;
  try {
    auto outlets = scan_outlets(pat, arm1, arm2);
    for (const auto& o : outlets)
      if (!(o.t2 || o.t1_pair)) return false;
    for (auto& c1 : outlets[0].cells)
      for (auto& c2 : outlets[1].cells)
        if (c1 == c2) return false;
    return ring_distance(pat, outlets) >= 2;
  } catch (const MergeError&) {
    return false;
  }
}

int Merger::region_max_level(const MacroRect& r, int margin) const {
  MacroRect g = r;
  g.ix0 -= margin; g.iy0 -= margin; g.ix1 += margin; g.iy1 += margin;
  int maxl = r.level;
  for (int id : leaves_in_rect(g))
    maxl = std::max(maxl, mesh_->cell(id).level);
  return maxl;
}

void Merger::uniformize_region(const MacroRect& r, int margin) {
  MacroRect g = r;
  g.ix0 -= margin; g.iy0 -= margin; g.ix1 += margin; g.iy1 += margin;
  for (int round = 0; round < params_.max_rounds; ++round) {
    std::vector<int> coarse;
    for (int id : leaves_in_rect(g))
      if (mesh_->cell(id).level < g.level) coarse.push_back(id);
    if (coarse.empty()) return;
    mesh_->refine(coarse);
  }
  throw MergeError("uniformize_region: did not converge");
}

SingularPattern Merger::build_pattern_geometric(Point Q, Vec2 arm1, Vec2 arm2,
                                                int level) const {
  double sx = mesh_->root_hx() / double(std::int64_t(1) << level);
  double sy = mesh_->root_hy() / double(std::int64_t(1) << level);
  PatternDims dims = pattern_dims(arm1, arm2, sx, sy);
  SingularPattern pat = place_pattern(Q, arm1, arm2, level, dims);
  bool ok = pattern_geometry_ok(pat, arm1, arm2);
  // Fallback of Def. 3.2: enlarge uniformly until the outlet conditions hold.
  for (int grow = 0; !ok && grow < 16; ++grow) {
    switch (grow % 4) {
      case 0: pat.rect.ix1++; pat.m2++; break;
      case 1: pat.rect.iy0--; pat.n1++; break;
      case 2: pat.rect.ix0--; pat.m1++; break;
      case 3: pat.rect.iy1++; pat.n2++; break;
    }
    ok = pattern_geometry_ok(pat, arm1, arm2);
  }
  if (!ok)
    throw MergeError("singular pattern: no valid configuration at this level");
  auto outlets = scan_outlets(pat, arm1, arm2);
  pat.patch1 = outlets[0].cells;
  pat.patch2 = outlets[1].cells;
  return pat;
}

SingularPattern Merger::build_singular_pattern(Point Q, double tQ, int curve,
                                               Vec2 arm1, Vec2 arm2) {
  int leaf = mesh_->find_leaf(Q);
  int level = mesh_->cell(leaf).level;
  for (int round = 0; round < params_.max_rounds; ++round, ++level) {
    SingularPattern pat;
    try {
      pat = build_pattern_geometric(Q, arm1, arm2, level);
    } catch (const MergeError&) {
      continue;
    }
    pat.tQ = tQ;
    pat.curve = curve;

    int maxl = region_max_level(pat.rect, 1);
    if (maxl > level) {
      level = maxl - 1;  // loop увеличит к maxl
      continue;
    }
    uniformize_region(pat.rect, 1);

    bool valid = true;
    try {
      CutInfo mc = oracle_->classify_cells(pat.rect.level, pat.rect.ix0,
                                           pat.rect.iy0, pat.rect.ix1,
                                           pat.rect.iy1);
      if (!mc.proper() || !mc.singular || mc.curve != curve) valid = false;
      if (valid && mc.delta + 1e-12 < pat.index_bound()) valid = false;
      if (valid && mc.delta_tilde + 1e-12 < pat.index_bound()) valid = false;
      if (valid) {
        std::set<std::pair<std::int64_t, std::int64_t>> expect;
        for (auto& c : pat.patch1) expect.insert({c[0], c[1]});
        for (auto& c : pat.patch2) expect.insert({c[0], c[1]});
        const MacroRect& r = pat.rect;
        for (std::int64_t y = r.iy0 - 1; y <= r.iy1 && valid; ++y)
          for (std::int64_t x = r.ix0 - 1; x <= r.ix1 && valid; ++x) {
            if (x >= r.ix0 && x < r.ix1 && y >= r.iy0 && y < r.iy1) continue;
            int rl = mesh_->find_leaf(r.level, x, y);
            bool cutc = false;
            if (rl >= 0) {
              const CutInfo& ci = classify_cached(rl);
              cutc = ci.cut();
              if (cutc && ci.curve != curve) valid = false;
            }
            if (cutc != (expect.count({x, y}) > 0)) valid = false;
          }
      }
    } catch (const StandingAssumptionError&) {
      valid = false;
    }
    if (valid) return pat;
    MacroRect g = pat.rect;
    g.ix0 -= 1; g.iy0 -= 1; g.ix1 += 1; g.iy1 += 1;
    mesh_->refine(leaves_in_rect(g));
  }
  throw MergeError("build_singular_pattern: validation did not converge");
}

SingularPattern Merger::refine_singular_pattern(const SingularPattern& pat,
                                                Vec2 arm1, Vec2 arm2) {
  mesh_->refine(leaves_in_rect(pat.rect));
  int level = pat.rect.level + 1;
  double sx = mesh_->root_hx() / double(std::int64_t(1) << level);
  double sy = mesh_->root_hy() / double(std::int64_t(1) << level);
  PatternDims dims = pattern_dims(arm1, arm2, sx, sy);
  SingularPattern child = place_pattern(pat.Q, arm1, arm2, level, dims);
  child.tQ = pat.tQ;
  child.curve = pat.curve;
  auto outlets = scan_outlets(child, arm1, arm2);
  child.patch1 = outlets[0].cells;
  child.patch2 = outlets[1].cells;
  const MacroRect& up = child.rect;
  if (!(up.ix0 >= 2 * pat.rect.ix0 && up.ix1 <= 2 * pat.rect.ix1 &&
        up.iy0 >= 2 * pat.rect.iy0 && up.iy1 <= 2 * pat.rect.iy1))
    throw MergeError("refine_singular_pattern: child pattern not nested");
  return child;
}

bool Merger::cell_consumed(int leaf) const {
  return consumed_leaves_.count(leaf) > 0;
}

void Merger::mark_consumed(const MacroRect& r) {
  consumed_.push_back(r);
  for (int id : leaves_in_rect(r)) consumed_leaves_.insert(id);
}

std::vector<int> Merger::refine_outlet(const SingularPattern& pat,
                                       std::vector<SingularPattern::CellXY> patch,
                                       int rounds, std::vector<MacroRect>& out) {
  const MacroRect& r = pat.rect;
  MacroRect band = r;
  band.ix0 -= 1; band.iy0 -= 1; band.ix1 += 1; band.iy1 += 1;
  // Restrict to the outlet's own neighborhood of the band.
  MacroRect region{r.level,
                   std::min(patch[0][0], patch.back()[0]) - 1,
                   std::min(patch[0][1], patch.back()[1]) - 1,
                   std::max(patch[0][0], patch.back()[0]) + 2,
                   std::max(patch[0][1], patch.back()[1]) + 2};
  std::vector<int> patch_leaves;
  for (auto& cxy : patch) {
    int l = mesh_->find_leaf(r.level, cxy[0], cxy[1]);
    if (l >= 0) patch_leaves.push_back(l);
  }
  auto in_band = [&](const Cell& c) {
    return band.contains_cell(c) && !r.contains_cell(c);
  };
  for (int i = 0; i < rounds; ++i) {
    std::set<int> to_refine(patch_leaves.begin(), patch_leaves.end());
    for (int pl : patch_leaves)
      for (int nb : mesh_->edge_neighbors(pl)) {
        const Cell& c = mesh_->cell(nb);
        if (in_band(c) && !cell_consumed(nb)) to_refine.insert(nb);
      }
    mesh_->refine({to_refine.begin(), to_refine.end()});
    std::vector<int> new_patch, leftover;
    for (int id : leaves_in_rect(region)) {
      const Cell& c = mesh_->cell(id);
      if (!in_band(c) || cell_consumed(id)) continue;
      const CutInfo& ci = classify_cached(id);
      if (!ci.cut() || ci.curve != pat.curve) continue;
      int s = c.level - band.level;
      std::int64_t bx0 = band.ix0 << s, bx1 = band.ix1 << s;
      std::int64_t by0 = band.iy0 << s, by1 = band.iy1 << s;
      bool outer = c.ix == bx0 || c.ix + 1 == bx1 || c.iy == by0 || c.iy + 1 == by1;
      if (outer)
        new_patch.push_back(id);
      else
        leftover.push_back(id);
    }
    std::sort(leftover.begin(), leftover.end(), [&](int a, int b) {
      return classify_cached(a).t_in < classify_cached(b).t_in;
    });
    if (!leftover.empty()) {
      auto macros = merge_smooth_subchain(
          leftover, std::min(params_.delta0, pat.index_bound()));
      for (auto& mr : macros) out.push_back(mr);
    }
    patch_leaves = new_patch;
  }
  return patch_leaves;
}

namespace {
struct GrowDir {
  int dx = 0, dy = 0;
  double ratio = 2.0;
};
}  // namespace

static std::vector<GrowDir> growth_directions(const QuadtreeMesh& mesh,
                                              const MacroRect& r,
                                              const CutInfo& cut) {
  Rect b = r.bounds(mesh);
  std::vector<GrowDir> dirs;
  for (int sd = 0; sd < 4; ++sd) {
    std::vector<double> ss{0.0, 1.0};
    for (const SideCrossing* c : {&cut.A, &cut.B})
      if (c->side == sd) ss.push_back(std::clamp(c->s, 0.0, 1.0));
    std::sort(ss.begin(), ss.end());
    Vec2 dir;
    switch (sd) {
      case 0: dir = {1, 0}; break;
      case 1: dir = {0, 1}; break;
      case 2: dir = {-1, 0}; break;
      default: dir = {0, -1}; break;
    }
    for (size_t i = 0; i + 1 < ss.size(); ++i) {
      double a = ss[i], bb = ss[i + 1];
      if (bb - a < 1e-12 || bb - a > 1.0 - 1e-12) continue;
      bool at_start = a < 1e-12;
      bool at_end = bb > 1.0 - 1e-12;
      if (at_start == at_end) continue;
      Vec2 g = at_start ? (dir * -1.0) : dir;
      GrowDir gd;
      gd.dx = g.x > 0.5 ? 1 : (g.x < -0.5 ? -1 : 0);
      gd.dy = g.y > 0.5 ? 1 : (g.y < -0.5 ? -1 : 0);
      gd.ratio = bb - a;
      dirs.push_back(gd);
    }
  }
  (void)b;
  std::sort(dirs.begin(), dirs.end(),
            [](const GrowDir& a, const GrowDir& b) { return a.ratio < b.ratio; });
  std::vector<GrowDir> uniq;
  auto push_unique = [&](const GrowDir& d) {
    for (auto& u : uniq)
      if (u.dx == d.dx && u.dy == d.dy) return;
    uniq.push_back(d);
  };
  for (auto& d : dirs) push_unique(d);
  for (auto gd : std::initializer_list<GrowDir>{
           {1, 0, 3}, {-1, 0, 3}, {0, 1, 3}, {0, -1, 3}})
    push_unique(gd);
  return uniq;
}

std::vector<MacroRect> Merger::merge_smooth_subchain(const std::vector<int>& run,
                                                     double delta0) {
  std::vector<MacroRect> out;
  std::set<int> local_consumed;
  std::set<int> run_set(run.begin(), run.end());
  for (int id : run) {
    if (local_consumed.count(id) || cell_consumed(id)) continue;
    const Cell& c0 = mesh_->cell(id);
    MacroRect r{c0.level, c0.ix, c0.iy, c0.ix + 1, c0.iy + 1};
    std::set<int> absorbed{id};
    bool emitted = false;
    for (int attempt = 0;
         attempt < 2 * params_.growth_cap * params_.growth_cap && !emitted;
         ++attempt) {
      CutInfo mc;
      bool classify_ok = true;
      try {
        mc = oracle_->classify_cells(r.level, r.ix0, r.iy0, r.ix1, r.iy1);
      } catch (const StandingAssumptionError&) {
        classify_ok = false;
      }
      if (classify_ok && mc.proper() && !mc.singular &&
          mc.delta + 1e-12 >= delta0) {
        out.push_back(r);
        mark_consumed(r);
        for (int a : absorbed) local_consumed.insert(a);
        emitted = true;
        break;
      }
      if (!classify_ok || !mc.cut())
        throw MergeError("merge_smooth_subchain: candidate macro lost the curve");
      auto dirs = growth_directions(*mesh_, r, mc);
      bool grew = false;
      for (const auto& d : dirs) {
        MacroRect cand = r;
        if (d.dx > 0) cand.ix1++;
        else if (d.dx < 0) cand.ix0--;
        else if (d.dy > 0) cand.iy1++;
        else cand.iy0--;
        if (cand.nx() > params_.growth_cap || cand.ny() > params_.growth_cap)
          continue;
        bool ok = true;
        std::vector<int> new_leaves;
        for (std::int64_t y = cand.iy0; y < cand.iy1 && ok; ++y)
          for (std::int64_t x = cand.ix0; x < cand.ix1 && ok; ++x) {
            if (x >= r.ix0 && x < r.ix1 && y >= r.iy0 && y < r.iy1) continue;
            int l = mesh_->find_leaf(r.level, x, y);
            if (l < 0) { ok = false; break; }
            if (cell_consumed(l)) { ok = false; break; }
            const CutInfo& ci = classify_cached(l);
            if (ci.cut() && (ci.singular || !run_set.count(l))) {
              ok = false;
              break;
            }
            new_leaves.push_back(l);
          }
        if (!ok) continue;
        r = cand;
        for (int l : new_leaves)
          if (run_set.count(l)) absorbed.insert(l);
        grew = true;
        break;
      }
      if (!grew)
        throw MergeError(
            "merge_smooth_subchain: cannot reach delta0, growth blocked");
    }
    if (!emitted)
      throw MergeError("merge_smooth_subchain: growth cap exceeded");
  }
  return out;
}

void Merger::merge_chain(const Chain& chain,
                         std::vector<SingularPattern>& patterns,
                         std::vector<MacroRect>& macros, double delta0) {
  const int n = static_cast<int>(chain.cells.size());
  std::vector<bool> covered(n, false);
  for (int i = 0; i < n; ++i) {
    if (cell_consumed(chain.cells[i])) covered[i] = true;
  }
  std::vector<std::vector<int>> runs;
  std::vector<int> cur;
  for (int i = 0; i < n; ++i) {
    if (covered[i]) {
      if (!cur.empty()) { runs.push_back(cur); cur.clear(); }
    } else {
      cur.push_back(chain.cells[i]);
    }
  }
  if (!cur.empty()) runs.push_back(cur);
  if (chain.closed && runs.size() > 1 && !covered[0] && !covered[n - 1]) {
    std::vector<int> merged = runs.back();
    merged.insert(merged.end(), runs.front().begin(), runs.front().end());
    runs.front() = merged;
    runs.pop_back();
  }
  (void)patterns;
  for (const auto& run : runs) {
    // maximal constant-size subruns
    std::vector<int> sub;
    int lvl = -1;
    for (int id : run) {
      int l = mesh_->cell(id).level;
      if (lvl >= 0 && l != lvl) {
        auto part = merge_smooth_subchain(sub, delta0);
        macros.insert(macros.end(), part.begin(), part.end());
        sub.clear();
      }
      lvl = l;
      sub.push_back(id);
    }
    if (!sub.empty()) {
      auto part = merge_smooth_subchain(sub, delta0);
      macros.insert(macros.end(), part.begin(), part.end());
    }
  }
}

std::vector<std::array<int, 2>> Merger::find_admissible_subchains(
    std::vector<int>& run) {
  // Algorithm 3, reduced to the structure a 1-irregular quadtree can present:
  // consecutive chain cells differ by at most one level, so runs split at the
  // size changes; junctions must look like an outlet patch on both sides
  // (one T2 cell or two neighboring T1 cells), otherwise the coarser side is
  // refined and the scan restarts.
  auto rebuild = [&](const std::vector<int>& old_run) {
    // replace refined cells by their cut descendants, ordered along the curve
    std::vector<int> fresh;
    for (int id : old_run) {
      if (mesh_->cell(id).leaf) {
        fresh.push_back(id);
        continue;
      }
      std::vector<int> stack{id};
      std::vector<int> kids;
      while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        const Cell& c = mesh_->cell(cur);
        if (c.leaf) {
          const CutInfo& ci = classify_cached(cur);
          if (ci.cut()) kids.push_back(cur);
          continue;
        }
        for (int q = 0; q < 4; ++q) stack.push_back(c.child0 + q);
      }
      std::sort(kids.begin(), kids.end(), [&](int a, int b) {
        return classify_cached(a).t_in < classify_cached(b).t_in;
      });
      fresh.insert(fresh.end(), kids.begin(), kids.end());
    }
    return fresh;
  };
  auto qualifies = [&](const std::vector<int>& cells, int at, bool backward) {
    // T2 cell at the junction, or a neighboring T1 pair
    const CutInfo& ci = classify_cached(cells[at]);
    if (ci.type == CutInfo::Type::kT2) return true;
    if (ci.type != CutInfo::Type::kT1) return false;
    int other = backward ? at - 1 : at + 1;
    if (other < 0 || other >= (int)cells.size()) return false;
    const CutInfo& cj = classify_cached(cells[other]);
    if (cj.type != CutInfo::Type::kT1) return false;
    const Cell& a = mesh_->cell(cells[at]);
    const Cell& b = mesh_->cell(cells[other]);
    return a.level == b.level &&
           std::abs(a.ix - b.ix) + std::abs(a.iy - b.iy) == 1;
  };
  for (int round = 0; round < params_.max_rounds; ++round) {
    std::vector<std::array<int, 2>> rows;
    int is = 0;
    bool restart = false;
    const int n = static_cast<int>(run.size());
    while (is < n) {
      int ie = is;
      while (ie + 1 < n &&
             mesh_->cell(run[ie + 1]).level == mesh_->cell(run[is]).level)
        ++ie;
      if (ie + 1 == n) {
        rows.push_back({is, ie});
        break;
      }
      int dl = std::abs(mesh_->cell(run[ie + 1]).level -
                        mesh_->cell(run[ie]).level);
      if (dl <= 2 && qualifies(run, ie, true) && qualifies(run, ie + 1, false)) {
        rows.push_back({is, ie});
        is = ie + 1;
        continue;
      }
      // refine the coarser junction side and restart
      int coarse = (mesh_->cell(run[ie + 1]).level < mesh_->cell(run[ie]).level)
                       ? run[ie + 1]
                       : run[ie];
      mesh_->refine({coarse});
      run = rebuild(run);
      restart = true;
      break;
    }
    if (!restart) return rows;
  }
  throw MergeError("find_admissible_subchains: iteration guard exceeded");
}

InducedMesh build_induced_mesh(QuadtreeMesh& mesh, CutOracle& oracle,
                               const InducedMeshParams& params) {
  Merger::Params mp;
  mp.delta0 = params.delta0;
  mp.max_rounds = params.max_rounds;
  mp.log = params.log;

  for (int outer_round = 0;; ++outer_round) {
    if (outer_round >= params.max_rounds)
      throw MergeError("build_induced_mesh: did not stabilize");
    std::vector<SingularPattern> patterns;
    std::vector<MacroRect> macros;
    Merger merger(mesh, oracle, mp);
    merger.enforce_standing_assumptions();

    const DomainConfig& dom = oracle.domain();
    bool retry = false;
    for (int cv = 0; cv < dom.num_curves() && !retry; ++cv) {
      for (const auto& sv : dom.curve(cv).singular_vertices()) {
        SingularPattern pat = merger.build_singular_pattern(
            sv.point, double(sv.seg_after), cv, sv.arm_in, sv.arm_out);
        for (const auto& other : patterns)
          if (pat.rect.overlaps(other.rect)) {
            std::vector<int> t = merger.leaves_in_rect(pat.rect);
            auto t2 = merger.leaves_in_rect(other.rect);
            t.insert(t.end(), t2.begin(), t2.end());
            mesh.refine(t);
            retry = true;
            break;
          }
        if (retry) break;
        merger.mark_consumed(pat.rect);
        patterns.push_back(pat);
      }
    }
    if (retry) continue;

    std::uint64_t stamp_before = mesh.mutation_stamp();
    double delta_s = 1.0;
    for (const auto& p : patterns) delta_s = std::min(delta_s, p.index_bound());
    double delta0_eff = std::min(params.delta0, delta_s);

    bool failed = false;
    try {
      auto chains = merger.build_chains();
      for (const auto& chain : chains)
        merger.merge_chain(chain, patterns, macros, delta0_eff);
    } catch (const MergeError& e) {
      if (params.log) std::fprintf(stderr, "merge retry: %s\n", e.what());
      failed = true;
    }
    if (failed) {
      // Worst-case fallback: refine every cut cell once, which drives the
      // chains toward the uniform admissible configuration.
      std::vector<int> cut;
      for (int id : mesh.leaves()) {
        const CutInfo& ci = merger.classify_cached(id);
        if (ci.cut()) cut.push_back(id);
      }
      mesh.refine(cut);
      continue;
    }
    if (mesh.mutation_stamp() != stamp_before) continue;

    InducedMesh im;
    im.delta0_effective = delta0_eff;
    im.n_singular_patterns = static_cast<int>(patterns.size());
    auto add_macro = [&](const MacroRect& r, bool singular, double bound) {
      InducedMacro mac;
      mac.rect = r;
      mac.singular = singular;
      mac.pattern_bound = bound;
      mac.cut = oracle.classify_cells(r.level, r.ix0, r.iy0, r.ix1, r.iy1);
      Rect b = r.bounds(mesh);
      if (mac.cut.proper()) {
        mac.sub = oracle.subtriangulate(b, mac.cut);
        mac.eta = oracle.deviation(mac.cut, mac.sub);
      }
      int idx = static_cast<int>(im.macros.size());
      mac.leaves = merger.leaves_in_rect(r);
      for (int id : mac.leaves) im.leaf_to_macro[id] = idx;
      im.macros.push_back(std::move(mac));
    };
    for (const auto& p : patterns) add_macro(p.rect, true, p.index_bound());
    for (const auto& r : macros) add_macro(r, false, 0.0);
    for (int id : mesh.leaves()) {
      if (im.leaf_to_macro.count(id)) continue;
      const CutInfo& ci = merger.classify_cached(id);
      if (ci.kind == CutInfo::Kind::kOutside) continue;
      if (ci.cut())
        throw MergeError("induced mesh: cut leaf not covered by any macro");
      const Cell& c = mesh.cell(id);
      InducedMacro mac;
      mac.rect = MacroRect{c.level, c.ix, c.iy, c.ix + 1, c.iy + 1};
      mac.cut = ci;
      mac.leaves = {id};
      im.leaf_to_macro[id] = static_cast<int>(im.macros.size());
      im.macros.push_back(std::move(mac));
    }
    if (params.validate)
      validate_induced_mesh(im, mesh, oracle, params.coverage_samples);
    return im;
  }
}

void validate_induced_mesh(const InducedMesh& im, const QuadtreeMesh& mesh,
                           CutOracle& oracle, int coverage_samples) {
  for (size_t i = 0; i < im.macros.size(); ++i) {
    const InducedMacro& m = im.macros[i];
    if (!m.cut.cut()) continue;
    if (!m.cut.proper())
      throw MergeError("validate: macro " + std::to_string(i) +
                       " improper: " + m.cut.why_improper);
    double d0 = im.delta0_effective;
    if (m.cut.delta + 1e-12 < d0)
      throw MergeError("validate: macro " + std::to_string(i) +
                       " small: delta=" + std::to_string(m.cut.delta));
    if (m.cut.singular && m.cut.delta_tilde + 1e-12 < d0)
      throw MergeError("validate: macro " + std::to_string(i) +
                       " small singular index " + std::to_string(m.cut.delta_tilde));
  }
  for (size_t i = 0; i < im.macros.size(); ++i) {
    const InducedMacro& m = im.macros[i];
    double area = 0.0;
    for (int id : m.leaves) {
      auto it = im.leaf_to_macro.find(id);
      if (it == im.leaf_to_macro.end() || it->second != static_cast<int>(i))
        throw MergeError("validate: leaf shared between macros");
      Rect b = mesh.bounds(id);
      area += b.width() * b.height();
    }
    Rect rb = m.rect.bounds(mesh);
    if (std::abs(area - rb.width() * rb.height()) >
        1e-9 * rb.width() * rb.height())
      throw MergeError("validate: macro " + std::to_string(i) +
                       " leaves do not tile its rectangle");
  }
  const DomainConfig& dom = oracle.domain();
  for (int cv = 0; cv < dom.num_curves(); ++cv) {
    const PiecewiseCurve& pc = dom.curve(cv);
    double span = pc.param_span();
    for (int k = 0; k < coverage_samples; ++k) {
      double t = span * (k + 0.5) / coverage_samples;
      Point p = pc.at(t);
      int leaf = mesh.find_leaf(p);
      if (leaf < 0) throw MergeError("validate: curve sample outside mesh");
      auto it = im.leaf_to_macro.find(leaf);
      if (it == im.leaf_to_macro.end())
        throw MergeError("validate: curve sample in unmapped leaf");
      if (!im.macros[it->second].cut.cut())
        throw MergeError("validate: curve sample in an uncut macro");
    }
  }
  struct SideInt {
    std::int64_t lo, hi;
    int macro;
  };
  std::map<std::int64_t, std::vector<SideInt>> vlines, hlines;
  const int maxl = QuadtreeMesh::kMaxLevel;
  for (size_t i = 0; i < im.macros.size(); ++i) {
    const MacroRect& r = im.macros[i].rect;
    int s = maxl - r.level;
    std::int64_t x0 = r.ix0 << s, x1 = r.ix1 << s;
    std::int64_t y0 = r.iy0 << s, y1 = r.iy1 << s;
    vlines[x0].push_back({y0, y1, (int)i});
    vlines[x1].push_back({y0, y1, (int)i});
    hlines[y0].push_back({x0, x1, (int)i});
    hlines[y1].push_back({x0, x1, (int)i});
  }
  auto check = [&](std::map<std::int64_t, std::vector<SideInt>>& lines) {
    for (auto& [key, v] : lines) {
      std::sort(v.begin(), v.end(),
                [](const SideInt& a, const SideInt& b) { return a.lo < b.lo; });
      for (size_t a = 0; a < v.size(); ++a)
        for (size_t b = a + 1; b < v.size() && v[b].lo < v[a].hi; ++b) {
          std::int64_t lo = std::max(v[a].lo, v[b].lo);
          std::int64_t hi = std::min(v[a].hi, v[b].hi);
          if (lo >= hi) continue;
          bool a_in_b = v[a].lo >= v[b].lo && v[a].hi <= v[b].hi;
          bool b_in_a = v[b].lo >= v[a].lo && v[b].hi <= v[a].hi;
          if (!a_in_b && !b_in_a)
            throw MergeError("validate: H4 violated between macros " +
                             std::to_string(v[a].macro) + " and " +
                             std::to_string(v[b].macro));
        }
    }
  };
  check(vlines);
  check(hlines);
}

}  // namespace ufem
