#include "ufem/mesh.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <sstream>

namespace ufem {

QuadtreeMesh::QuadtreeMesh(Point lo, Point hi, int nx, int ny)
    : lo_(lo), hi_(hi), nx_(nx), ny_(ny) {
  hx_ = (hi.x - lo.x) / nx;
  hy_ = (hi.y - lo.y) / ny;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      Cell c;
      c.level = 0;
      c.ix = i;
      c.iy = j;
      index_[{0, c.ix, c.iy}] = static_cast<int>(cells_.size());
      cells_.push_back(c);
    }
}

std::vector<int> QuadtreeMesh::leaves() const {
  std::vector<int> out;
  for (int i = 0; i < num_cells(); ++i)
    if (cells_[i].leaf) out.push_back(i);
  return out;
}

int QuadtreeMesh::num_leaves() const {
  int n = 0;
  for (const auto& c : cells_) n += c.leaf ? 1 : 0;
  return n;
}

Rect QuadtreeMesh::bounds(const Cell& c) const {
  double sx = hx_ / double(std::int64_t(1) << c.level);
  double sy = hy_ / double(std::int64_t(1) << c.level);
  Point lo{lo_.x + c.ix * sx, lo_.y + c.iy * sy};
  return Rect{lo, Point{lo.x + sx, lo.y + sy}};
}

Rect QuadtreeMesh::bounds(int id) const { return bounds(cells_[id]); }

bool QuadtreeMesh::in_range(int level, std::int64_t ix, std::int64_t iy) const {
  std::int64_t w = std::int64_t(nx_) << level, h = std::int64_t(ny_) << level;
  return ix >= 0 && iy >= 0 && ix < w && iy < h;
}

int QuadtreeMesh::find_leaf(int level, std::int64_t ix, std::int64_t iy) const {
  auto it = index_.find({level, ix, iy});
  if (it == index_.end()) return -1;
  return cells_[it->second].leaf ? it->second : -1;
}

int QuadtreeMesh::covering_leaf(int level, std::int64_t ix, std::int64_t iy) const {
  if (!in_range(level, ix, iy)) return -1;
  int l = level;
  std::int64_t x = ix, y = iy;
  while (l >= 0) {
    auto it = index_.find({l, x, y});
    if (it != index_.end()) return cells_[it->second].leaf ? it->second : -1;
    x >>= 1;
    y >>= 1;
    --l;
  }
  return -1;
}

int QuadtreeMesh::find_leaf(const Point& p) const {
  double fx = (p.x - lo_.x) / hx_, fy = (p.y - lo_.y) / hy_;
  int i = std::clamp(int(std::floor(fx)), 0, nx_ - 1);
  int j = std::clamp(int(std::floor(fy)), 0, ny_ - 1);
  int id = index_.at({0, i, j});
  while (!cells_[id].leaf) {
    Rect b = bounds(id);
    Point c = b.center();
    int q = (p.x >= c.x ? 1 : 0) + (p.y >= c.y ? 2 : 0);
    id = cells_[id].child0 + q;
  }
  return id;
}

void QuadtreeMesh::split(int id) {
  // Copy out before push_back: growing cells_ invalidates references.
  const Cell base = cells_[id];
  assert(base.leaf);
  if (base.level >= kMaxLevel)
    throw GeometryError("quadtree: refinement level budget exceeded");
  cells_[id].leaf = false;
  cells_[id].child0 = static_cast<int>(cells_.size());
  for (int q = 0; q < 4; ++q) {
    Cell ch;
    ch.level = base.level + 1;
    ch.ix = 2 * base.ix + (q & 1);
    ch.iy = 2 * base.iy + (q >> 1);
    ch.parent = id;
    index_[{ch.level, ch.ix, ch.iy}] = static_cast<int>(cells_.size());
    cells_.push_back(ch);
  }
  ++stamp_;
}

int QuadtreeMesh::refine(const std::vector<int>& cell_ids) {
  int count = 0;
  for (int id : cell_ids) {
    if (!cells_[id].leaf) continue;  // already refined via an earlier id
    split(id);
    ++count;
  }
  closure();
  return count;
}

void QuadtreeMesh::closure() {
  // Restore 1-irregularity: any leaf with an edge neighbor two or more levels
  // finer is refined; iterate to a fixpoint.
  bool changed = true;
  while (changed) {
    changed = false;
    int n = num_cells();
    for (int id = 0; id < n; ++id) {
      if (!cells_[id].leaf) continue;
      const Cell c = cells_[id];
      // A neighbor more than one level finer exists iff the neighbor cell
      // coordinates at level+2 are interior (non-leaf or subdivided).
      const std::int64_t x2 = c.ix << 2, y2 = c.iy << 2;
      const int l2 = c.level + 2;
      auto too_fine = [&](std::int64_t ix, std::int64_t iy) {
        // A neighbor at least two levels finer exists iff the probe cell at
        // level+2 was ever created (ancestors always exist once a cell does).
        if (!in_range(l2, ix, iy)) return false;
        return index_.find({l2, ix, iy}) != index_.end();
      };
      bool need = false;
      for (std::int64_t k = 0; k < 4 && !need; ++k) {
        if (too_fine(x2 - 1, y2 + k)) need = true;      // west
        if (too_fine(x2 + 4, y2 + k)) need = true;      // east
        if (too_fine(x2 + k, y2 - 1)) need = true;      // south
        if (too_fine(x2 + k, y2 + 4)) need = true;      // north
      }
      if (need) {
        split(id);
        changed = true;
      }
    }
  }
}

std::vector<int> QuadtreeMesh::edge_neighbors(int leaf) const {
  const Cell& c = cells_[leaf];
  std::vector<int> out;
  auto add_side = [&](int dx, int dy) {
    // Neighbor strip one cell away; may consist of one coarser leaf or up to
    // two finer leaves (1-irregular).
    std::int64_t nx = c.ix + dx, ny = c.iy + dy;
    if (!in_range(c.level, nx, ny)) return;
    int l = covering_leaf(c.level, nx, ny);
    if (l >= 0) {
      out.push_back(l);
      return;
    }
    // finer: the two children adjacent to the shared side
    for (int k = 0; k < 2; ++k) {
      std::int64_t fx, fy;
      if (dx != 0) {
        fx = (dx > 0) ? 2 * nx : 2 * nx + 1;
        fy = 2 * c.iy + k;
      } else {
        fy = (dy > 0) ? 2 * ny : 2 * ny + 1;
        fx = 2 * c.ix + k;
      }
      int f = covering_leaf(c.level + 1, fx, fy);
      if (f >= 0) out.push_back(f);
    }
  };
  add_side(-1, 0);
  add_side(1, 0);
  add_side(0, -1);
  add_side(0, 1);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int> QuadtreeMesh::corner_neighbors(int leaf) const {
  const Cell& c = cells_[leaf];
  std::vector<int> out = edge_neighbors(leaf);
  // Diagonal neighbors: the four corner positions.
  for (int dx : {-1, 1})
    for (int dy : {-1, 1}) {
      std::int64_t nx = c.ix + dx, ny = c.iy + dy;
      if (!in_range(c.level, nx, ny)) continue;
      int l = covering_leaf(c.level, nx, ny);
      if (l >= 0) {
        out.push_back(l);
        continue;
      }
      std::int64_t fx = (dx > 0) ? 2 * nx : 2 * nx + 1;
      std::int64_t fy = (dy > 0) ? 2 * ny : 2 * ny + 1;
      int f = covering_leaf(c.level + 1, fx, fy);
      if (f >= 0) out.push_back(f);
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::set<int> QuadtreeMesh::layer(int leaf, int j) const {
  std::set<int> cur{leaf};
  for (int k = 0; k < j; ++k) {
    std::set<int> next = cur;
    for (int id : cur)
      for (int nb : corner_neighbors(id)) next.insert(nb);
    cur.swap(next);
  }
  return cur;
}

QuadtreeMesh::NodeId QuadtreeMesh::corner_node(int leaf, int corner) const {
  const Cell& c = cells_[leaf];
  int shift = kMaxLevel - c.level;
  std::int64_t fx = (c.ix + (corner & 1)) << shift;
  std::int64_t fy = (c.iy + (corner >> 1)) << shift;
  return {fx, fy};
}

Point QuadtreeMesh::node_point(const NodeId& v) const {
  double s = double(std::int64_t(1) << kMaxLevel);
  return Point{lo_.x + hx_ * (double(v.fx) / s), lo_.y + hy_ * (double(v.fy) / s)};
}

// Leaves whose closure contains the mesh vertex v.
static void incident_leaves(const QuadtreeMesh& m, const QuadtreeMesh::NodeId& v,
                            std::vector<int>& out) {
  out.clear();
  // Probe the four quadrant positions around v at the finest level, walking
  // up to the covering leaf.
  for (int dx : {-1, 0})
    for (int dy : {-1, 0}) {
      std::int64_t fx = v.fx + dx, fy = v.fy + dy;
      int l = m.covering_leaf(QuadtreeMesh::kMaxLevel, fx, fy);
      if (l >= 0) out.push_back(l);
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
}

bool QuadtreeMesh::is_conforming_node(const NodeId& v) const {
  std::vector<int> inc;
  incident_leaves(*this, v, inc);
  if (inc.empty()) return false;
  // Hanging iff some incident leaf does not have v among its corners.
  for (int id : inc) {
    bool corner = false;
    for (int k = 0; k < 4; ++k)
      if (corner_node(id, k) == v) { corner = true; break; }
    if (!corner) return false;
  }
  return true;
}

double QuadtreeMesh::psi_value(const NodeId& P, const NodeId& v) const {
  if (v == P) return 1.0;
  if (is_conforming_node(v)) return 0.0;
  // Hanging vertex: v is the midpoint of the side of the coarser incident
  // leaf; its value is the average of that side's endpoints.
  std::vector<int> inc;
  incident_leaves(*this, v, inc);
  int coarse = -1;
  for (int id : inc) {
    bool corner = false;
    for (int k = 0; k < 4; ++k)
      if (corner_node(id, k) == v) { corner = true; break; }
    if (!corner) { coarse = id; break; }
  }
  if (coarse < 0) return 0.0;
  const Cell& c = cells_[coarse];
  int shift = kMaxLevel - c.level;
  std::int64_t x0 = c.ix << shift, x1 = (c.ix + 1) << shift;
  std::int64_t y0 = c.iy << shift, y1 = (c.iy + 1) << shift;
  NodeId a, b;
  if (v.fx == x0 || v.fx == x1) {  // on a vertical side
    a = {v.fx, y0};
    b = {v.fx, y1};
  } else {
    a = {x0, v.fy};
    b = {x1, v.fy};
  }
  return 0.5 * (psi_value(P, a) + psi_value(P, b));
}

std::set<int> QuadtreeMesh::patch(int leaf) const {
  // Conforming nodes P with psi_P nonzero on `leaf`: the conforming closure
  // of the leaf's corners (resolving hanging corners to their masters).
  std::vector<NodeId> stack;
  std::set<NodeId> candidates;
  for (int k = 0; k < 4; ++k) stack.push_back(corner_node(leaf, k));
  std::set<NodeId> seen;
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    if (seen.count(v)) continue;
    seen.insert(v);
    if (is_conforming_node(v)) {
      candidates.insert(v);
      continue;
    }
    // push master edge endpoints
    std::vector<int> inc;
    incident_leaves(*this, v, inc);
    for (int id : inc) {
      bool corner = false;
      for (int k = 0; k < 4; ++k)
        if (corner_node(id, k) == v) { corner = true; break; }
      if (corner) continue;
      const Cell& c = cells_[id];
      int shift = kMaxLevel - c.level;
      std::int64_t x0 = c.ix << shift, x1 = (c.ix + 1) << shift;
      std::int64_t y0 = c.iy << shift, y1 = (c.iy + 1) << shift;
      if (v.fx == x0 || v.fx == x1) {
        stack.push_back({v.fx, y0});
        stack.push_back({v.fx, y1});
      } else {
        stack.push_back({x0, v.fy});
        stack.push_back({x1, v.fy});
      }
      break;
    }
  }
  // Support of psi_P: leaves within a few rings of P having a corner with a
  // nonzero value.
  std::set<int> result;
  for (const NodeId& P : candidates) {
    std::vector<int> inc;
    incident_leaves(*this, P, inc);
    std::set<int> region;
    for (int id : inc)
      for (int nb : layer(id, 2)) region.insert(nb);
    for (int id : region) {
      for (int k = 0; k < 4; ++k) {
        if (std::abs(psi_value(P, corner_node(id, k))) > 0.0) {
          result.insert(id);
          break;
        }
      }
    }
  }
  return result;
}

bool QuadtreeMesh::is_one_irregular() const {
  for (int id = 0; id < num_cells(); ++id) {
    if (!cells_[id].leaf) continue;
    for (int nb : edge_neighbors(id))
      if (std::abs(cells_[nb].level - cells_[id].level) > 1) return false;
  }
  return true;
}

double QuadtreeMesh::total_leaf_area() const {
  double a = 0.0;
  for (int id = 0; id < num_cells(); ++id) {
    if (!cells_[id].leaf) continue;
    Rect b = bounds(id);
    a += b.width() * b.height();
  }
  return a;
}

std::string QuadtreeMesh::dump() const {
  std::ostringstream os;
  os.precision(17);
  std::vector<int> ls = leaves();
  std::sort(ls.begin(), ls.end(), [&](int a, int b) {
    const Cell &ca = cells_[a], &cb = cells_[b];
    if (ca.level != cb.level) return ca.level < cb.level;
    if (ca.iy != cb.iy) return ca.iy < cb.iy;
    return ca.ix < cb.ix;
  });
  for (int id : ls) {
    const Cell& c = cells_[id];
    Rect b = bounds(id);
    os << "L" << c.level << ":" << c.ix << "," << c.iy << " level=" << c.level
       << " " << b.lo.x << " " << b.lo.y << " " << b.hi.x << " " << b.hi.y
       << "\n";
  }
  return os.str();
}

}  // namespace ufem
