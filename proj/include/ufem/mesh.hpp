#pragma once

// Cartesian quadtree mesh with hanging nodes. Cells are addressed by
// (level, ix, iy) integer coordinates so adjacency and containment tests are
// exact; the mesh enforces 1-irregularity (edge-adjacent leaves differ by at
// most one level) after every refinement.

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ufem/geometry.hpp"

namespace ufem {

struct Cell {
  int level = 0;
  std::int64_t ix = 0, iy = 0;  // position in level-grid units
  int parent = -1;
  int child0 = -1;  // children are child0..child0+3 (SW, SE, NW, NE)
  bool leaf = true;
};

struct CellKey {
  int level;
  std::int64_t ix, iy;
  bool operator==(const CellKey& o) const {
    return level == o.level && ix == o.ix && iy == o.iy;
  }
};
struct CellKeyHash {
  size_t operator()(const CellKey& k) const {
    std::uint64_t h = std::uint64_t(k.level) * 0x9e3779b97f4a7c15ull;
    h ^= std::uint64_t(k.ix) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= std::uint64_t(k.iy) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return size_t(h);
  }
};

struct Rect {
  Point lo, hi;
  Point center() const { return (lo + hi) * 0.5; }
  double width() const { return hi.x - lo.x; }
  double height() const { return hi.y - lo.y; }
  double diameter() const { return (hi - lo).norm(); }
};

class QuadtreeMesh {
 public:
  QuadtreeMesh() = default;
  // nx-by-ny root cells over [lo, hi].
  QuadtreeMesh(Point lo, Point hi, int nx, int ny);

  const Cell& cell(int id) const { return cells_[id]; }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  std::vector<int> leaves() const;
  int num_leaves() const;

  Rect bounds(int id) const;
  Rect bounds(const Cell& c) const;
  Point domain_lo() const { return lo_; }
  Point domain_hi() const { return hi_; }
  int root_nx() const { return nx_; }
  int root_ny() const { return ny_; }
  double root_hx() const { return hx_; }
  double root_hy() const { return hy_; }

  // Leaf containing the cell coordinates (level, ix, iy); -1 when the region
  // is covered by finer leaves only or out of range.
  int find_leaf(int level, std::int64_t ix, std::int64_t iy) const;
  // Deepest leaf containing the point (ties broken toward the lower cell).
  int find_leaf(const Point& p) const;
  // The unique leaf covering cell coordinates, which may be coarser; -1 when
  // out of range.
  int covering_leaf(int level, std::int64_t ix, std::int64_t iy) const;
  bool in_range(int level, std::int64_t ix, std::int64_t iy) const;

  // Quad-refine the given leaves, then restore 1-irregularity by closure
  // refinements. Returns the number of cells refined (including closure).
  int refine(const std::vector<int>& cell_ids);

  // Edge neighbors of a leaf: all leaves sharing a side of positive length.
  std::vector<int> edge_neighbors(int leaf) const;
  // Leaves sharing at least a corner point with the given leaf.
  std::vector<int> corner_neighbors(int leaf) const;

  // S(K)_j: layer sets by repeated corner-adjacency closure.
  std::set<int> layer(int leaf, int j) const;

  // omega(K): union of supports of conforming-node bilinear basis functions
  // that do not vanish on K.
  std::set<int> patch(int leaf) const;

  // A mesh vertex, in units of the finest representable level.
  struct NodeId {
    std::int64_t fx, fy;
    bool operator==(const NodeId& o) const { return fx == o.fx && fy == o.fy; }
    bool operator<(const NodeId& o) const {
      return fx != o.fx ? fx < o.fx : fy < o.fy;
    }
  };
  static constexpr int kMaxLevel = 40;

  NodeId corner_node(int leaf, int corner) const;  // corner in 0..3 (SW,SE,NW,NE)
  bool is_conforming_node(const NodeId& v) const;
  // Value of the conforming-node basis psi_P at mesh vertex v (resolving
  // hanging-node averages recursively).
  double psi_value(const NodeId& P, const NodeId& v) const;
  Point node_point(const NodeId& v) const;

  // Checks that every pair of edge-adjacent leaves differs by at most one
  // level. Used by tests.
  bool is_one_irregular() const;

  double total_leaf_area() const;

  // One leaf per line: "path level ix iy x0 y0 x1 y1".
  std::string dump() const;

  std::uint64_t mutation_stamp() const { return stamp_; }

 private:
  void split(int id);
  void closure();

  Point lo_, hi_;
  int nx_ = 0, ny_ = 0;
  double hx_ = 0.0, hy_ = 0.0;
  std::vector<Cell> cells_;
  std::unordered_map<CellKey, int, CellKeyHash> index_;
  std::uint64_t stamp_ = 0;
};

}  // namespace ufem
