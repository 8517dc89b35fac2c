#include "doctest.h"
#include "ufem/mesh.hpp"

#include <random>

using namespace ufem;

TEST_CASE("refine one cell of a 2x2 mesh") {
  QuadtreeMesh m({0, 0}, {1, 1}, 2, 2);
  CHECK(m.num_leaves() == 4);
  m.refine({0});
  CHECK(m.num_leaves() == 7);  // 3 untouched + 4 children
  CHECK(m.is_one_irregular());
}

TEST_CASE("refine empty set is the identity") {
  QuadtreeMesh m({0, 0}, {1, 1}, 2, 2);
  std::string before = m.dump();
  m.refine({});
  CHECK(m.dump() == before);
}

TEST_CASE("double refinement forces closure: 16 leaves") {
  // Explicit quadtree enumeration oracle: refine the SW root of a 2x2 mesh,
  // then its NE child (the corner adjacent to the SE and NW roots). Closure
  // must split those two roots; the NE root only touches the level-2 block at
  // a corner and stays level 0.
  //   SW root: 3 level-1 + 4 level-2 = 7 leaves
  //   SE, NW roots: 4 level-1 leaves each = 8
  //   NE root: 1 leaf
  //   total 16.
  QuadtreeMesh m({0, 0}, {1, 1}, 2, 2);
  m.refine({0});
  int target = m.find_leaf(1, 1, 1);  // NE child of SW root
  REQUIRE(target >= 0);
  m.refine({target});
  CHECK(m.is_one_irregular());
  CHECK(m.num_leaves() == 16);
  int n_l2 = 0;
  for (int id : m.leaves()) n_l2 += (m.cell(id).level == 2) ? 1 : 0;
  CHECK(n_l2 == 4);
}

TEST_CASE("spec closure example: refine same region twice on a single root") {
  // Single-root mesh: refine root, then one child twice; closure must split
  // the child's siblings, giving 4 + 3 + 9... enumerate: root -> 4 children;
  // child c -> 4 grandchildren; one grandchild g refined -> forces the
  // grandchild's sibling-neighbors... Spec: "refine the same cell twice ->
  // closure forces its 3 siblings to level 1; leaf count 16" on the uniform
  // 2x2 start: all four roots are level 0 = "level 1" in spec counting.
  QuadtreeMesh m({0, 0}, {1, 1}, 1, 1);
  m.refine({0});
  int sw = -1;
  for (int id : m.leaves()) {
    const Cell& c = m.cell(id);
    if (c.level == 1 && c.ix == 0 && c.iy == 0) sw = id;
  }
  m.refine({sw});
  CHECK(m.is_one_irregular());
  int sw2 = -1;
  for (int id : m.leaves()) {
    const Cell& c = m.cell(id);
    if (c.level == 2 && c.ix == 0 && c.iy == 0) sw2 = id;
  }
  m.refine({sw2});
  CHECK(m.is_one_irregular());
  // all leaves adjacent to the level-3 block must be level >= 2
  for (int id : m.leaves())
    for (int nb : m.edge_neighbors(id))
      CHECK(std::abs(m.cell(id).level - m.cell(nb).level) <= 1);
}

TEST_CASE("area conservation under random refinement") {
  QuadtreeMesh m({0, 0}, {2, 1}, 4, 2);
  std::mt19937 rng(3);
  for (int round = 0; round < 5; ++round) {
    auto ls = m.leaves();
    std::vector<int> pick;
    for (int id : ls)
      if (rng() % 3 == 0) pick.push_back(id);
    m.refine(pick);
    CHECK(m.is_one_irregular());
  }
  CHECK(m.total_leaf_area() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("layers on a uniform mesh") {
  QuadtreeMesh m({0, 0}, {1, 1}, 8, 8);
  int center = m.find_leaf(0, 4, 4);
  REQUIRE(center >= 0);
  CHECK(m.layer(center, 0).size() == 1);
  CHECK(m.layer(center, 1).size() == 9);    // Moore neighborhood
  CHECK(m.layer(center, 2).size() == 25);   // brute-force closure
  int corner = m.find_leaf(0, 0, 0);
  CHECK(m.layer(corner, 1).size() == 4);
}

TEST_CASE("layer monotonicity on random meshes") {
  QuadtreeMesh m({0, 0}, {1, 1}, 4, 4);
  std::mt19937 rng(11);
  for (int round = 0; round < 3; ++round) {
    auto ls = m.leaves();
    std::vector<int> pick;
    for (int id : ls)
      if (rng() % 4 == 0) pick.push_back(id);
    m.refine(pick);
  }
  for (int id : m.leaves()) {
    auto s1 = m.layer(id, 1);
    auto s2 = m.layer(id, 2);
    for (int k : s1) CHECK(s2.count(k) == 1);
    CHECK(s1.count(id) == 1);
  }
}

TEST_CASE("patch omega(K) on uniform mesh") {
  QuadtreeMesh m({0, 0}, {1, 1}, 8, 8);
  int center = m.find_leaf(0, 4, 4);
  auto w = m.patch(center);
  auto s1 = m.layer(center, 1);
  CHECK(w == s1);  // 9 cells
  int corner = m.find_leaf(0, 0, 0);
  CHECK(m.patch(corner).size() == 4);
}

TEST_CASE("patch includes the coarse neighbor across a hanging edge") {
  QuadtreeMesh m({0, 0}, {1, 1}, 2, 1);
  m.refine({0});  // left root refined; right root keeps a hanging node
  // the NE child of the left root touches the coarse right root
  int fine = m.find_leaf(1, 1, 1);
  REQUIRE(fine >= 0);
  int coarse = m.find_leaf(0, 1, 0);
  REQUIRE(coarse >= 0);
  auto w = m.patch(fine);
  CHECK(w.count(coarse) == 1);
  // psi_P supports: enumerate directly for the conforming node at the center
  // of the left root's right edge (a hanging node for the right root): it is
  // NOT conforming, so it carries no basis function.
  auto v = m.corner_node(fine, 1);  // (0.5, 1.0) corner? pick explicit node
  (void)v;
}

TEST_CASE("conforming and hanging nodes") {
  QuadtreeMesh m({0, 0}, {1, 1}, 2, 1);
  m.refine({0});
  // Node at (0.5, 0.5): midpoint of the right root's left edge -> hanging.
  std::int64_t f = std::int64_t(1) << QuadtreeMesh::kMaxLevel;
  QuadtreeMesh::NodeId hang{f, f / 2};
  CHECK_FALSE(m.is_conforming_node(hang));
  // Node at (0.5, 0): shared corner -> conforming.
  QuadtreeMesh::NodeId conf{f, 0};
  CHECK(m.is_conforming_node(conf));
  // psi value at the hanging node for P = (0.5, 0): average of the edge
  // endpoints (0.5,0) and (0.5,1): 0.5.
  CHECK(m.psi_value(conf, hang) == doctest::Approx(0.5));
}

TEST_CASE("find_leaf and covering_leaf") {
  QuadtreeMesh m({0, 0}, {1, 1}, 2, 2);
  m.refine({0});
  CHECK(m.find_leaf(0, 0, 0) == -1);        // refined away
  CHECK(m.covering_leaf(1, 0, 0) >= 0);
  CHECK(m.covering_leaf(3, 1, 1) >= 0);     // deep coords covered by a leaf
  int l = m.find_leaf(Point{0.9, 0.9});
  CHECK(m.cell(l).level == 0);
}

TEST_CASE("mesh dump is deterministic and line-oriented") {
  QuadtreeMesh a({0, 0}, {1, 1}, 2, 2);
  QuadtreeMesh b({0, 0}, {1, 1}, 2, 2);
  a.refine({1});
  b.refine({1});
  CHECK(a.dump() == b.dump());
  CHECK(a.dump().find("level=1") != std::string::npos);
}
