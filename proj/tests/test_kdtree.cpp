#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "nnchain/kdtree.hpp"
#include "nnchain/union_find.hpp"
#include "test_util.hpp"

using namespace nnchain;

TEST_SUITE_BEGIN("kdtree");

TEST_CASE("nearest matches brute force") {
  std::mt19937_64 gen(7);
  const PointSet ps = testutil::random_points(gen, 257, 3);
  const KdTree tree = KdTree::build(ps, 8);
  for (index_t q = 0; q < 50; ++q) {
    const auto got = tree.nearest(ps.row(q), [&](index_t l) { return l == q; });
    REQUIRE(got.has_value());
    IdDist want = IdDist::none();
    for (index_t j = 0; j < ps.n; ++j) {
      if (j == q) continue;
      const IdDist cand{euclid_dist(ps.row(q), ps.row(j), ps.d), j};
      if (cand.better_than(want)) want = cand;
    }
    CHECK(got->id == want.id);
    CHECK(got->dist == doctest::Approx(want.dist).epsilon(1e-14));
  }
}

TEST_CASE("nearest honors the exclusion predicate and empty result") {
  std::mt19937_64 gen(8);
  const PointSet ps = testutil::random_points(gen, 40, 2);
  const KdTree tree = KdTree::build(ps, 4);
  CHECK_FALSE(tree.nearest(ps.row(0), [](index_t) { return true; }).has_value());
  const auto got = tree.nearest(ps.row(0), [](index_t l) { return l % 2 == 0; });
  REQUIRE(got.has_value());
  CHECK(got->id % 2 == 1);
}

TEST_CASE("range_visit returns exactly the closed ball") {
  std::mt19937_64 gen(9);
  const PointSet ps = testutil::random_points(gen, 300, 2);
  const KdTree tree = KdTree::build(ps, 8);
  const double r = 2.5;
  for (index_t q = 0; q < 20; ++q) {
    std::set<index_t> got;
    tree.range_visit(ps.row(q), r, [&](index_t l, const double*) { got.insert(l); });
    std::set<index_t> want;
    for (index_t j = 0; j < ps.n; ++j)
      if (sq_dist(ps.row(q), ps.row(j), ps.d) <= r * r) want.insert(j);
    CHECK(got == want);
  }
}

TEST_CASE("all_nearest_neighbors matches brute force with smaller-index ties") {
  std::mt19937_64 gen(10);
  PointSet ps = testutil::random_points(gen, 301, 2);
  // Force a tie: three collinear points with equal gaps.
  ps.row(5)[0] = 0.0;
  ps.row(5)[1] = -50.0;
  ps.row(6)[0] = 1.0;
  ps.row(6)[1] = -50.0;
  ps.row(7)[0] = 2.0;
  ps.row(7)[1] = -50.0;
  const std::vector<IdDist> got = all_nearest_neighbors(ps, 8);
  REQUIRE(got.size() == ps.n);
  for (index_t i = 0; i < ps.n; ++i) {
    IdDist want = IdDist::none();
    for (index_t j = 0; j < ps.n; ++j) {
      if (j == i) continue;
      const IdDist cand{euclid_dist(ps.row(i), ps.row(j), ps.d), j};
      if (cand.better_than(want)) want = cand;
    }
    CHECK(got[i].id == want.id);
    CHECK(got[i].dist == doctest::Approx(want.dist).epsilon(1e-14));
  }
  CHECK(got[6].id == 5);  // equidistant from 5 and 7; smaller index wins
}

TEST_CASE("farthest_pair_distance matches brute force") {
  std::mt19937_64 gen(11);
  const PointSet ps = testutil::random_points(gen, 120, 3);
  std::vector<index_t> a_rows, b_rows;
  for (index_t i = 0; i < 60; ++i) a_rows.push_back(i);
  for (index_t i = 60; i < 120; ++i) b_rows.push_back(i);
  const KdTree ta = KdTree::build(ps.coords.data(), ps.d, a_rows, a_rows, 8);
  const KdTree tb = KdTree::build(ps.coords.data(), ps.d, b_rows, b_rows, 8);
  double want = 0;
  for (index_t i : a_rows)
    for (index_t j : b_rows) want = std::max(want, euclid_dist(ps.row(i), ps.row(j), ps.d));
  CHECK(farthest_pair_distance(ta, tb) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("deterministic build") {
  std::mt19937_64 gen(12);
  const PointSet ps = testutil::random_points(gen, 500, 3);
  const KdTree t1 = KdTree::build(ps, 16);
  const KdTree t2 = KdTree::build(ps, 16);
  REQUIRE(t1.node_count() == t2.node_count());
  REQUIRE(t1.item_count() == t2.item_count());
  for (index_t k = 0; k < t1.item_count(); ++k) CHECK(t1.item_label(k) == t2.item_label(k));
}

TEST_CASE("nearest_foreign_point matches brute force under cluster marks") {
  std::mt19937_64 gen(13);
  const PointSet ps = testutil::random_points(gen, 240, 2);
  UnionFind uf(ps.n);
  std::vector<index_t> cluster_of(ps.n);
  // Random clustering: group points into blocks of 3 by shuffled order.
  std::vector<index_t> order(ps.n);
  std::iota(order.begin(), order.end(), index_t{0});
  std::shuffle(order.begin(), order.end(), gen);
  for (std::size_t k = 0; k + 2 < ps.n; k += 3) {
    uf.unite(order[k], order[k + 1]);
    uf.unite(order[k], order[k + 2]);
  }
  std::vector<index_t> min_member(ps.n, kNone);
  for (index_t p = 0; p < ps.n; ++p) {
    const index_t r = uf.find(p);
    min_member[r] = std::min(min_member[r], p);
  }
  for (index_t p = 0; p < ps.n; ++p) cluster_of[p] = min_member[uf.find(p)];

  KdTree all = KdTree::build(ps, 8);
  all.refresh_marks(cluster_of);
  for (int trial = 0; trial < 25; ++trial) {
    const index_t own = cluster_of[std::uniform_int_distribution<index_t>(0, ps.n - 1)(gen)];
    std::vector<index_t> members;
    for (index_t p = 0; p < ps.n; ++p)
      if (cluster_of[p] == own) members.push_back(p);
    const KdTree mine = KdTree::build(ps.coords.data(), ps.d, members, members, 8);
    const auto got = nearest_foreign_point(all, mine, own, cluster_of);
    REQUIRE(got.has_value());
    IdDist want = IdDist::none();
    for (index_t p = 0; p < ps.n; ++p) {
      if (cluster_of[p] == own) continue;
      for (index_t m : members) {
        const IdDist cand{euclid_dist(ps.row(p), ps.row(m), ps.d), p};
        if (cand.better_than(want)) want = cand;
      }
    }
    CHECK(got->id == want.id);
    CHECK(got->dist == doctest::Approx(want.dist).epsilon(1e-14));
  }
}

TEST_SUITE_END();
