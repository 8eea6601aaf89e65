#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "nnchain/oracle.hpp"
#include "test_util.hpp"

using namespace nnchain;

namespace {

std::vector<double> heights_of(const Dendrogram& dg) {
  std::vector<double> h;
  for (const Merge& m : dg.merges) h.push_back(m.height);
  return h;
}

}  // namespace

TEST_SUITE_BEGIN("oracle");

TEST_CASE("line fixture all kinds") {
  const PointSet ps(4, 1, {0.0, 1.0, 4.0, 6.0});
  CHECK(heights_of(naive_hac(ps, LinkageKind::kComplete)) == std::vector<double>{1.0, 2.0, 6.0});
  const std::vector<double> ward = heights_of(naive_hac(ps, LinkageKind::kWard));
  REQUIRE(ward.size() == 3);
  CHECK(ward[0] == 1.0);
  CHECK(ward[1] == 2.0);
  CHECK(ward[2] == doctest::Approx(std::sqrt(40.5)).epsilon(1e-15));
}

TEST_CASE("avg2 heights live in squared space") {
  const PointSet ps(3, 1, {0.0, 1.0, 3.0});
  const std::vector<double> h = heights_of(naive_hac(ps, LinkageKind::kAvg2));
  REQUIRE(h.size() == 2);
  CHECK(h[0] == 1.0);
  CHECK(h[1] == 6.5);  // mean of 9 and 4
}

TEST_CASE("merges are recorded by minimum member id") {
  const PointSet ps(4, 1, {0.0, 1.0, 4.0, 6.0});
  const Dendrogram dg = naive_hac(ps, LinkageKind::kComplete);
  for (const Merge& m : dg.merges) CHECK(m.left < m.right);
  CHECK(dg.merges[0].left == 0);
  CHECK(dg.merges[0].right == 1);
}

TEST_CASE("heights are monotone") {
  std::mt19937_64 gen(41);
  for (LinkageKind kind : {LinkageKind::kComplete, LinkageKind::kWard, LinkageKind::kAvg1,
                           LinkageKind::kAvg2}) {
    const PointSet ps = testutil::random_points(gen, 48, 3);
    const std::vector<double> h = heights_of(naive_hac(ps, kind));
    CHECK(std::is_sorted(h.begin(), h.end()));
  }
}

TEST_CASE("cophenetic distances of a small tree") {
  Dendrogram dg;
  dg.n = 3;
  Merge m1;
  m1.left = 0;
  m1.right = 1;
  m1.height = 2.0;
  m1.left_size = 1;
  m1.right_size = 1;
  m1.size = 2;
  m1.round = 1;
  Merge m2;
  m2.left = 0;
  m2.right = 2;
  m2.height = 5.0;
  m2.left_size = 2;
  m2.right_size = 1;
  m2.size = 3;
  m2.round = 2;
  dg.merges = {m1, m2};
  const std::vector<double> c = cophenetic_distances(dg);
  REQUIRE(c.size() == 3);
  CHECK(c[condensed_index(3, 0, 1)] == 2.0);
  CHECK(c[condensed_index(3, 0, 2)] == 5.0);
  CHECK(c[condensed_index(3, 1, 2)] == 5.0);
}

TEST_CASE("cophenetic requires a complete dendrogram") {
  Dendrogram dg;
  dg.n = 3;
  Merge m1;
  m1.left = 0;
  m1.right = 1;
  m1.height = 2.0;
  m1.left_size = 1;
  m1.right_size = 1;
  m1.size = 2;
  m1.round = 1;
  dg.merges = {m1};
  CHECK_THROWS(cophenetic_distances(dg));
}

TEST_CASE("single point yields no merges") {
  const PointSet ps(1, 2, {0.0, 0.0});
  const Dendrogram dg = naive_hac(ps, LinkageKind::kWard);
  CHECK(dg.n == 1);
  CHECK(dg.merges.empty());
}

TEST_SUITE_END();
