#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "nnchain/chain.hpp"
#include "nnchain/dataset.hpp"
#include "nnchain/io.hpp"
#include "nnchain/oracle.hpp"
#include "test_util.hpp"

using namespace nnchain;

namespace {

constexpr LinkageKind kAllKinds[] = {LinkageKind::kComplete, LinkageKind::kWard,
                                     LinkageKind::kAvg1, LinkageKind::kAvg2};

std::vector<double> sorted_heights(const Dendrogram& dg) {
  std::vector<double> h;
  for (const Merge& m : dg.merges) h.push_back(m.height);
  std::sort(h.begin(), h.end());
  return h;
}

double max_rel_dev(const std::vector<double>& got, const std::vector<double>& want) {
  double worst = 0;
  for (std::size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
  return worst;
}

}  // namespace

TEST_SUITE_BEGIN("chain");

TEST_CASE("first round candidates on a line") {
  const PointSet ps(3, 1, {0.0, 1.0, 3.0});
  const std::vector<IdDist> nn = first_round_all_nn(ps, LinkageKind::kWard);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0].id == 1);
  CHECK(nn[0].dist == 1.0);
  CHECK(nn[1].id == 0);
  CHECK(nn[1].dist == 1.0);
  CHECK(nn[2].id == 1);
  CHECK(nn[2].dist == 2.0);
  const std::vector<IdDist> sq = first_round_all_nn(ps, LinkageKind::kAvg2);
  CHECK(sq[2].dist == 4.0);  // squared space
  CHECK(sq[0].dist == 1.0);
}

TEST_CASE("grow_chains links terminals and priority-writes pred") {
  ChainState cs;
  cs.init(3);
  std::vector<AtomicIdDist> cand(3);
  cand[0].write_min(5.0, 1);
  cand[1].write_min(5.0, 0);
  cand[2].write_min(7.0, 0);
  const std::vector<index_t> terminals = {0, 1, 2};
  grow_chains(terminals, cand, cs);
  CHECK(cs.succ[0] == 1);
  CHECK(cs.succ[1] == 0);
  CHECK(cs.succ[2] == 0);
  // pred of 0 keeps the better incoming edge (5.0 from 1 beats 7.0 from 2).
  const IdDist p0 = cs.pred[0].load();
  CHECK(p0.id == 1);
  CHECK(p0.dist == 5.0);
}

TEST_CASE("reciprocal pair detection") {
  SUBCASE("two terminals report once") {
    ChainState cs;
    cs.init(2);
    cs.succ = {1, 0};
    cs.succ_dist = {5.0, 5.0};
    const std::vector<index_t> terminals = {0, 1};
    const std::vector<std::uint8_t> is_terminal = {1, 1};
    const auto pairs = detect_rnn_pairs(terminals, is_terminal, cs);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].i == 0);
    CHECK(pairs[0].j == 1);
    CHECK(pairs[0].d == 5.0);
  }
  SUBCASE("chain of three yields the tail pair") {
    ChainState cs;
    cs.init(3);
    cs.succ = {1, 2, 1};
    cs.succ_dist = {3.0, 2.0, 2.0};
    const std::vector<index_t> terminals = {0, 1, 2};
    const std::vector<std::uint8_t> is_terminal = {1, 1, 1};
    const auto pairs = detect_rnn_pairs(terminals, is_terminal, cs);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].i == 1);
    CHECK(pairs[0].j == 2);
  }
  SUBCASE("link kept from an earlier round counts") {
    ChainState cs;
    cs.init(3);
    cs.succ = {2, kNone, 0};  // 2 -> 0 grew in a previous round and is not terminal now
    cs.succ_dist = {4.0, 0.0, 4.0};
    const std::vector<index_t> terminals = {0};
    const std::vector<std::uint8_t> is_terminal = {1, 0, 0};
    const auto pairs = detect_rnn_pairs(terminals, is_terminal, cs);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].i == 0);
    CHECK(pairs[0].j == 2);
  }
}

TEST_CASE("trivial inputs") {
  RunOptions opts;
  const RunResult one = run(PointSet(1, 2, {0.5, 0.5}), opts);
  CHECK(one.dendrogram.n == 1);
  CHECK(one.dendrogram.merges.empty());

  const RunResult two = run(PointSet(2, 2, {0.0, 0.0, 3.0, 4.0}), opts);
  REQUIRE(two.dendrogram.merges.size() == 1);
  CHECK(two.dendrogram.merges[0].left == 0);
  CHECK(two.dendrogram.merges[0].right == 1);
  CHECK(two.dendrogram.merges[0].height == 5.0);
  CHECK(two.dendrogram.merges[0].size == 2);

  RunOptions sq;
  sq.kind = LinkageKind::kAvg2;
  const RunResult avg2 = run(PointSet(2, 1, {0.0, 3.0}), sq);
  CHECK(avg2.dendrogram.merges[0].height == 9.0);  // squared space
}

TEST_CASE("line fixture heights") {
  const PointSet ps(4, 1, {0.0, 1.0, 4.0, 6.0});
  RunOptions opts;
  opts.kind = LinkageKind::kComplete;
  CHECK(sorted_heights(run(ps, opts).dendrogram) == std::vector<double>{1.0, 2.0, 6.0});
  opts.kind = LinkageKind::kWard;
  const std::vector<double> ward = sorted_heights(run(ps, opts).dendrogram);
  REQUIRE(ward.size() == 3);
  CHECK(ward[0] == 1.0);
  CHECK(ward[1] == 2.0);
  CHECK(ward[2] == std::sqrt(40.5));
}

TEST_CASE("four-round instance") {
  // 0,1 and 4,5 pair up in round one; the middle points then chain in.
  const PointSet ps(6, 1, {0.0, 1.0, 3.0, 6.5, 10.0, 10.8});
  RunOptions opts;
  opts.kind = LinkageKind::kComplete;
  const RunResult res = run(ps, opts);
  CHECK(res.stats.rounds == 4);
  REQUIRE(res.stats.round_table.size() == 4);
  CHECK(res.stats.round_table[0].merges == 2);
  CHECK(res.stats.round_table[0].active == 6);
  CHECK(res.stats.round_table[0].terminals == 6);
  std::map<std::pair<index_t, index_t>, double> first_round;
  for (const Merge& m : res.dendrogram.merges)
    if (m.round == 1) first_round[{m.left, m.right}] = m.height;
  REQUIRE(first_round.size() == 2);
  CHECK(first_round.at({0, 1}) == 1.0);
  CHECK(first_round.at({4, 5}) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("duplicate points collapse at height zero") {
  std::vector<double> coords;
  for (int i = 0; i < 5; ++i) {
    coords.push_back(1.25);
    coords.push_back(-2.0);
  }
  const PointSet ps(5, 2, std::move(coords));
  for (LinkageKind kind : kAllKinds) {
    RunOptions opts;
    opts.kind = kind;
    const RunResult res = run(ps, opts);
    REQUIRE(res.dendrogram.merges.size() == 4);
    for (const Merge& m : res.dendrogram.merges) CHECK(m.height == 0.0);
  }
}

TEST_CASE("matches the reference implementation on random instances") {
  std::mt19937_64 gen(31);
  for (int inst = 0; inst < 3; ++inst) {
    const PointSet ps = testutil::random_points(gen, 64, 2);
    for (LinkageKind kind : kAllKinds) {
      const std::vector<double> want = cophenetic_distances(naive_hac(ps, kind));
      for (std::uint32_t s : {0u, 64u}) {
        RunOptions opts;
        opts.kind = kind;
        opts.cache_size = s;
        const std::vector<double> got = cophenetic_distances(run(ps, opts).dendrogram);
        CHECK(max_rel_dev(got, want) <= 1e-9);
      }
    }
  }
}

TEST_CASE("per-round neighbor audit finds no mismatches") {
  std::mt19937_64 gen(32);
  const PointSet ps = testutil::random_points(gen, 400, 2);
  for (LinkageKind kind : kAllKinds) {
    RunOptions opts;
    opts.kind = kind;
    opts.cache_size = kind == LinkageKind::kAvg1 ? 64 : 0;
    opts.audit_nn_phase = true;
    const RunResult res = run(ps, opts);
    CHECK(res.stats.nn_audit_mismatches == 0);
  }
}

TEST_CASE("thread count does not change the result") {
  std::mt19937_64 gen(33);
  const PointSet ps = testutil::random_points(gen, 300, 2);
  for (LinkageKind kind : kAllKinds) {
    RunOptions opts;
    opts.kind = kind;
    opts.cache_size = kind == LinkageKind::kAvg1 ? 64 : 0;
    opts.threads = 1;
    const auto base = linkage_matrix(run(ps, opts).dendrogram);
    opts.threads = 2;
    const auto other = linkage_matrix(run(ps, opts).dendrogram);
    REQUIRE(base.size() == other.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
      CHECK(base[k].a == other[k].a);
      CHECK(base[k].b == other[k].b);
      CHECK(base[k].size == other[k].size);
      CHECK(std::abs(base[k].height - other[k].height) <=
            1e-12 * std::max(1.0, std::abs(base[k].height)));
    }
  }
}

TEST_CASE("pair computations are deduplicated within an episode") {
  const PointSet ps = gen_gaussian_disc(600, 2, 9);
  for (LinkageKind kind : kAllKinds) {
    RunOptions opts;
    opts.kind = kind;
    opts.cache_size = 256;
    opts.threads = 4;
    opts.track_pair_computations = true;
    const RunResult res = run(ps, opts);
    std::map<std::tuple<std::uint32_t, int, index_t, index_t>, int> counts;
    for (const PairComputation& pc : res.stats.pair_log)
      ++counts[{pc.round, static_cast<int>(pc.phase), pc.a, pc.b}];
    for (const auto& [key, count] : counts) CHECK(count == 1);
    CHECK(res.dendrogram.merges.size() == ps.n - 1);
  }
}

TEST_CASE("work and evaluation counters are populated") {
  std::mt19937_64 gen(34);
  const PointSet ps = testutil::random_points(gen, 200, 2);
  RunOptions opts;
  opts.kind = LinkageKind::kWard;
  const RunResult res = run(ps, opts);
  CHECK(res.stats.rounds > 0);
  CHECK(res.stats.point_dist_evals > 0);
  CHECK(res.stats.cluster_dist_evals > 0);
  CHECK(res.stats.work_measure > 0.0);
  CHECK(res.stats.round_table.size() == res.stats.rounds);
}

TEST_SUITE_END();
