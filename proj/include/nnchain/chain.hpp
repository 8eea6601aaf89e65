#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nnchain/atomics.hpp"
#include "nnchain/cache.hpp"
#include "nnchain/dendrogram.hpp"
#include "nnchain/linkage.hpp"
#include "nnchain/points.hpp"

namespace nnchain {

struct RunOptions {
  LinkageKind kind = LinkageKind::kWard;
  std::uint32_t cache_size = 0;  // per-cluster distance table bound; 0 disables caching
  int threads = 0;               // OpenMP thread count; 0 keeps the ambient setting
  unsigned leaf_capacity = 16;   // kd-tree leaf size
  bool collect_round_table = true;
  // Log every pairwise cluster-distance computation made through the
  // candidate and cache-update protocols (the batched first-round
  // all-nearest-neighbors pass is not per-pair and is not logged).
  bool track_pair_computations = false;
  bool audit_nn_phase = false;           // re-check each round's neighbors by exhaustive scan
};

struct RoundRow {
  std::uint32_t round = 0;
  std::uint32_t active = 0;     // clusters alive at round start
  std::uint32_t terminals = 0;  // chain-terminal clusters searched this round
  std::uint32_t merges = 0;
};

enum class ComputePhase : std::uint8_t { kNearestNeighbor, kCacheUpdate };

struct PairComputation {
  std::uint32_t round = 0;
  ComputePhase phase = ComputePhase::kNearestNeighbor;
  index_t a = kNone;  // a < b
  index_t b = kNone;
};

struct RunStats {
  std::uint32_t rounds = 0;
  std::uint64_t point_dist_evals = 0;    // d-dimensional distance evaluations
  std::uint64_t cluster_dist_evals = 0;  // direct cluster-distance computations
  double work_measure = 0;               // sum over rounds of |active| * (|terminals| + log2 |active|)
  double t_init = 0, t_nn = 0, t_merge = 0, t_update = 0;  // seconds
  std::uint64_t nn_audit_mismatches = 0;
  std::vector<RoundRow> round_table;
  std::vector<PairComputation> pair_log;
};

struct RunResult {
  Dendrogram dendrogram;
  RunStats stats;
};

// Per-cluster chain links. succ is the owner-written outgoing edge (kNone
// marks a terminal); pred keeps the lexicographic minimum (distance, source)
// over all incoming edges, so concurrent chain growth commutes.
struct ChainState {
  std::vector<index_t> succ;
  std::vector<double> succ_dist;
  std::vector<AtomicIdDist> pred;

  void init(std::size_t n) {
    succ.assign(n, kNone);
    succ_dist.assign(n, 0.0);
    pred = std::vector<AtomicIdDist>(n);
  }
  bool terminal(index_t i) const { return succ[i] == kNone; }
};

struct RnnPair {
  index_t i = kNone;  // i < j
  index_t j = kNone;
  double d = 0;
};

// Extends every terminal's chain by its candidate edge: sets succ and
// priority-writes (distance, terminal) into the target's pred. Every entry in
// candidates[t] for t in terminals must be valid.
void grow_chains(std::span<const index_t> terminals, std::span<const AtomicIdDist> candidates, ChainState& chains);

// Reciprocal pairs among the freshly grown chains: terminal y pairs with
// j = succ(y) iff succ(j) == y. A pair of two terminals is reported by the
// smaller one only; a pair whose j kept its link from an earlier round is
// reported by y alone. Result is normalized (i < j) and sorted by i.
std::vector<RnnPair> detect_rnn_pairs(std::span<const index_t> terminals, std::span<const std::uint8_t> is_terminal,
                                      const ChainState& chains);

// Round-1 candidates: every cluster is a singleton, so linkage distances equal
// point distances (squared for kAvg2) and one all-nearest-neighbors pass
// yields every candidate at once.
std::vector<IdDist> first_round_all_nn(const PointSet& ps, LinkageKind kind, unsigned leaf_capacity = 16,
                                       std::atomic<std::uint64_t>* point_dist_evals = nullptr);

// Resolves one discovered candidate pair and priority-writes the distance
// into both candidate entries. The cache decides who computes: at most one
// concurrent caller per pair runs compute(); a caller losing the reservation
// skips (the winner writes both entries). Returns true iff compute() ran.
template <class Compute>
bool update_nearest_neighbor(index_t i, index_t j, std::span<AtomicIdDist> candidates, DistCache& cache,
                             Compute&& compute) {
  double d;
  bool computed = false;
  if (!cache.enabled()) {
    d = compute();
    computed = true;
  } else if (std::optional<double> v = cache.get(i, j)) {
    d = *v;
  } else {
    ReserveResult r = cache.reserve(i, j);
    switch (r.outcome) {
      case ReserveOutcome::kWon:
        d = compute();
        computed = true;
        cache.publish(i, j, d);
        break;
      case ReserveOutcome::kValue:
        d = r.value;
        break;
      case ReserveOutcome::kPending:
        return false;
      case ReserveOutcome::kFull:
      default:
        d = compute();
        computed = true;
        cache.insert(i, j, d);
        break;
    }
  }
  candidates[i].write_min(d, j);
  candidates[j].write_min(d, i);
  return computed;
}

// Full clustering run. Heights are linkage distances (squared Euclidean units
// for kAvg2). Throws std::invalid_argument for unusable inputs and
// std::logic_error if an internal invariant breaks.
RunResult run(const PointSet& ps, const RunOptions& opts);

}  // namespace nnchain
