#include "nnchain/chain.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <stdexcept>

#include "nnchain/kdtree.hpp"
#include "nnchain/union_find.hpp"

namespace nnchain {

namespace {

// Runs f(k) for k in [0, m) in parallel. Exceptions must not cross an OpenMP
// region boundary, so the first one is captured and rethrown after the loop.
template <class F>
void parallel_for_guarded(std::int64_t m, int chunk, F&& f) {
  std::atomic<bool> failed{false};
  std::exception_ptr eptr = nullptr;
#pragma omp parallel for schedule(dynamic, chunk)
  for (std::int64_t k = 0; k < m; ++k) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      f(k);
    } catch (...) {
#pragma omp critical(nnchain_chain_eptr)
      {
        if (!failed.exchange(true)) eptr = std::current_exception();
      }
    }
  }
  if (eptr) std::rethrow_exception(eptr);
}

}  // namespace

void grow_chains(std::span<const index_t> terminals, std::span<const AtomicIdDist> candidates, ChainState& chains) {
  parallel_for_guarded(static_cast<std::int64_t>(terminals.size()), 2048, [&](std::int64_t k) {
    index_t t = terminals[k];
    IdDist e = candidates[t].load();
    if (!e.valid()) throw std::logic_error("internal invariant violation: terminal without a candidate");
    chains.succ[t] = e.id;
    chains.succ_dist[t] = e.dist;
    chains.pred[e.id].write_min(e.dist, t);
  });
}

std::vector<RnnPair> detect_rnn_pairs(std::span<const index_t> terminals, std::span<const std::uint8_t> is_terminal,
                                      const ChainState& chains) {
  std::vector<RnnPair> out;
  for (index_t y : terminals) {
    index_t j = chains.succ[y];
    if (j == kNone || chains.succ[j] != y) continue;
    // a pair of two freshly grown terminals is reported by the smaller one; a
    // reciprocal link left over from an earlier round (j not terminal) only by y
    if (y < j || !is_terminal[j]) {
      RnnPair p;
      p.i = std::min(y, j);
      p.j = std::max(y, j);
      p.d = chains.succ_dist[y];
      out.push_back(p);
    }
  }
  std::sort(out.begin(), out.end(), [](const RnnPair& a, const RnnPair& b) { return a.i < b.i; });
  return out;
}

std::vector<IdDist> first_round_all_nn(const PointSet& ps, LinkageKind kind, unsigned leaf_capacity,
                                       std::atomic<std::uint64_t>* point_dist_evals) {
  std::vector<IdDist> nn = all_nearest_neighbors(ps, leaf_capacity, point_dist_evals);
  if (kind == LinkageKind::kAvg2) {
    for (IdDist& e : nn) e.dist = e.dist * e.dist;
  }
  return nn;
}

namespace {

// Per-thread cluster point counter. Epoch tags make per-query clearing O(1).
struct CountSketch {
  std::vector<std::uint64_t> slot;  // (epoch << 32) | count
  std::uint32_t epoch = 0;

  void ensure(std::size_t n) {
    if (slot.size() < n) slot.assign(n, 0);
  }
  void begin() {
    if (++epoch == 0) {
      std::fill(slot.begin(), slot.end(), std::uint64_t{0});
      epoch = 1;
    }
  }
  // Adds k to cluster c's count, returning the count before the add.
  std::uint32_t add(index_t c, std::uint32_t k) {
    std::uint64_t cur = slot[c];
    std::uint32_t prev = (static_cast<std::uint32_t>(cur >> 32) == epoch) ? static_cast<std::uint32_t>(cur) : 0;
    slot[c] = (std::uint64_t(epoch) << 32) | (prev + k);
    return prev;
  }
};

class ChainEngine {
 public:
  ChainEngine(const PointSet& ps, const RunOptions& opts)
      : ps_(ps),
        opts_(opts),
        kind_(opts.kind),
        n_(static_cast<index_t>(ps.n)),
        comp_(opts.kind == LinkageKind::kComplete),
        needs_stats_(opts.kind != LinkageKind::kComplete),
        needs_members_(opts.kind == LinkageKind::kComplete || opts.kind == LinkageKind::kAvg1),
        uf_(ps.n),
        cache_(ps.n, opts.cache_size) {}

  RunResult run() {
    double t0 = omp_get_wtime();
    init();
    st_.t_init = omp_get_wtime() - t0;

    while (active_count_ > 1) do_round();
    if (dendro_.merges.size() != std::size_t(n_) - 1)
      throw std::logic_error("internal invariant violation: merge count");

    st_.rounds = round_;
    st_.point_dist_evals = point_evals_.load(std::memory_order_relaxed);
    st_.cluster_dist_evals = cluster_evals_.load(std::memory_order_relaxed);
    for (auto& log : logs_) {
      st_.pair_log.insert(st_.pair_log.end(), log.begin(), log.end());
      log.clear();
    }
    RunResult res;
    res.dendrogram = std::move(dendro_);
    res.stats = std::move(st_);
    return res;
  }

 private:
  // ---- direct distances on the current (pre-merge) cluster state ----

  ClusterView view(index_t a) const {
    return ClusterView{std::span<const index_t>(members_[a]), needs_stats_ ? &stats_[a] : nullptr};
  }

  double compute_delta_raw(index_t a, index_t b, std::uint64_t* evals, std::atomic<std::uint64_t>* tree_evals) {
    switch (kind_) {
      case LinkageKind::kComplete:
        return farthest_pair_distance(*cluster_trees_[a], *cluster_trees_[b], tree_evals);
      case LinkageKind::kWard:
      case LinkageKind::kAvg2:
        return cluster_distance(kind_, stats_[a], stats_[b], evals);
      case LinkageKind::kAvg1:
      default:
        return cluster_distance(kind_, view(a), view(b), ps_, evals);
    }
  }

  double compute_delta(index_t a, index_t b, ComputePhase phase) {
    cluster_evals_.fetch_add(1, std::memory_order_relaxed);
    if (opts_.track_pair_computations)
      logs_[omp_get_thread_num()].push_back(PairComputation{round_, phase, std::min(a, b), std::max(a, b)});
    std::uint64_t local = 0;
    double d = compute_delta_raw(a, b, &local, &point_evals_);
    if (local) point_evals_.fetch_add(local, std::memory_order_relaxed);
    return d;
  }

  // Distance for the search-bound pair, where both sides need the value in
  // hand: a reservation loser waits for the winner instead of skipping.
  // Every path ends with the value priority-written into both entries.
  double resolve_pair_distance(index_t i, index_t c, ComputePhase phase) {
    double d;
    if (!cache_.enabled()) {
      d = compute_delta(i, c, phase);
    } else if (std::optional<double> v = cache_.get(i, c)) {
      d = *v;
    } else {
      ReserveResult r = cache_.reserve(i, c);
      switch (r.outcome) {
        case ReserveOutcome::kWon:
          d = compute_delta(i, c, phase);
          cache_.publish(i, c, d);
          break;
        case ReserveOutcome::kValue:
          d = r.value;
          break;
        case ReserveOutcome::kPending:
          d = cache_.wait_for(i, c);
          break;
        case ReserveOutcome::kFull:
        default:
          d = compute_delta(i, c, phase);
          cache_.insert(i, c, d);
          break;
      }
    }
    cand_[i].write_min(d, c);
    cand_[c].write_min(d, i);
    return d;
  }

  // ---- lifecycle ----

  void init() {
    sizes_.assign(n_, 1);
    alive_.assign(n_, 1);
    pair_of_.assign(n_, kNone);
    chains_.init(n_);
    cand_ = std::vector<AtomicIdDist>(n_);
    dendro_.n = n_;
    dendro_.merges.reserve(n_ - 1);
    active_count_ = n_;

    if (needs_stats_) {
      stats_.resize(n_);
      parallel_for_guarded(n_, 4096, [&](std::int64_t i) {
        stats_[i] = singleton_stats(ps_.row(static_cast<index_t>(i)), ps_.d);
      });
    }
    if (needs_members_) {
      members_.resize(n_);
      parallel_for_guarded(n_, 4096, [&](std::int64_t i) { members_[i] = {static_cast<index_t>(i)}; });
    }
    if (comp_) {
      point_tree_ = KdTree::build(ps_, opts_.leaf_capacity);
      cluster_of_point_.resize(n_);
      cluster_id_of_root_.resize(n_);
      for (index_t i = 0; i < n_; ++i) cluster_of_point_[i] = cluster_id_of_root_[i] = i;
      point_tree_.refresh_marks(cluster_of_point_);
      cluster_trees_.resize(n_);
      parallel_for_guarded(n_, 1024, [&](std::int64_t i) {
        index_t id = static_cast<index_t>(i);
        cluster_trees_[i] = std::make_unique<KdTree>(KdTree::build(ps_.coords.data(), ps_.d,
                                                                   std::span<const index_t>(&id, 1),
                                                                   std::span<const index_t>(&id, 1),
                                                                   opts_.leaf_capacity));
      });
      sketches_.resize(omp_get_max_threads());
    }
    if (opts_.track_pair_computations) logs_.resize(omp_get_max_threads());
  }

  void do_round() {
    ++round_;

    terminals_.clear();
    is_terminal_.assign(n_, 0);
    for (index_t i = 0; i < n_; ++i) {
      if (alive_[i] && chains_.succ[i] == kNone) {
        terminals_.push_back(i);
        is_terminal_[i] = 1;
      }
    }
    st_.work_measure += double(active_count_) * (double(terminals_.size()) + std::log2(double(active_count_)));
    if (opts_.collect_round_table) {
      RoundRow row;
      row.round = round_;
      row.active = active_count_;
      row.terminals = static_cast<std::uint32_t>(terminals_.size());
      st_.round_table.push_back(row);
    }

    double t0 = omp_get_wtime();
    if (round_ > 1) {
      refresh_round_structures();
      double t1 = omp_get_wtime();
      st_.t_update += t1 - t0;
      t0 = t1;
      nn_search_phase();
    } else {
      first_round_phase();
    }
    if (opts_.audit_nn_phase) audit_nn_phase();

    grow_chains(terminals_, cand_, chains_);
    std::vector<RnnPair> pairs = detect_rnn_pairs(terminals_, is_terminal_, chains_);
    if (pairs.empty()) throw std::logic_error("internal invariant violation: round produced no reciprocal pair");
    double t1 = omp_get_wtime();
    st_.t_nn += t1 - t0;
    t0 = t1;

    record_merges(pairs);
    t1 = omp_get_wtime();
    st_.t_merge += t1 - t0;
    t0 = t1;

    cache_.begin_round_update(round_, round_merges_, pair_of_, sizes_);
    if (cache_.enabled()) {
      DistCache::DirectDist direct = [this](index_t a, index_t b) {
        return compute_delta(a, b, ComputePhase::kCacheUpdate);
      };
      parallel_for_guarded(static_cast<std::int64_t>(round_merges_.size()), 1, [&](std::int64_t pi) {
        cache_.update_for_pair(static_cast<std::size_t>(pi), kind_, direct);
      });
    }
    cache_.commit_round();
    t1 = omp_get_wtime();
    st_.t_update += t1 - t0;
    t0 = t1;

    commit_merges();
    if (opts_.collect_round_table)
      st_.round_table.back().merges = static_cast<std::uint32_t>(round_merges_.size());
    st_.t_merge += omp_get_wtime() - t0;
  }

  // ---- round phases ----

  void first_round_phase() {
    std::uint64_t before = point_evals_.load(std::memory_order_relaxed);
    std::vector<IdDist> nn = first_round_all_nn(ps_, kind_, opts_.leaf_capacity, &point_evals_);
    // each point-pair evaluation of the pass is a singleton cluster distance
    cluster_evals_.fetch_add(point_evals_.load(std::memory_order_relaxed) - before, std::memory_order_relaxed);
    parallel_for_guarded(n_, 8192, [&](std::int64_t i) {
      cand_[i].reset();
      cand_[i].write_min(nn[i].dist, nn[i].id);
    });
    if (cache_.enabled()) {
      parallel_for_guarded(n_, 1024, [&](std::int64_t i) {
        cache_.insert(static_cast<index_t>(i), nn[i].id, nn[i].dist);
      });
    }
  }

  void refresh_round_structures() {
    n_min_ = 0;
    for (index_t i = 0; i < n_; ++i) {
      if (!alive_[i]) continue;
      if (n_min_ == 0 || sizes_[i] < n_min_) n_min_ = sizes_[i];
    }
    parallel_for_guarded(static_cast<std::int64_t>(terminals_.size()), 8192,
                         [&](std::int64_t k) { cand_[terminals_[k]].reset(); });

    if (needs_stats_) {
      centroid_buf_.clear();
      centroid_labels_.clear();
      for (index_t i = 0; i < n_; ++i) {
        if (!alive_[i]) continue;
        centroid_buf_.insert(centroid_buf_.end(), stats_[i].centroid.begin(), stats_[i].centroid.end());
        centroid_labels_.push_back(i);
      }
      centroid_rows_.resize(centroid_labels_.size());
      for (std::size_t k = 0; k < centroid_rows_.size(); ++k) centroid_rows_[k] = static_cast<index_t>(k);
      centroid_tree_ =
          KdTree::build(centroid_buf_.data(), ps_.d, centroid_rows_, centroid_labels_, opts_.leaf_capacity);
    }
    if (comp_) {
      parallel_for_guarded(n_, 8192, [&](std::int64_t p) {
        cluster_of_point_[p] = cluster_id_of_root_[uf_.find(static_cast<index_t>(p))];
      });
      point_tree_.refresh_marks(cluster_of_point_);
    }
  }

  void nn_search_phase() {
    parallel_for_guarded(static_cast<std::int64_t>(terminals_.size()), 1,
                         [&](std::int64_t k) { process_terminal(terminals_[k]); });
  }

  void process_terminal(index_t i) {
    std::uint64_t local_evals = 0;
    double beta;
    IdDist pr = chains_.pred[i].load();
    if (pr.valid()) {
      // the stored incoming edge is still a current inter-cluster distance
      beta = pr.dist;
      cand_[i].write_min(pr.dist, pr.id);
      cand_[pr.id].write_min(pr.dist, i);
    } else {
      index_t c;
      if (comp_) {
        std::optional<IdDist> nf =
            nearest_foreign_point(point_tree_, *cluster_trees_[i], i, cluster_of_point_, &local_evals);
        if (!nf) throw std::logic_error("internal invariant violation: no foreign point for an active cluster");
        c = cluster_of_point_[nf->id];
      } else {
        std::optional<IdDist> nb = centroid_tree_.nearest(
            stats_[i].centroid.data(), [i](index_t l) { return l == i; }, &local_evals);
        if (!nb) throw std::logic_error("internal invariant violation: no foreign centroid for an active cluster");
        c = nb->id;
      }
      beta = resolve_pair_distance(i, c, ComputePhase::kNearestNeighbor);
    }

    double radius = search_radius(kind_, beta, sizes_[i], n_min_);
    if (comp_) {
      CountSketch& sk = sketches_[omp_get_thread_num()];
      sk.ensure(n_);
      sk.begin();
      BallRef ball{ps_.row(i), radius};
      comp_count_walk(0, i, ball, radius * radius, sk, local_evals);
    } else {
      const double* q = stats_[i].centroid.data();
      centroid_tree_.range_visit(
          q, radius,
          [&](index_t c, const double*) {
            if (c == i) return;
            update_nearest_neighbor(i, c, std::span<AtomicIdDist>(cand_), cache_,
                                    [&] { return compute_delta(i, c, ComputePhase::kNearestNeighbor); });
          },
          &local_evals);
    }
    if (local_evals) point_evals_.fetch_add(local_evals, std::memory_order_relaxed);
  }

  // Counting walk for complete linkage: Δ_comp(i, c) ≤ β implies every point
  // of c lies within β of each member of i, so a ball around one member (the
  // id point) captures candidate clusters whole. Single-cluster marked
  // subtrees overlapping the ball are counted wholesale as an upper bound;
  // mixed leaves are checked point by point, so a cluster with a point
  // provably outside never fills its count and is never computed.
  void comp_count_walk(index_t ni, index_t own, const BallRef& ball, double r2, CountSketch& sk,
                       std::uint64_t& local_evals) {
    if (!ball_overlaps_box(ball, point_tree_.box_lo(ni), point_tree_.box_hi(ni), ps_.d)) return;
    index_t mark = point_tree_.mark(ni);
    if (mark == own) return;
    const KdTree::Node& nd = point_tree_.node(ni);
    if (mark != kNone) {
      emit_count(own, mark, nd.count(), sk);
      return;
    }
    if (nd.is_leaf()) {
      for (index_t k = nd.begin; k < nd.end; ++k) {
        index_t c = cluster_of_point_[point_tree_.item_label(k)];
        if (c == own) continue;
        ++local_evals;
        if (sq_dist(ball.center, point_tree_.item_coords(k), ps_.d) <= r2) emit_count(own, c, 1, sk);
      }
      return;
    }
    comp_count_walk(nd.left, own, ball, r2, sk, local_evals);
    comp_count_walk(nd.right, own, ball, r2, sk, local_evals);
  }

  void emit_count(index_t own, index_t c, std::uint32_t k, CountSketch& sk) {
    std::uint32_t prev = sk.add(c, k);
    std::uint32_t size = sizes_[c];
    if (prev < size && prev + k >= size) {
      update_nearest_neighbor(own, c, std::span<AtomicIdDist>(cand_), cache_,
                              [&] { return compute_delta(own, c, ComputePhase::kNearestNeighbor); });
    }
  }

  void audit_nn_phase() {
    std::uint64_t mismatches = 0;
    for (index_t i : terminals_) {
      IdDist best = IdDist::none();
      for (index_t c = 0; c < n_; ++c) {
        if (c == i || !alive_[c]) continue;
        IdDist cand{compute_delta_raw(i, c, nullptr, nullptr), c};
        if (cand.better_than(best)) best = cand;
      }
      IdDist got = cand_[i].load();
      if (!got.valid() || got.id != best.id || std::abs(got.dist - best.dist) > 1e-9 * std::max(1.0, best.dist))
        ++mismatches;
    }
    st_.nn_audit_mismatches += mismatches;
  }

  void record_merges(const std::vector<RnnPair>& pairs) {
    round_merges_.clear();
    round_merges_.reserve(pairs.size());
    for (const RnnPair& p : pairs) {
      if (pair_of_[p.i] != kNone || pair_of_[p.j] != kNone)
        throw std::logic_error("internal invariant violation: overlapping merge pairs");
      Merge m;
      m.left = p.i;
      m.right = p.j;
      m.height = p.d;
      m.left_size = sizes_[p.i];
      m.right_size = sizes_[p.j];
      m.size = m.left_size + m.right_size;
      m.round = round_;
      pair_of_[p.i] = pair_of_[p.j] = static_cast<index_t>(round_merges_.size());
      round_merges_.push_back(m);
    }
    std::size_t np = round_merges_.size();
    if (needs_stats_) pending_stats_.resize(np);
    if (needs_members_) pending_members_.resize(np);
    parallel_for_guarded(static_cast<std::int64_t>(np), 8, [&](std::int64_t pi) {
      const Merge& m = round_merges_[pi];
      if (needs_stats_) pending_stats_[pi] = merge_stats(stats_[m.left], stats_[m.right]);
      if (needs_members_) {
        std::vector<index_t> u(members_[m.left].size() + members_[m.right].size());
        std::merge(members_[m.left].begin(), members_[m.left].end(), members_[m.right].begin(),
                   members_[m.right].end(), u.begin());
        pending_members_[pi] = std::move(u);
      }
    });
  }

  void commit_merges() {
    parallel_for_guarded(static_cast<std::int64_t>(round_merges_.size()), 8, [&](std::int64_t pi) {
      const Merge& m = round_merges_[pi];
      index_t l = m.left, r = m.right;
      if (needs_stats_) {
        stats_[l] = std::move(pending_stats_[pi]);
        stats_[r] = ClusterStats{};
      }
      if (needs_members_) {
        members_[l] = std::move(pending_members_[pi]);
        std::vector<index_t>().swap(members_[r]);
      }
      sizes_[l] = m.size;
      chains_.succ[l] = kNone;
      chains_.succ_dist[l] = 0;
      chains_.pred[l].reset();
      chains_.succ[r] = kNone;
      chains_.succ_dist[r] = 0;
      chains_.pred[r].reset();
      cand_[l].reset();
      cand_[r].reset();
      if (comp_) {
        uf_.unite(l, r);
        cluster_id_of_root_[uf_.find(l)] = l;
        cluster_trees_[l] = std::make_unique<KdTree>(
            KdTree::build(ps_.coords.data(), ps_.d, members_[l], members_[l], opts_.leaf_capacity));
        cluster_trees_[r].reset();
      }
      alive_[r] = 0;
    });

    // links into any cluster merged this round are stale: re-terminalize
    parallel_for_guarded(n_, 8192, [&](std::int64_t x) {
      if (!alive_[x]) return;
      index_t s = chains_.succ[x];
      if (s != kNone && pair_of_[s] != kNone) {
        chains_.succ[x] = kNone;
        chains_.succ_dist[x] = 0;
      }
      IdDist p = chains_.pred[x].load();
      if (p.valid() && pair_of_[p.id] != kNone) chains_.pred[x].reset();
    });

    dendro_.merges.insert(dendro_.merges.end(), round_merges_.begin(), round_merges_.end());
    for (const Merge& m : round_merges_) pair_of_[m.left] = pair_of_[m.right] = kNone;
    active_count_ -= static_cast<std::uint32_t>(round_merges_.size());
  }

  // ---- state ----

  const PointSet& ps_;
  RunOptions opts_;
  LinkageKind kind_;
  index_t n_;
  bool comp_;
  bool needs_stats_;
  bool needs_members_;

  std::vector<ClusterStats> stats_;
  std::vector<std::vector<index_t>> members_;
  std::vector<std::uint32_t> sizes_;
  std::vector<std::uint8_t> alive_;
  std::vector<index_t> pair_of_;
  ChainState chains_;
  std::vector<AtomicIdDist> cand_;
  std::vector<index_t> terminals_;
  std::vector<std::uint8_t> is_terminal_;
  UnionFind uf_;
  DistCache cache_;

  KdTree point_tree_;
  std::vector<std::unique_ptr<KdTree>> cluster_trees_;
  std::vector<index_t> cluster_of_point_;
  std::vector<index_t> cluster_id_of_root_;
  std::vector<CountSketch> sketches_;

  KdTree centroid_tree_;
  std::vector<double> centroid_buf_;
  std::vector<index_t> centroid_rows_;
  std::vector<index_t> centroid_labels_;

  Dendrogram dendro_;
  std::vector<Merge> round_merges_;
  std::vector<ClusterStats> pending_stats_;
  std::vector<std::vector<index_t>> pending_members_;

  std::uint32_t round_ = 0;
  std::uint32_t active_count_ = 0;
  std::uint32_t n_min_ = 1;

  RunStats st_;
  std::atomic<std::uint64_t> point_evals_{0};
  std::atomic<std::uint64_t> cluster_evals_{0};
  std::vector<std::vector<PairComputation>> logs_;
};

// Restores the ambient OpenMP thread count on scope exit.
struct ThreadCountGuard {
  int saved = omp_get_max_threads();
  bool active = false;
  ~ThreadCountGuard() {
    if (active) omp_set_num_threads(saved);
  }
};

}  // namespace

RunResult run(const PointSet& ps, const RunOptions& opts) {
  if (ps.n == 0) throw std::invalid_argument("empty point set");
  ThreadCountGuard guard;
  if (opts.threads > 0) {
    guard.active = true;
    omp_set_num_threads(opts.threads);
  }
  RunResult res;
  if (ps.n == 1) {
    res.dendrogram.n = 1;
    return res;
  }
  ChainEngine engine(ps, opts);
  return engine.run();
}

}  // namespace nnchain
