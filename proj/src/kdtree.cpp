#include "nnchain/kdtree.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace nnchain {

namespace {

constexpr index_t kTaskCutoff = 8192;  // spawn tasks only for spans above this

// Number of tree nodes for a span of `count` items: the split point is always
// count/2, so the shape depends only on the count.
index_t subtree_nodes(index_t count, unsigned leaf_capacity) {
  if (count <= leaf_capacity) return 1;
  index_t half = count / 2;
  return 1 + subtree_nodes(half, leaf_capacity) + subtree_nodes(count - half, leaf_capacity);
}

// Runs f() inside an OpenMP task group, reusing the current team when already
// inside a parallel region.
template <class F>
void with_task_root(F&& f) {
  if (omp_in_parallel()) {
    f();
  } else {
#pragma omp parallel
#pragma omp single nowait
    f();
  }
}

}  // namespace

void KdTree::build_rec(index_t nodeid, index_t begin, index_t end, const double* base,
                       std::span<const index_t> rows, std::span<const index_t> labels, std::vector<index_t>& ord,
                       unsigned leaf_capacity) {
  Node& nd = nodes_[nodeid];
  nd.begin = begin;
  nd.end = end;
  nd.left = nd.right = kNone;

  double* lo = lo_.data() + std::size_t(nodeid) * d_;
  double* hi = hi_.data() + std::size_t(nodeid) * d_;
  {
    const double* p0 = base + std::size_t(rows[ord[begin]]) * d_;
    for (std::size_t k = 0; k < d_; ++k) lo[k] = hi[k] = p0[k];
    for (index_t i = begin + 1; i < end; ++i) {
      const double* p = base + std::size_t(rows[ord[i]]) * d_;
      for (std::size_t k = 0; k < d_; ++k) {
        if (p[k] < lo[k]) lo[k] = p[k];
        if (p[k] > hi[k]) hi[k] = p[k];
      }
    }
  }

  index_t count = end - begin;
  if (count <= leaf_capacity) return;

  std::size_t dim = 0;
  double widest = hi[0] - lo[0];
  for (std::size_t k = 1; k < d_; ++k) {
    double w = hi[k] - lo[k];
    if (w > widest) { widest = w; dim = k; }
  }

  index_t mid = begin + count / 2;
  auto key_coord = [&](index_t item) { return base[std::size_t(rows[item]) * d_ + dim]; };
  std::nth_element(ord.begin() + begin, ord.begin() + mid, ord.begin() + end, [&](index_t a, index_t b) {
    double ca = key_coord(a), cb = key_coord(b);
    return ca < cb || (ca == cb && labels[a] < labels[b]);
  });

  index_t left_id = nodeid + 1;
  index_t right_id = nodeid + 1 + subtree_nodes(count / 2, leaf_capacity);
  nd.left = left_id;
  nd.right = right_id;

  if (count > kTaskCutoff) {
#pragma omp task default(shared)
    build_rec(left_id, begin, mid, base, rows, labels, ord, leaf_capacity);
    build_rec(right_id, mid, end, base, rows, labels, ord, leaf_capacity);
#pragma omp taskwait
  } else {
    build_rec(left_id, begin, mid, base, rows, labels, ord, leaf_capacity);
    build_rec(right_id, mid, end, base, rows, labels, ord, leaf_capacity);
  }
}

KdTree KdTree::build(const double* base, std::size_t d, std::span<const index_t> rows,
                     std::span<const index_t> labels, unsigned leaf_capacity) {
  if (rows.size() != labels.size()) throw std::invalid_argument("rows/labels size mismatch");
  if (rows.empty()) throw std::invalid_argument("cannot build an empty tree");
  if (d == 0) throw std::invalid_argument("dimension must be positive");
  if (leaf_capacity == 0) leaf_capacity = 1;

  KdTree t;
  t.d_ = d;
  index_t m = static_cast<index_t>(rows.size());
  index_t total = subtree_nodes(m, leaf_capacity);
  t.nodes_.resize(total);
  t.lo_.resize(std::size_t(total) * d);
  t.hi_.resize(std::size_t(total) * d);

  std::vector<index_t> ord(m);
  std::iota(ord.begin(), ord.end(), index_t{0});

  with_task_root([&] { t.build_rec(0, 0, m, base, rows, labels, ord, leaf_capacity); });

  t.pts_.resize(std::size_t(m) * d);
  t.labels_.resize(m);
#pragma omp parallel for schedule(static) if (m > kTaskCutoff)
  for (index_t k = 0; k < m; ++k) {
    t.labels_[k] = labels[ord[k]];
    std::memcpy(t.pts_.data() + std::size_t(k) * d, base + std::size_t(rows[ord[k]]) * d, d * sizeof(double));
  }
  return t;
}

KdTree KdTree::build(const PointSet& ps, unsigned leaf_capacity) {
  std::vector<index_t> ids(ps.n);
  std::iota(ids.begin(), ids.end(), index_t{0});
  return build(ps.coords.data(), ps.d, ids, ids, leaf_capacity);
}

namespace {

index_t marks_rec(const KdTree& t, std::vector<index_t>& marks, index_t ni,
                  std::span<const index_t> cluster_of_label) {
  const KdTree::Node& nd = t.node(ni);
  index_t m;
  if (nd.is_leaf()) {
    m = cluster_of_label[t.item_label(nd.begin)];
    for (index_t k = nd.begin + 1; k < nd.end && m != kNone; ++k)
      if (cluster_of_label[t.item_label(k)] != m) m = kNone;
  } else {
    index_t ml, mr;
    if (nd.count() > kTaskCutoff) {
#pragma omp task default(shared)
      ml = marks_rec(t, marks, nd.left, cluster_of_label);
      mr = marks_rec(t, marks, nd.right, cluster_of_label);
#pragma omp taskwait
    } else {
      ml = marks_rec(t, marks, nd.left, cluster_of_label);
      mr = marks_rec(t, marks, nd.right, cluster_of_label);
    }
    m = (ml == mr) ? ml : kNone;
  }
  marks[ni] = m;
  return m;
}

}  // namespace

void KdTree::refresh_marks(std::span<const index_t> cluster_of_label) {
  marks_.assign(nodes_.size(), kNone);
  with_task_root([&] { marks_rec(*this, marks_, 0, cluster_of_label); });
}

void mark_uniform_clusters(KdTree& tree, const UnionFind& uf) {
  std::vector<index_t> cluster_of(uf.size());
  index_t n = static_cast<index_t>(uf.size());
#pragma omp parallel for schedule(static) if (n > kTaskCutoff)
  for (index_t p = 0; p < n; ++p) cluster_of[p] = uf.find(p);
  tree.refresh_marks(cluster_of);
}

// ---------------------------------------------------------------------------
// All nearest neighbors (dual-tree).
//
// bound[q] is an upper bound on the largest current best-distance of any item
// in node q; bounds only shrink, and every stored value dominates all later
// true values, so pruning with a stale bound is safe.
namespace {

struct AllNnCtx {
  const KdTree& t;
  std::vector<AtomicIdDist>& best;            // per label, squared distances
  std::vector<std::atomic<double>>& bound;    // per node, squared distances
  std::atomic<std::uint64_t>* evals;

  void shrink_bound(index_t ni, double value) {
    double cur = bound[ni].load(std::memory_order_relaxed);
    while (value < cur) {
      if (bound[ni].compare_exchange_weak(cur, value, std::memory_order_acq_rel)) return;
    }
  }

  void refresh_leaf_bound(index_t ni) {
    const KdTree::Node& nd = t.node(ni);
    double mx = 0;
    for (index_t k = nd.begin; k < nd.end; ++k) {
      double b = best[t.item_label(k)].load().dist;
      if (b > mx) mx = b;
    }
    shrink_bound(ni, mx);
  }

  void refresh_inner_bound(index_t ni) {
    const KdTree::Node& nd = t.node(ni);
    double bl = bound[nd.left].load(std::memory_order_acquire);
    double br = bound[nd.right].load(std::memory_order_acquire);
    shrink_bound(ni, bl > br ? bl : br);
  }

  void leaf_leaf(index_t qi, index_t ri) {
    const KdTree::Node& q = t.node(qi);
    const KdTree::Node& r = t.node(ri);
    std::uint64_t local = 0;
    for (index_t a = q.begin; a < q.end; ++a) {
      index_t la = t.item_label(a);
      const double* pa = t.item_coords(a);
      for (index_t b = r.begin; b < r.end; ++b) {
        index_t lb = t.item_label(b);
        if (la == lb) continue;
        ++local;
        best[la].write_min(sq_dist(pa, t.item_coords(b), t.dim()), lb);
      }
    }
    if (evals) evals->fetch_add(local, std::memory_order_relaxed);
    refresh_leaf_bound(qi);
  }

  void traverse(index_t qi, index_t ri) {
    if (min_sq_dist_box_box(t.box_lo(qi), t.box_hi(qi), t.box_lo(ri), t.box_hi(ri), t.dim()) >
        bound[qi].load(std::memory_order_acquire))
      return;
    const KdTree::Node& q = t.node(qi);
    const KdTree::Node& r = t.node(ri);
    if (q.is_leaf() && r.is_leaf()) {
      leaf_leaf(qi, ri);
      return;
    }
    if (r.is_leaf() || (!q.is_leaf() && q.count() >= r.count())) {
      // split q; recurse children against r, closer-first is immaterial here
      if (q.count() > kTaskCutoff) {
#pragma omp task default(shared)
        traverse(q.left, ri);
        traverse(q.right, ri);
#pragma omp taskwait
      } else {
        traverse(q.left, ri);
        traverse(q.right, ri);
      }
      refresh_inner_bound(qi);
    } else {
      // split r; visit the closer half first to tighten bounds early
      double dl = min_sq_dist_box_box(t.box_lo(qi), t.box_hi(qi), t.box_lo(r.left), t.box_hi(r.left), t.dim());
      double dr = min_sq_dist_box_box(t.box_lo(qi), t.box_hi(qi), t.box_lo(r.right), t.box_hi(r.right), t.dim());
      index_t first = r.left, second = r.right;
      if (dr < dl) { first = r.right; second = r.left; }
      traverse(qi, first);
      traverse(qi, second);
    }
  }
};

}  // namespace

std::vector<IdDist> all_nearest_neighbors(const PointSet& ps, unsigned leaf_capacity,
                                          std::atomic<std::uint64_t>* dist_evals) {
  if (ps.n < 2) throw std::invalid_argument("all_nearest_neighbors needs at least two points");
  KdTree t = KdTree::build(ps, leaf_capacity);

  std::vector<AtomicIdDist> best(ps.n);
  std::vector<std::atomic<double>> bound(t.node_count());
  for (auto& b : bound) b.store(std::numeric_limits<double>::infinity(), std::memory_order_relaxed);

  AllNnCtx ctx{t, best, bound, dist_evals};
  with_task_root([&] { ctx.traverse(0, 0); });

  std::vector<IdDist> out(ps.n);
  index_t n = static_cast<index_t>(ps.n);
#pragma omp parallel for schedule(static) if (n > kTaskCutoff)
  for (index_t i = 0; i < n; ++i) {
    IdDist b = best[i].load();
    out[i] = IdDist{std::sqrt(b.dist), b.id};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Farthest pair between two trees (dual-tree with a shared running maximum).
namespace {

struct FarCtx {
  const KdTree& a;
  const KdTree& b;
  AtomicMaxDouble best;  // squared
  std::atomic<std::uint64_t> evals{0};

  void leaf_leaf(const KdTree::Node& qa, const KdTree::Node& qb) {
    double mx = -1.0;
    std::uint64_t local = 0;
    for (index_t i = qa.begin; i < qa.end; ++i) {
      const double* pa = a.item_coords(i);
      for (index_t j = qb.begin; j < qb.end; ++j) {
        ++local;
        double sq = sq_dist(pa, b.item_coords(j), a.dim());
        if (sq > mx) mx = sq;
      }
    }
    evals.fetch_add(local, std::memory_order_relaxed);
    best.write_max(mx);
  }

  void traverse(index_t ai, index_t bi) {
    if (max_sq_dist_box_box(a.box_lo(ai), a.box_hi(ai), b.box_lo(bi), b.box_hi(bi), a.dim()) <= best.load())
      return;
    const KdTree::Node& na = a.node(ai);
    const KdTree::Node& nb = b.node(bi);
    if (na.is_leaf() && nb.is_leaf()) {
      leaf_leaf(na, nb);
      return;
    }
    if (nb.is_leaf() || (!na.is_leaf() && na.count() >= nb.count())) {
      double ul = max_sq_dist_box_box(a.box_lo(na.left), a.box_hi(na.left), b.box_lo(bi), b.box_hi(bi), a.dim());
      double ur = max_sq_dist_box_box(a.box_lo(na.right), a.box_hi(na.right), b.box_lo(bi), b.box_hi(bi), a.dim());
      index_t first = na.left, second = na.right;
      if (ur > ul) { first = na.right; second = na.left; }
      if (na.count() > kTaskCutoff) {
#pragma omp task default(shared)
        traverse(first, bi);
        traverse(second, bi);
#pragma omp taskwait
      } else {
        traverse(first, bi);
        traverse(second, bi);
      }
    } else {
      double ul = max_sq_dist_box_box(a.box_lo(ai), a.box_hi(ai), b.box_lo(nb.left), b.box_hi(nb.left), a.dim());
      double ur = max_sq_dist_box_box(a.box_lo(ai), a.box_hi(ai), b.box_lo(nb.right), b.box_hi(nb.right), a.dim());
      index_t first = nb.left, second = nb.right;
      if (ur > ul) { first = nb.right; second = nb.left; }
      traverse(ai, first);
      traverse(ai, second);
    }
  }
};

}  // namespace

double farthest_pair_distance(const KdTree& a, const KdTree& b, std::atomic<std::uint64_t>* dist_evals) {
  if (a.item_count() == 0 || b.item_count() == 0) throw std::invalid_argument("farthest pair of empty tree");
  if (a.dim() != b.dim()) throw std::invalid_argument("dimension mismatch");
  FarCtx ctx{a, b, {}, {}};
  with_task_root([&] { ctx.traverse(0, 0); });
  if (dist_evals) dist_evals->fetch_add(ctx.evals.load(), std::memory_order_relaxed);
  return std::sqrt(ctx.best.load());
}

// ---------------------------------------------------------------------------
// Nearest foreign point (sequential dual-tree; > instead of >= in the prune
// keeps equal-distance branches alive so ties resolve to the smaller label).
namespace {

struct ForeignCtx {
  const KdTree& all;
  const KdTree& ct;
  index_t own;
  std::span<const index_t> cluster_of;
  IdDist best = IdDist::none();  // squared
  std::uint64_t evals = 0;

  void leaf_leaf(const KdTree::Node& na, const KdTree::Node& nb) {
    for (index_t i = na.begin; i < na.end; ++i) {
      index_t p = all.item_label(i);
      if (cluster_of[p] == own) continue;
      const double* px = all.item_coords(i);
      for (index_t j = nb.begin; j < nb.end; ++j) {
        ++evals;
        IdDist cand{sq_dist(px, ct.item_coords(j), all.dim()), p};
        if (cand.better_than(best)) best = cand;
      }
    }
  }

  void traverse(index_t ai, index_t bi) {
    if (all.has_marks() && all.mark(ai) == own) return;
    if (min_sq_dist_box_box(all.box_lo(ai), all.box_hi(ai), ct.box_lo(bi), ct.box_hi(bi), all.dim()) > best.dist)
      return;
    const KdTree::Node& na = all.node(ai);
    const KdTree::Node& nb = ct.node(bi);
    if (na.is_leaf() && nb.is_leaf()) {
      leaf_leaf(na, nb);
      return;
    }
    if (nb.is_leaf() || (!na.is_leaf() && na.count() >= nb.count())) {
      double dl = min_sq_dist_box_box(all.box_lo(na.left), all.box_hi(na.left), ct.box_lo(bi), ct.box_hi(bi),
                                      all.dim());
      double dr = min_sq_dist_box_box(all.box_lo(na.right), all.box_hi(na.right), ct.box_lo(bi), ct.box_hi(bi),
                                      all.dim());
      index_t first = na.left, second = na.right;
      if (dr < dl) { first = na.right; second = na.left; }
      traverse(first, bi);
      traverse(second, bi);
    } else {
      double dl = min_sq_dist_box_box(all.box_lo(ai), all.box_hi(ai), ct.box_lo(nb.left), ct.box_hi(nb.left),
                                      all.dim());
      double dr = min_sq_dist_box_box(all.box_lo(ai), all.box_hi(ai), ct.box_lo(nb.right), ct.box_hi(nb.right),
                                      all.dim());
      index_t first = nb.left, second = nb.right;
      if (dr < dl) { first = nb.right; second = nb.left; }
      traverse(ai, first);
      traverse(ai, second);
    }
  }
};

}  // namespace

std::optional<IdDist> nearest_foreign_point(const KdTree& all_points, const KdTree& cluster_tree,
                                            index_t own_cluster, std::span<const index_t> cluster_of_label,
                                            std::uint64_t* dist_evals) {
  if (all_points.item_count() == 0 || cluster_tree.item_count() == 0)
    throw std::invalid_argument("nearest_foreign_point of empty tree");
  if (all_points.dim() != cluster_tree.dim()) throw std::invalid_argument("dimension mismatch");
  ForeignCtx ctx{all_points, cluster_tree, own_cluster, cluster_of_label};
  ctx.traverse(0, 0);
  if (dist_evals) *dist_evals += ctx.evals;
  if (!ctx.best.valid()) return std::nullopt;
  return IdDist{std::sqrt(ctx.best.dist), ctx.best.id};
}

}  // namespace nnchain
