#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nnchain/atomics.hpp"
#include "nnchain/points.hpp"
#include "nnchain/union_find.hpp"

namespace nnchain {

// Minimum squared distance from point c to the axis-aligned box [lo, hi].
inline double min_sq_dist_point_box(const double* c, const double* lo, const double* hi, std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) {
    double g = 0;
    if (c[k] < lo[k]) g = lo[k] - c[k];
    else if (c[k] > hi[k]) g = c[k] - hi[k];
    s += g * g;
  }
  return s;
}

// Minimum squared distance between two axis-aligned boxes.
inline double min_sq_dist_box_box(const double* lo1, const double* hi1, const double* lo2, const double* hi2,
                                  std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) {
    double g = lo2[k] - hi1[k];
    double g2 = lo1[k] - hi2[k];
    if (g2 > g) g = g2;
    if (g > 0) s += g * g;
  }
  return s;
}

// Maximum squared distance between any point of box 1 and any point of box 2.
inline double max_sq_dist_box_box(const double* lo1, const double* hi1, const double* lo2, const double* hi2,
                                  std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) {
    double g = hi2[k] - lo1[k];
    double g2 = hi1[k] - lo2[k];
    if (g2 > g) g = g2;
    if (g < 0) g = 0;
    s += g * g;
  }
  return s;
}

struct BallRef {
  const double* center;
  double radius;  // Euclidean
};

// Closed comparison: a ball touching a box face counts as overlapping.
inline bool ball_overlaps_box(const BallRef& ball, const double* lo, const double* hi, std::size_t d) {
  return min_sq_dist_point_box(ball.center, lo, hi, d) <= ball.radius * ball.radius;
}

// Static kd-tree over a set of items. Each item has a label (reported by
// queries) and coordinates taken from an external row-major array at build
// time; the tree keeps its own permuted copy, so the source may be discarded.
//
// Splits: widest box extent (ties towards the lower dimension index), at the
// median item under the total order (coordinate, label). The resulting
// permutation is schedule-independent, so parallel builds are deterministic.
class KdTree {
 public:
  struct Node {
    index_t begin, end;   // item span
    index_t left, right;  // child node ids, kNone for leaves
    bool is_leaf() const { return left == kNone; }
    index_t count() const { return end - begin; }
  };

  KdTree() = default;

  // rows[k]*d indexes the coordinates of item k in `base`; labels[k] names it.
  static KdTree build(const double* base, std::size_t d, std::span<const index_t> rows,
                      std::span<const index_t> labels, unsigned leaf_capacity);

  // Convenience: items are the points of `ps` themselves, labels = indices.
  static KdTree build(const PointSet& ps, unsigned leaf_capacity);

  std::size_t dim() const { return d_; }
  std::size_t item_count() const { return labels_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(index_t i) const { return nodes_[i]; }
  const double* box_lo(index_t i) const { return lo_.data() + std::size_t(i) * d_; }
  const double* box_hi(index_t i) const { return hi_.data() + std::size_t(i) * d_; }
  const double* item_coords(index_t k) const { return pts_.data() + std::size_t(k) * d_; }
  index_t item_label(index_t k) const { return labels_[k]; }

  // Per-node cluster marks: a node is marked with cluster c iff every item in
  // its subtree maps to c; mixed subtrees get kNone. Rebuilt in parallel.
  void refresh_marks(std::span<const index_t> cluster_of_label);
  bool has_marks() const { return !marks_.empty(); }
  index_t mark(index_t nodeid) const { return marks_[nodeid]; }

  // Visits every item within Euclidean distance r of center (closed ball).
  // visit(label, coords) is called once per item; traversal is sequential.
  template <class Visit>
  void range_visit(const double* center, double r, Visit&& visit, std::uint64_t* dist_evals = nullptr) const {
    if (nodes_.empty()) return;
    const double r2 = r * r;
    range_visit_rec(0, center, r2, visit, dist_evals);
  }

  // Nearest item to q among those with exclude(label) == false; ties go to the
  // smaller label. Returns nothing if every item is excluded.
  template <class Exclude>
  std::optional<IdDist> nearest(const double* q, Exclude&& exclude, std::uint64_t* dist_evals = nullptr) const {
    if (nodes_.empty()) return std::nullopt;
    IdDist best = IdDist::none();  // best.dist holds a squared distance here
    nearest_rec(0, q, exclude, best, dist_evals);
    if (!best.valid()) return std::nullopt;
    return IdDist{std::sqrt(best.dist), best.id};
  }

 private:
  template <class Visit>
  void range_visit_rec(index_t ni, const double* c, double r2, Visit& visit, std::uint64_t* evals) const {
    const Node& nd = nodes_[ni];
    if (min_sq_dist_point_box(c, box_lo(ni), box_hi(ni), d_) > r2) return;
    if (nd.is_leaf()) {
      for (index_t k = nd.begin; k < nd.end; ++k) {
        if (evals) ++*evals;
        if (sq_dist(c, item_coords(k), d_) <= r2) visit(labels_[k], item_coords(k));
      }
      return;
    }
    range_visit_rec(nd.left, c, r2, visit, evals);
    range_visit_rec(nd.right, c, r2, visit, evals);
  }

  template <class Exclude>
  void nearest_rec(index_t ni, const double* q, Exclude& exclude, IdDist& best, std::uint64_t* evals) const {
    const Node& nd = nodes_[ni];
    if (min_sq_dist_point_box(q, box_lo(ni), box_hi(ni), d_) > best.dist) return;
    if (nd.is_leaf()) {
      for (index_t k = nd.begin; k < nd.end; ++k) {
        index_t label = labels_[k];
        if (exclude(label)) continue;
        if (evals) ++*evals;
        double sq = sq_dist(q, item_coords(k), d_);
        IdDist cand{sq, label};
        if (cand.better_than(best)) best = cand;
      }
      return;
    }
    double dl = min_sq_dist_point_box(q, box_lo(nd.left), box_hi(nd.left), d_);
    double dr = min_sq_dist_point_box(q, box_lo(nd.right), box_hi(nd.right), d_);
    index_t first = nd.left, second = nd.right;
    if (dr < dl) { first = nd.right; second = nd.left; }
    nearest_rec(first, q, exclude, best, evals);
    nearest_rec(second, q, exclude, best, evals);
  }

  void build_rec(index_t nodeid, index_t begin, index_t end, const double* base, std::span<const index_t> rows,
                 std::span<const index_t> labels, std::vector<index_t>& ord, unsigned leaf_capacity);

  std::size_t d_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> lo_, hi_;   // node boxes, node_count * d
  std::vector<double> pts_;       // permuted item coordinates
  std::vector<index_t> labels_;   // permuted item labels
  std::vector<index_t> marks_;
};

// Marks from a union-find over point labels (labels must be point indices).
void mark_uniform_clusters(KdTree& tree, const UnionFind& uf);

// Exact all-nearest-neighbors via a parallel dual-tree traversal. Entry i is
// the nearest other point (ties to the smaller index) and its Euclidean
// distance. Requires n >= 2.
std::vector<IdDist> all_nearest_neighbors(const PointSet& ps, unsigned leaf_capacity = 16,
                                          std::atomic<std::uint64_t>* dist_evals = nullptr);

// Exact maximum Euclidean distance between any item of a and any item of b,
// via a pruned parallel dual-tree traversal.
double farthest_pair_distance(const KdTree& a, const KdTree& b, std::atomic<std::uint64_t>* dist_evals = nullptr);

// Nearest point outside one cluster: dual traversal of the all-points tree
// against the cluster's own tree, skipping subtrees marked as the cluster and
// items mapping to it. Returns the foreign point's label and its Euclidean
// distance to the cluster (ties to the smaller label); nothing if every point
// belongs to the cluster. Sequential; call it from parallel outer loops.
std::optional<IdDist> nearest_foreign_point(const KdTree& all_points, const KdTree& cluster_tree,
                                            index_t own_cluster, std::span<const index_t> cluster_of_label,
                                            std::uint64_t* dist_evals = nullptr);

}  // namespace nnchain
