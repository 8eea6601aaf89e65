#include "nnchain/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nnchain {

namespace {

struct RefCluster {
  std::vector<index_t> members;  // ascending point indices
  double dev_sum = 0;            // sum of squared deviations from the centroid
};

// Centroid deviation sum over the concatenation of two member lists, computed
// from scratch (b may be empty).
double deviation_sum(const std::vector<index_t>& a, const std::vector<index_t>& b, const PointSet& ps) {
  std::vector<double> c(ps.d, 0.0);
  for (index_t m : a)
    for (std::size_t k = 0; k < ps.d; ++k) c[k] += ps.row(m)[k];
  for (index_t m : b)
    for (std::size_t k = 0; k < ps.d; ++k) c[k] += ps.row(m)[k];
  double w = double(a.size() + b.size());
  for (std::size_t k = 0; k < ps.d; ++k) c[k] /= w;
  double dev = 0;
  for (index_t m : a) dev += sq_dist(ps.row(m), c.data(), ps.d);
  for (index_t m : b) dev += sq_dist(ps.row(m), c.data(), ps.d);
  return dev;
}

double ref_distance(LinkageKind kind, const RefCluster& a, const RefCluster& b, const PointSet& ps) {
  switch (kind) {
    case LinkageKind::kComplete: {
      double mx = 0;
      for (index_t x : a.members)
        for (index_t y : b.members) mx = std::max(mx, sq_dist(ps.row(x), ps.row(y), ps.d));
      return std::sqrt(mx);
    }
    case LinkageKind::kAvg1: {
      double sum = 0;
      for (index_t x : a.members)
        for (index_t y : b.members) sum += euclid_dist(ps.row(x), ps.row(y), ps.d);
      return sum / (double(a.members.size()) * double(b.members.size()));
    }
    case LinkageKind::kAvg2: {
      double sum = 0;
      for (index_t x : a.members)
        for (index_t y : b.members) sum += sq_dist(ps.row(x), ps.row(y), ps.d);
      return sum / (double(a.members.size()) * double(b.members.size()));
    }
    case LinkageKind::kWard: {
      double joint = deviation_sum(a.members, b.members, ps);
      double gain = 2.0 * (joint - a.dev_sum - b.dev_sum);
      return std::sqrt(gain < 0 ? 0 : gain);
    }
  }
  throw std::logic_error("unknown linkage kind");
}

}  // namespace

Dendrogram naive_hac(const PointSet& ps, LinkageKind kind) {
  const std::size_t n = ps.n;
  Dendrogram dg;
  dg.n = n;
  if (n < 2) return dg;
  dg.merges.reserve(n - 1);

  std::vector<RefCluster> cl(n);
  for (std::size_t i = 0; i < n; ++i) cl[i].members = {static_cast<index_t>(i)};

  std::vector<index_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = static_cast<index_t>(i);

  std::vector<double> dist(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[condensed_index(n, i, j)] = ref_distance(kind, cl[i], cl[j], ps);

  for (std::uint32_t step = 1; active.size() > 1; ++step) {
    // Global minimum; ties resolved by lexicographic (i, j) because the scan
    // visits pairs in that order and only a strictly smaller height replaces.
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t ai = 0; ai + 1 < active.size(); ++ai) {
      for (std::size_t aj = ai + 1; aj < active.size(); ++aj) {
        double d = dist[condensed_index(n, active[ai], active[aj])];
        if (d < best) {
          best = d;
          bi = active[ai];
          bj = active[aj];
        }
      }
    }

    Merge m;
    m.left = static_cast<index_t>(bi);
    m.right = static_cast<index_t>(bj);
    m.height = best;
    m.left_size = static_cast<std::uint32_t>(cl[bi].members.size());
    m.right_size = static_cast<std::uint32_t>(cl[bj].members.size());
    m.size = m.left_size + m.right_size;
    m.round = step;
    dg.merges.push_back(m);

    std::vector<index_t> merged(m.size);
    std::merge(cl[bi].members.begin(), cl[bi].members.end(), cl[bj].members.begin(), cl[bj].members.end(),
               merged.begin());
    cl[bi].members = std::move(merged);
    cl[bj].members.clear();
    if (kind == LinkageKind::kWard) cl[bi].dev_sum = deviation_sum(cl[bi].members, {}, ps);

    active.erase(std::find(active.begin(), active.end(), static_cast<index_t>(bj)));
    for (index_t g : active) {
      if (g == static_cast<index_t>(bi)) continue;
      std::size_t lo = std::min<std::size_t>(g, bi), hi = std::max<std::size_t>(g, bi);
      dist[condensed_index(n, lo, hi)] = ref_distance(kind, cl[bi], cl[g], ps);
    }
  }
  return dg;
}

std::vector<double> cophenetic_distances(const Dendrogram& dg) {
  const std::size_t n = dg.n;
  if (dg.merges.size() + 1 != std::max<std::size_t>(n, 1))
    throw std::invalid_argument("dendrogram is incomplete");
  std::vector<double> out(n >= 2 ? n * (n - 1) / 2 : 0, 0.0);
  std::vector<std::vector<index_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {static_cast<index_t>(i)};
  for (const Merge& m : dg.merges) {
    if (m.left >= n || m.right >= n || members[m.left].empty() || members[m.right].empty())
      throw std::invalid_argument("merge list is not in topological order");
    for (index_t x : members[m.left])
      for (index_t y : members[m.right]) {
        index_t lo = std::min(x, y), hi = std::max(x, y);
        out[condensed_index(n, lo, hi)] = m.height;
      }
    members[m.left].insert(members[m.left].end(), members[m.right].begin(), members[m.right].end());
    members[m.right].clear();
    members[m.right].shrink_to_fit();
  }
  return out;
}

}  // namespace nnchain
