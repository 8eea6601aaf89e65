#include "nnchain/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nnchain {

std::optional<LinkageKind> parse_linkage(const std::string& name) {
  if (name == "comp") return LinkageKind::kComplete;
  if (name == "ward") return LinkageKind::kWard;
  if (name == "avg1") return LinkageKind::kAvg1;
  if (name == "avg2") return LinkageKind::kAvg2;
  return std::nullopt;
}

const char* linkage_name(LinkageKind kind) {
  switch (kind) {
    case LinkageKind::kComplete: return "comp";
    case LinkageKind::kWard: return "ward";
    case LinkageKind::kAvg1: return "avg1";
    case LinkageKind::kAvg2: return "avg2";
  }
  return "?";
}

ClusterStats singleton_stats(const double* point, std::size_t d) {
  ClusterStats s;
  s.size = 1;
  s.centroid.assign(point, point + d);
  s.variance = 0;
  return s;
}

ClusterStats stats_of(std::span<const index_t> members, const PointSet& ps) {
  if (members.empty()) throw std::invalid_argument("stats of empty cluster");
  ClusterStats s;
  s.size = static_cast<std::uint32_t>(members.size());
  s.centroid.assign(ps.d, 0.0);
  for (index_t m : members) {
    const double* p = ps.row(m);
    for (std::size_t k = 0; k < ps.d; ++k) s.centroid[k] += p[k];
  }
  for (std::size_t k = 0; k < ps.d; ++k) s.centroid[k] /= double(s.size);
  s.variance = 0;
  for (index_t m : members) s.variance += sq_dist(ps.row(m), s.centroid.data(), ps.d);
  return s;
}

ClusterStats merge_stats(const ClusterStats& a, const ClusterStats& b) {
  if (a.size == 0 || b.size == 0) throw std::invalid_argument("merge of empty cluster");
  if (a.centroid.size() != b.centroid.size()) throw std::invalid_argument("dimension mismatch");
  std::size_t d = a.centroid.size();
  ClusterStats s;
  s.size = a.size + b.size;
  double wa = double(a.size), wb = double(b.size), w = wa + wb;
  s.centroid.resize(d);
  for (std::size_t k = 0; k < d; ++k) s.centroid[k] = (wa * a.centroid[k] + wb * b.centroid[k]) / w;
  double da = sq_dist(a.centroid.data(), s.centroid.data(), d);
  double db = sq_dist(b.centroid.data(), s.centroid.data(), d);
  s.variance = a.variance + b.variance + wa * da + wb * db;
  return s;
}

namespace {

void check_disjoint_sorted(std::span<const index_t> a, std::span<const index_t> b) {
  // Both sides ascending; a shared index means the clusters overlap.
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) throw std::invalid_argument("clusters overlap");
    if (a[i] < b[j]) ++i;
    else ++j;
  }
}

double ward_from_stats(const ClusterStats& a, const ClusterStats& b) {
  double wa = double(a.size), wb = double(b.size);
  double sq = sq_dist(a.centroid.data(), b.centroid.data(), a.centroid.size());
  return std::sqrt(2.0 * wa * wb / (wa + wb) * sq);
}

double avg2_from_stats(const ClusterStats& a, const ClusterStats& b) {
  double sq = sq_dist(a.centroid.data(), b.centroid.data(), a.centroid.size());
  return sq + a.variance / double(a.size) + b.variance / double(b.size);
}

}  // namespace

double cluster_distance(LinkageKind kind, const ClusterView& a, const ClusterView& b, const PointSet& ps,
                        std::uint64_t* point_dist_evals) {
  if (a.members.empty() || b.members.empty()) throw std::invalid_argument("empty cluster");
  check_disjoint_sorted(a.members, b.members);

  switch (kind) {
    case LinkageKind::kComplete: {
      double mx = 0;
      for (index_t x : a.members) {
        const double* px = ps.row(x);
        for (index_t y : b.members) {
          double sq = sq_dist(px, ps.row(y), ps.d);
          if (sq > mx) mx = sq;
        }
      }
      if (point_dist_evals) *point_dist_evals += std::uint64_t(a.members.size()) * b.members.size();
      return std::sqrt(mx);
    }
    case LinkageKind::kAvg1: {
      double sum = 0;
      for (index_t x : a.members) {
        const double* px = ps.row(x);
        for (index_t y : b.members) sum += euclid_dist(px, ps.row(y), ps.d);
      }
      if (point_dist_evals) *point_dist_evals += std::uint64_t(a.members.size()) * b.members.size();
      return sum / (double(a.members.size()) * double(b.members.size()));
    }
    case LinkageKind::kWard: {
      if (!a.stats || !b.stats) throw std::invalid_argument("ward distance needs stats");
      if (point_dist_evals) ++*point_dist_evals;
      return ward_from_stats(*a.stats, *b.stats);
    }
    case LinkageKind::kAvg2: {
      if (!a.stats || !b.stats) throw std::invalid_argument("avg2 distance needs stats");
      if (point_dist_evals) ++*point_dist_evals;
      return avg2_from_stats(*a.stats, *b.stats);
    }
  }
  throw std::logic_error("unknown linkage kind");
}

double cluster_distance(LinkageKind kind, const ClusterStats& a, const ClusterStats& b,
                        std::uint64_t* point_dist_evals) {
  if (a.size == 0 || b.size == 0) throw std::invalid_argument("empty cluster");
  switch (kind) {
    case LinkageKind::kWard:
      if (point_dist_evals) ++*point_dist_evals;
      return ward_from_stats(a, b);
    case LinkageKind::kAvg2:
      if (point_dist_evals) ++*point_dist_evals;
      return avg2_from_stats(a, b);
    default:
      throw std::invalid_argument("linkage kind needs member lists, not stats");
  }
}

double lance_williams(LinkageKind kind, double d_ac, double d_bc, double d_ab, std::uint64_t size_a,
                      std::uint64_t size_b, std::uint64_t size_c) {
  double na = double(size_a), nb = double(size_b), nc = double(size_c);
  switch (kind) {
    case LinkageKind::kComplete:
      return 0.5 * d_ac + 0.5 * d_bc + 0.5 * std::abs(d_ac - d_bc);
    case LinkageKind::kWard: {
      // Coefficients act on squared distances; result is reported unsquared.
      double s = na + nb + nc;
      double sq = ((na + nc) * d_ac * d_ac + (nb + nc) * d_bc * d_bc - nc * d_ab * d_ab) / s;
      return std::sqrt(sq < 0 ? 0 : sq);
    }
    case LinkageKind::kAvg1:
    case LinkageKind::kAvg2:
      return (na * d_ac + nb * d_bc) / (na + nb);
  }
  throw std::logic_error("unknown linkage kind");
}

double search_radius(LinkageKind kind, double beta, std::uint64_t size_i, std::uint64_t n_min) {
  switch (kind) {
    case LinkageKind::kComplete:
    case LinkageKind::kAvg1:
      return beta;
    case LinkageKind::kAvg2:
      return std::sqrt(beta);
    case LinkageKind::kWard: {
      double ci = double(size_i), nm = double(n_min);
      return beta * std::sqrt((ci + nm) / (2.0 * nm * ci));
    }
  }
  throw std::logic_error("unknown linkage kind");
}

bool reducibility_holds(LinkageKind kind, std::span<const index_t> a, std::span<const index_t> b,
                        std::span<const index_t> c, const PointSet& ps) {
  ClusterStats sa = stats_of(a, ps), sb = stats_of(b, ps), sc = stats_of(c, ps);
  ClusterView va{a, &sa}, vb{b, &sb}, vc{c, &sc};
  double dab = cluster_distance(kind, va, vb, ps);
  double dac = cluster_distance(kind, va, vc, ps);
  double dbc = cluster_distance(kind, vb, vc, ps);
  bool premise = dab <= dac && dab <= dbc && (dab < dac || dab < dbc);
  if (!premise) return true;

  std::vector<index_t> merged(a.begin(), a.end());
  merged.insert(merged.end(), b.begin(), b.end());
  std::sort(merged.begin(), merged.end());
  ClusterStats sm = merge_stats(sa, sb);
  double dmc = cluster_distance(kind, ClusterView{merged, &sm}, vc, ps);
  return dab < dmc;
}

}  // namespace nnchain
