#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnchain/points.hpp"

namespace nnchain {

// Cluster dissimilarities. Avg1 is the mean pairwise Euclidean distance, Avg2
// the mean pairwise squared Euclidean distance; Avg2 values (and dendrogram
// heights) therefore live in squared space.
enum class LinkageKind { kComplete, kWard, kAvg1, kAvg2 };

std::optional<LinkageKind> parse_linkage(const std::string& name);  // comp|ward|avg1|avg2
const char* linkage_name(LinkageKind kind);

// Per-cluster summary. variance is the SUM of squared deviations from the
// centroid (not divided by the size), so it merges additively.
struct ClusterStats {
  std::uint32_t size = 0;
  std::vector<double> centroid;
  double variance = 0;
};

ClusterStats singleton_stats(const double* point, std::size_t d);
ClusterStats stats_of(std::span<const index_t> members, const PointSet& ps);

// Exact merge: centroid is the size-weighted mean; the variance sum picks up
// each side's displacement term |A|*||mA - m||^2 + |B|*||mB - m||^2.
ClusterStats merge_stats(const ClusterStats& a, const ClusterStats& b);

// A cluster as seen by the definitional distance routines: sorted ascending
// member point indices plus its summary stats.
struct ClusterView {
  std::span<const index_t> members;
  const ClusterStats* stats = nullptr;
};

// Dissimilarity between two disjoint clusters, straight from the definitions:
// complete = max pairwise distance, avg1/avg2 = mean (squared) pairwise
// distance with the double sum iterated in ascending member order, Ward from
// the centroid form. Throws std::invalid_argument on overlapping clusters.
double cluster_distance(LinkageKind kind, const ClusterView& a, const ClusterView& b, const PointSet& ps,
                        std::uint64_t* point_dist_evals = nullptr);

// Stats-only form for the centroid-based kinds (kWard, kAvg2); other kinds
// need member lists and throw std::invalid_argument here.
double cluster_distance(LinkageKind kind, const ClusterStats& a, const ClusterStats& b,
                        std::uint64_t* point_dist_evals = nullptr);

// Distance from the merged cluster A∪B to C, combined from the pairwise
// distances. Ward coefficients apply to squared distances (inputs and output
// stay unsquared); Avg2 inputs are already squared-space values.
double lance_williams(LinkageKind kind, double d_ac, double d_bc, double d_ab, std::uint64_t size_a,
                      std::uint64_t size_b, std::uint64_t size_c);

// Search-ball radius around the centroid of a cluster of size `size_i`, given
// an upper bound beta on its nearest-neighbor distance and the minimum active
// cluster size n_min. Guarantees the nearest neighbor's centroid (complete:
// its every point) lies inside the ball.
double search_radius(LinkageKind kind, double beta, std::uint64_t size_i, std::uint64_t n_min);

// Test utility: merging two clusters that are mutually (weakly) nearest, and
// strictly closer to each other than at least one of them is to C, cannot end
// up closer to C than they were to each other.
bool reducibility_holds(LinkageKind kind, std::span<const index_t> a, std::span<const index_t> b,
                        std::span<const index_t> c, const PointSet& ps);

}  // namespace nnchain
