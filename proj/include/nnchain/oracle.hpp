#pragma once

#include <cstddef>
#include <vector>

#include "nnchain/dendrogram.hpp"
#include "nnchain/linkage.hpp"
#include "nnchain/points.hpp"

namespace nnchain {

// Serial reference clustering. Every cluster quantity is recomputed from the
// member points (pairwise loops for complete/average, fresh centroid and
// deviation sums for Ward), so it shares no update formulas with the chain
// engine. Quadratic memory, cubic time; intended for verification only.
Dendrogram naive_hac(const PointSet& ps, LinkageKind kind);

// Flat index of the (i, j) entry, i < j < n, in a condensed upper triangle.
inline std::size_t condensed_index(std::size_t n, std::size_t i, std::size_t j) {
  return n * i - i * (i + 1) / 2 + (j - i - 1);
}

// Condensed upper-triangle matrix of pairwise merge heights: the entry for
// points i < j is the height of the merge that first joins them, stored at
// condensed_index(n, i, j). Requires a complete dendrogram (n - 1 merges).
std::vector<double> cophenetic_distances(const Dendrogram& dg);

}  // namespace nnchain
