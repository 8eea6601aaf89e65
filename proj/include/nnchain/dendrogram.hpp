#pragma once

#include <cstdint>
#include <vector>

#include "nnchain/points.hpp"

namespace nnchain {

// One agglomeration step. Cluster ids follow the min-member convention: a
// cluster is identified by the smallest point index it contains, so the
// merged cluster keeps the id `left` (left < right always).
struct Merge {
  index_t left = kNone;
  index_t right = kNone;
  double height = 0;
  std::uint32_t size = 0;       // member count after the merge
  std::uint32_t left_size = 0;  // member counts going in
  std::uint32_t right_size = 0;
  std::uint32_t round = 0;      // 1-based round (sequence index for the serial reference)
};

// Merge list in round-major order, so every child cluster id refers to the
// most recent earlier merge that formed it.
struct Dendrogram {
  std::size_t n = 0;
  std::vector<Merge> merges;
};

}  // namespace nnchain
