#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "nnchain/points.hpp"

namespace nnchain {

// Disjoint sets over point indices with path halving. find() is safe to call
// concurrently with other find() calls (the compression writes are benign
// races that only shortcut valid parent links). unite() calls must not run
// concurrently with unite() calls touching the same trees; the engine only
// unites disjoint pairs within a merge phase, which is safe.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(std::make_unique<std::atomic<index_t>[]>(n)), size_(n, 1), n_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i].store(static_cast<index_t>(i), std::memory_order_relaxed);
  }

  index_t find(index_t x) const {
    index_t p = parent_[x].load(std::memory_order_relaxed);
    while (x != p) {
      index_t gp = parent_[p].load(std::memory_order_relaxed);
      parent_[x].store(gp, std::memory_order_relaxed);
      x = gp;
      p = parent_[x].load(std::memory_order_relaxed);
    }
    return x;
  }

  // Union by size; returns the surviving root.
  index_t unite(index_t a, index_t b) {
    index_t ra = find(a), rb = find(b);
    if (ra == rb) return ra;
    if (size_[ra] < size_[rb]) std::swap(ra, rb);
    parent_[rb].store(ra, std::memory_order_relaxed);
    size_[ra] += size_[rb];
    return ra;
  }

  std::size_t size() const { return n_; }

 private:
  std::unique_ptr<std::atomic<index_t>[]> parent_;
  std::vector<std::uint32_t> size_;
  std::size_t n_;
};

}  // namespace nnchain
