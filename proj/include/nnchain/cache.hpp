#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "nnchain/dendrogram.hpp"
#include "nnchain/linkage.hpp"
#include "nnchain/points.hpp"

namespace nnchain {

enum class ReserveOutcome : std::uint8_t {
  kWon,      // caller must compute the distance and publish it
  kPending,  // another caller holds the reservation and has not published yet
  kValue,    // a finished value is already stored
  kFull,     // both tables are full; nobody can reserve this pair
};

struct ReserveResult {
  ReserveOutcome outcome = ReserveOutcome::kFull;
  double value = 0;  // meaningful when outcome == kValue
};

// Bounded open-addressing map from a 64-bit key to a distance. Keys are
// (birth << 32) | id of the neighbor cluster, so an id whose cluster was
// replaced by a later merge never matches the stale entry. Supports
// concurrent insert-if-absent and reads; slots are never vacated while
// concurrent operations run (rebuild() is for barrier phases only).
class DistTable {
 public:
  static constexpr std::uint64_t kEmptyKey = ~std::uint64_t{0};
  static constexpr double kPendingVal = -1.0;  // real distances are >= 0

  DistTable() = default;
  DistTable(DistTable&& o) noexcept;
  DistTable& operator=(DistTable&& o) noexcept;

  void init(std::uint32_t capacity);  // entry bound; 0 leaves the table inert
  void release();                     // frees slot storage (dead cluster)

  std::uint32_t capacity() const { return cap_; }
  std::uint32_t used() const { return used_.load(std::memory_order_relaxed); }

  enum class PutOutcome : std::uint8_t { kInserted, kExisting, kExistingPending, kRejected };

  // Insert-if-absent. v == kPendingVal makes a reservation. When the key is
  // already present with a real value, reports kExisting and stores it in
  // *existing (if non-null); a still-pending entry reports kExistingPending.
  // kRejected means the table is at capacity (or inert).
  PutOutcome put(std::uint64_t key, double v, double* existing = nullptr);

  // Overwrite the value of an existing key (reservation publish). Returns
  // false when the key is absent.
  bool set_value(std::uint64_t key, double v);

  // Lookup; absent keys and pending reservations return nullopt (*pending is
  // set to true in the latter case).
  std::optional<double> find(std::uint64_t key, bool* pending = nullptr) const;

  // Spin until the key's entry holds a real value. The key must be present.
  double wait_value(std::uint64_t key) const;

  // fn(key, value) over every entry holding a real value. Not safe against
  // concurrent writes to this table.
  template <class F>
  void for_each(F&& fn) const {
    for (std::uint32_t s = 0; s < nslots_; ++s) {
      std::uint64_t k = slots_[s].key.load(std::memory_order_acquire);
      if (k == kEmptyKey) continue;
      double v = slots_[s].val.load(std::memory_order_acquire);
      if (v == kPendingVal) continue;
      fn(k, v);
    }
  }

  // Barrier-phase compaction: drops entries for which stale(key) is true.
  // Must not run concurrently with any other operation on this table.
  void rebuild(const std::function<bool(std::uint64_t)>& stale);

 private:
  struct Slot {
    std::atomic<std::uint64_t> key{kEmptyKey};
    std::atomic<double> val{kPendingVal};
  };

  bool try_bump_used();

  std::unique_ptr<Slot[]> slots_;
  std::uint32_t cap_ = 0;
  std::uint32_t nslots_ = 0;
  std::uint32_t mask_ = 0;
  std::atomic<std::uint32_t> used_{0};
};

// Per-cluster distance caches plus the merge-round update pass. Lookups probe
// both endpoints' tables; insertion into a full table is silently dropped.
// The reservation protocol guarantees that for any unordered pair at most one
// concurrent caller is told to compute.
class DistCache {
 public:
  // n cluster ids; capacity = per-table entry bound. capacity 0 disables
  // every operation (get misses, inserts drop, reservations report kFull).
  DistCache(std::size_t n, std::uint32_t capacity);

  bool enabled() const { return cap_ > 0; }
  std::uint32_t capacity() const { return cap_; }
  std::size_t size() const { return n_; }

  // Probes key j in i's table and key i in j's table. Throws
  // std::invalid_argument when i == j.
  std::optional<double> get(index_t i, index_t j) const;

  // Inserts d into both tables independently; full tables silently reject.
  void insert(index_t i, index_t j, double d);

  // Tries the smaller id's table first, the other one if that is full.
  ReserveResult reserve(index_t i, index_t j);
  bool reserve_pair(index_t i, index_t j) { return reserve(i, j).outcome == ReserveOutcome::kWon; }

  // Winner side: fill the reservation made by reserve() and mirror the value
  // into the other endpoint's table.
  void publish(index_t i, index_t j, double d);

  // Loser side: spin until the pair's reservation is published. Call only
  // after observing ReserveOutcome::kPending.
  double wait_for(index_t i, index_t j) const;

  // ---- merge-round update pass ----
  // direct(a, b) must return the linkage distance between clusters a and b in
  // their pre-round state. Sequence per round: begin_round_update once, then
  // update_for_pair for every merged pair (parallel calls allowed), then
  // commit_round at the barrier. The spans must stay valid until commit_round
  // returns. pair_of maps a cluster id merged this round to its index in
  // `pairs` (kNone for untouched ids); sizes holds pre-round member counts of
  // live clusters.
  using DirectDist = std::function<double(index_t, index_t)>;

  void begin_round_update(std::uint32_t round, std::span<const Merge> pairs,
                          std::span<const index_t> pair_of, std::span<const std::uint32_t> sizes);
  void update_for_pair(std::size_t pair_index, LinkageKind kind, const DirectDist& direct);
  void commit_round();

  // Birth bookkeeping without an update pass (tests, cache-off paths).
  void note_merge(index_t left, index_t right, std::uint32_t round);

  std::uint32_t birth(index_t id) const { return birth_[id]; }
  bool alive(index_t id) const { return alive_[id] != 0; }

  // fn(neighbor id, value) over entries of id's table that reference live,
  // current clusters. Barrier phases only.
  template <class F>
  void for_each_live_entry(index_t id, F&& fn) const {
    if (!enabled()) return;
    tables_[id].for_each([&](std::uint64_t key, double v) {
      index_t j = static_cast<index_t>(key & 0xffffffffu);
      std::uint32_t b = static_cast<std::uint32_t>(key >> 32);
      if (j < n_ && alive_[j] && birth_[j] == b) fn(j, v);
    });
  }

  std::uint32_t live_entry_count(index_t id) const {
    std::uint32_t c = 0;
    for_each_live_entry(id, [&](index_t, double) { ++c; });
    return c;
  }

 private:
  std::uint64_t key_of_current(index_t id) const {
    return (std::uint64_t(birth_[id]) << 32) | id;
  }
  bool merged_this_round(index_t id) const {
    return !pair_of_.empty() && pair_of_[id] != kNone;
  }
  // Write-path resolution: ids merged this round address their new
  // incarnation (birth = round, pending table); everything else is current.
  std::uint64_t key_of(index_t id) const;
  DistTable& table_of(index_t id);
  const DistTable& table_of(index_t id) const;

  // Lookup in pre-round tables with pre-round keys; valid during the pass.
  std::optional<double> get_old(index_t a, index_t b) const;
  double component(index_t a, index_t b, const DirectDist& direct) const;
  double case1_value(const Merge& p, const Merge& q, LinkageKind kind, const DirectDist& direct) const;
  double case2_value(const Merge& p, index_t g, LinkageKind kind, const DirectDist& direct) const;

  std::size_t n_ = 0;
  std::uint32_t cap_ = 0;
  std::vector<DistTable> tables_;
  std::vector<std::uint32_t> birth_;
  std::vector<std::uint8_t> alive_;

  // in-flight round state (empty outside begin_round_update..commit_round)
  std::uint32_t round_ = 0;
  std::span<const Merge> pairs_;
  std::span<const index_t> pair_of_;
  std::span<const std::uint32_t> sizes_;
  std::vector<DistTable> pending_;
};

}  // namespace nnchain
