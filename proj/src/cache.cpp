#include "nnchain/cache.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>
#include <thread>
#include <utility>

namespace nnchain {

namespace {

inline std::uint64_t mix_key(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

DistTable::DistTable(DistTable&& o) noexcept
    : slots_(std::move(o.slots_)),
      cap_(o.cap_),
      nslots_(o.nslots_),
      mask_(o.mask_),
      used_(o.used_.load(std::memory_order_relaxed)) {
  o.cap_ = 0;
  o.nslots_ = 0;
  o.mask_ = 0;
  o.used_.store(0, std::memory_order_relaxed);
}

DistTable& DistTable::operator=(DistTable&& o) noexcept {
  if (this != &o) {
    slots_ = std::move(o.slots_);
    cap_ = o.cap_;
    nslots_ = o.nslots_;
    mask_ = o.mask_;
    used_.store(o.used_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    o.cap_ = 0;
    o.nslots_ = 0;
    o.mask_ = 0;
    o.used_.store(0, std::memory_order_relaxed);
  }
  return *this;
}

void DistTable::init(std::uint32_t capacity) {
  cap_ = capacity;
  used_.store(0, std::memory_order_relaxed);
  if (capacity == 0) {
    slots_.reset();
    nslots_ = 0;
    mask_ = 0;
    return;
  }
  nslots_ = std::bit_ceil(std::max<std::uint32_t>(4, capacity * 2));
  mask_ = nslots_ - 1;
  slots_ = std::make_unique<Slot[]>(nslots_);
}

void DistTable::release() {
  slots_.reset();
  nslots_ = 0;
  mask_ = 0;
  used_.store(0, std::memory_order_relaxed);
}

bool DistTable::try_bump_used() {
  std::uint32_t u = used_.load(std::memory_order_relaxed);
  while (u < cap_) {
    if (used_.compare_exchange_weak(u, u + 1, std::memory_order_relaxed)) return true;
  }
  return false;
}

DistTable::PutOutcome DistTable::put(std::uint64_t key, double v, double* existing) {
  if (nslots_ == 0) return PutOutcome::kRejected;
  std::uint32_t idx = static_cast<std::uint32_t>(mix_key(key)) & mask_;
  for (std::uint32_t probe = 0; probe < nslots_; ++probe) {
    Slot& s = slots_[idx];
    std::uint64_t k = s.key.load(std::memory_order_acquire);
    for (;;) {
      if (k == key) {
        double cur = s.val.load(std::memory_order_acquire);
        if (cur == kPendingVal) return PutOutcome::kExistingPending;
        if (existing) *existing = cur;
        return PutOutcome::kExisting;
      }
      if (k != kEmptyKey) break;  // foreign entry, move on
      if (!try_bump_used()) {
        // At capacity. A racer may have just claimed this slot for our key.
        k = s.key.load(std::memory_order_acquire);
        if (k == key) continue;
        if (k == kEmptyKey) return PutOutcome::kRejected;
        break;
      }
      std::uint64_t expected = kEmptyKey;
      if (s.key.compare_exchange_strong(expected, key, std::memory_order_acq_rel)) {
        if (v != kPendingVal) s.val.store(v, std::memory_order_release);
        return PutOutcome::kInserted;
      }
      used_.fetch_sub(1, std::memory_order_relaxed);  // lost the slot, undo
      k = expected;                                   // re-examine the claimant
    }
    idx = (idx + 1) & mask_;
  }
  return PutOutcome::kRejected;
}

bool DistTable::set_value(std::uint64_t key, double v) {
  if (nslots_ == 0) return false;
  std::uint32_t idx = static_cast<std::uint32_t>(mix_key(key)) & mask_;
  for (std::uint32_t probe = 0; probe < nslots_; ++probe) {
    Slot& s = slots_[idx];
    std::uint64_t k = s.key.load(std::memory_order_acquire);
    if (k == kEmptyKey) return false;
    if (k == key) {
      s.val.store(v, std::memory_order_release);
      return true;
    }
    idx = (idx + 1) & mask_;
  }
  return false;
}

std::optional<double> DistTable::find(std::uint64_t key, bool* pending) const {
  if (pending) *pending = false;
  if (nslots_ == 0) return std::nullopt;
  std::uint32_t idx = static_cast<std::uint32_t>(mix_key(key)) & mask_;
  for (std::uint32_t probe = 0; probe < nslots_; ++probe) {
    const Slot& s = slots_[idx];
    std::uint64_t k = s.key.load(std::memory_order_acquire);
    if (k == kEmptyKey) return std::nullopt;
    if (k == key) {
      double v = s.val.load(std::memory_order_acquire);
      if (v == kPendingVal) {
        if (pending) *pending = true;
        return std::nullopt;
      }
      return v;
    }
    idx = (idx + 1) & mask_;
  }
  return std::nullopt;
}

double DistTable::wait_value(std::uint64_t key) const {
  std::uint32_t idx = static_cast<std::uint32_t>(mix_key(key)) & mask_;
  for (std::uint32_t probe = 0; probe < nslots_; ++probe) {
    const Slot& s = slots_[idx];
    std::uint64_t k = s.key.load(std::memory_order_acquire);
    if (k == key) {
      for (;;) {
        double v = s.val.load(std::memory_order_acquire);
        if (v != kPendingVal) return v;
        std::this_thread::yield();
      }
    }
    if (k == kEmptyKey) break;
    idx = (idx + 1) & mask_;
  }
  throw std::logic_error("wait_value on an absent key");
}

void DistTable::rebuild(const std::function<bool(std::uint64_t)>& stale) {
  if (nslots_ == 0) return;
  std::vector<std::pair<std::uint64_t, double>> keep;
  keep.reserve(used_.load(std::memory_order_relaxed));
  for (std::uint32_t s = 0; s < nslots_; ++s) {
    std::uint64_t k = slots_[s].key.load(std::memory_order_relaxed);
    if (k == kEmptyKey) continue;
    double v = slots_[s].val.load(std::memory_order_relaxed);
    slots_[s].key.store(kEmptyKey, std::memory_order_relaxed);
    slots_[s].val.store(kPendingVal, std::memory_order_relaxed);
    if (v == kPendingVal) continue;  // unpublished reservations do not survive a barrier
    if (!stale(k)) keep.emplace_back(k, v);
  }
  used_.store(static_cast<std::uint32_t>(keep.size()), std::memory_order_relaxed);
  for (auto& [k, v] : keep) {
    std::uint32_t idx = static_cast<std::uint32_t>(mix_key(k)) & mask_;
    while (slots_[idx].key.load(std::memory_order_relaxed) != kEmptyKey) idx = (idx + 1) & mask_;
    slots_[idx].val.store(v, std::memory_order_relaxed);
    slots_[idx].key.store(k, std::memory_order_relaxed);
  }
}

DistCache::DistCache(std::size_t n, std::uint32_t capacity)
    : n_(n), cap_(capacity), birth_(n, 0), alive_(n, 1) {
  if (cap_ > 0) {
    tables_.resize(n_);
    for (auto& t : tables_) t.init(cap_);
  }
}

std::uint64_t DistCache::key_of(index_t id) const {
  if (merged_this_round(id)) return (std::uint64_t(round_) << 32) | id;
  return key_of_current(id);
}

DistTable& DistCache::table_of(index_t id) {
  if (merged_this_round(id)) return pending_[pair_of_[id]];
  return tables_[id];
}

const DistTable& DistCache::table_of(index_t id) const {
  if (merged_this_round(id)) return pending_[pair_of_[id]];
  return tables_[id];
}

std::optional<double> DistCache::get(index_t i, index_t j) const {
  if (i == j) throw std::invalid_argument("cache lookup with i == j");
  if (!enabled()) return std::nullopt;
  if (auto v = tables_[i].find(key_of_current(j))) return v;
  return tables_[j].find(key_of_current(i));
}

void DistCache::insert(index_t i, index_t j, double d) {
  if (!enabled() || i == j) return;
  if (table_of(i).put(key_of(j), d) == DistTable::PutOutcome::kExistingPending)
    table_of(i).set_value(key_of(j), d);
  if (table_of(j).put(key_of(i), d) == DistTable::PutOutcome::kExistingPending)
    table_of(j).set_value(key_of(i), d);
}

ReserveResult DistCache::reserve(index_t i, index_t j) {
  if (i == j) throw std::invalid_argument("cache reservation with i == j");
  if (!enabled()) return {ReserveOutcome::kFull, 0};
  index_t lo = std::min(i, j), hi = std::max(i, j);
  double existing = 0;
  auto r = table_of(lo).put(key_of(hi), DistTable::kPendingVal, &existing);
  if (r == DistTable::PutOutcome::kInserted) return {ReserveOutcome::kWon, 0};
  if (r == DistTable::PutOutcome::kExisting) return {ReserveOutcome::kValue, existing};
  if (r == DistTable::PutOutcome::kExistingPending) return {ReserveOutcome::kPending, 0};
  r = table_of(hi).put(key_of(lo), DistTable::kPendingVal, &existing);
  if (r == DistTable::PutOutcome::kInserted) return {ReserveOutcome::kWon, 0};
  if (r == DistTable::PutOutcome::kExisting) return {ReserveOutcome::kValue, existing};
  if (r == DistTable::PutOutcome::kExistingPending) return {ReserveOutcome::kPending, 0};
  return {ReserveOutcome::kFull, 0};
}

void DistCache::publish(index_t i, index_t j, double d) {
  if (!enabled()) return;
  index_t lo = std::min(i, j), hi = std::max(i, j);
  if (table_of(lo).set_value(key_of(hi), d)) {
    if (table_of(hi).put(key_of(lo), d) == DistTable::PutOutcome::kExistingPending)
      table_of(hi).set_value(key_of(lo), d);
    return;
  }
  table_of(hi).set_value(key_of(lo), d);
  if (table_of(lo).put(key_of(hi), d) == DistTable::PutOutcome::kExistingPending)
    table_of(lo).set_value(key_of(hi), d);
}

double DistCache::wait_for(index_t i, index_t j) const {
  index_t lo = std::min(i, j), hi = std::max(i, j);
  for (;;) {
    bool pending = false;
    if (auto v = table_of(lo).find(key_of(hi), &pending)) return *v;
    if (pending) return table_of(lo).wait_value(key_of(hi));
    if (auto v = table_of(hi).find(key_of(lo), &pending)) return *v;
    if (pending) return table_of(hi).wait_value(key_of(lo));
    std::this_thread::yield();
  }
}

void DistCache::begin_round_update(std::uint32_t round, std::span<const Merge> pairs,
                                   std::span<const index_t> pair_of,
                                   std::span<const std::uint32_t> sizes) {
  round_ = round;
  pairs_ = pairs;
  pair_of_ = pair_of;
  sizes_ = sizes;
  if (!enabled()) return;
  pending_ = std::vector<DistTable>(pairs.size());
  for (auto& t : pending_) t.init(cap_);
}

std::optional<double> DistCache::get_old(index_t a, index_t b) const {
  if (auto v = tables_[a].find(key_of_current(b))) return v;
  return tables_[b].find(key_of_current(a));
}

double DistCache::component(index_t a, index_t b, const DirectDist& direct) const {
  if (auto v = get_old(a, b)) return *v;
  return direct(a, b);
}

double DistCache::case2_value(const Merge& p, index_t g, LinkageKind kind,
                              const DirectDist& direct) const {
  double dag = component(p.left, g, direct);
  double dbg = component(p.right, g, direct);
  return lance_williams(kind, dag, dbg, p.height, p.left_size, p.right_size, sizes_[g]);
}

double DistCache::case1_value(const Merge& p, const Merge& q, LinkageKind kind,
                              const DirectDist& direct) const {
  // Canonical orientation: collapse the pair with the smaller new id first,
  // so both racing passes derive bitwise identical values.
  const Merge& a = p.left < q.left ? p : q;
  const Merge& b = p.left < q.left ? q : p;
  double t1 = lance_williams(kind, component(a.left, b.left, direct), component(a.right, b.left, direct),
                             a.height, a.left_size, a.right_size, b.left_size);
  double t2 = lance_williams(kind, component(a.left, b.right, direct), component(a.right, b.right, direct),
                             a.height, a.left_size, a.right_size, b.right_size);
  return lance_williams(kind, t1, t2, b.height, b.left_size, b.right_size, a.size);
}

void DistCache::update_for_pair(std::size_t pair_index, LinkageKind kind, const DirectDist& direct) {
  if (!enabled()) return;
  const Merge& p = pairs_[pair_index];
  const index_t k = p.left;
  auto handle = [&](std::uint64_t key, double) {
    index_t l = static_cast<index_t>(key & 0xffffffffu);
    std::uint32_t b = static_cast<std::uint32_t>(key >> 32);
    if (l >= n_ || !alive_[l] || birth_[l] != b) return;  // stale entry
    index_t qi = pair_of_[l];
    index_t g = l;
    if (qi != kNone) {
      g = pairs_[qi].left;
      if (g == k) return;  // the merged pair's own entry
    }
    ReserveResult r = reserve(k, g);
    if (r.outcome == ReserveOutcome::kPending || r.outcome == ReserveOutcome::kValue) return;
    double d = qi != kNone ? case1_value(p, pairs_[qi], kind, direct) : case2_value(p, g, kind, direct);
    if (r.outcome == ReserveOutcome::kWon) {
      publish(k, g, d);
    } else {
      insert(k, g, d);  // both tables full; attempt anyway per the insert contract
    }
  };
  tables_[p.left].for_each(handle);
  tables_[p.right].for_each(handle);
}

void DistCache::commit_round() {
  if (enabled()) {
    for (std::size_t pi = 0; pi < pairs_.size(); ++pi) {
      tables_[pairs_[pi].left] = std::move(pending_[pi]);
      tables_[pairs_[pi].right].release();
    }
  }
  for (const Merge& m : pairs_) {
    birth_[m.left] = round_;
    alive_[m.right] = 0;
  }
  if (enabled()) {
    auto stale = [this](std::uint64_t key) {
      index_t l = static_cast<index_t>(key & 0xffffffffu);
      std::uint32_t b = static_cast<std::uint32_t>(key >> 32);
      return l >= n_ || !alive_[l] || birth_[l] != b;
    };
    std::function<bool(std::uint64_t)> stale_fn = stale;
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t id = 0; id < static_cast<std::int64_t>(n_); ++id) {
      if (!alive_[id]) continue;
      tables_[id].rebuild(stale_fn);
    }
  }
  pairs_ = {};
  pair_of_ = {};
  sizes_ = {};
  pending_.clear();
}

void DistCache::note_merge(index_t left, index_t right, std::uint32_t round) {
  birth_[left] = round;
  alive_[right] = 0;
}

}  // namespace nnchain
