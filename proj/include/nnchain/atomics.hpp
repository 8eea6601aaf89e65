#pragma once

#include <atomic>
#include <cstdint>
#include <limits>

#include "nnchain/points.hpp"

namespace nnchain {

// (distance, id) pair ordered lexicographically; smaller distance wins,
// ties broken towards the smaller id. Used for priority writes.
struct IdDist {
  double dist;
  index_t id;

  bool better_than(const IdDist& o) const {
    return dist < o.dist || (dist == o.dist && id < o.id);
  }
  static IdDist none() { return {std::numeric_limits<double>::infinity(), kNone}; }
  bool valid() const { return id != kNone; }
};

// Atomic priority cell over a 16-byte (double, id) payload. write_min keeps the
// lexicographic minimum of everything written since the last reset; concurrent
// writers commute, so the final content is schedule-independent.
class AtomicIdDist {
 public:
  AtomicIdDist() { reset(); }
  AtomicIdDist(const AtomicIdDist& o) { v_.store(o.v_.load(std::memory_order_relaxed), std::memory_order_relaxed); }

  void reset() { v_.store(pack(IdDist::none()), std::memory_order_relaxed); }

  IdDist load() const { return unpack(v_.load(std::memory_order_acquire)); }

  // Returns true if this write became the new minimum.
  bool write_min(double dist, index_t id) {
    Payload desired = pack({dist, id});
    Payload cur = v_.load(std::memory_order_relaxed);
    while (less(desired, cur)) {
      if (v_.compare_exchange_weak(cur, desired, std::memory_order_acq_rel)) return true;
    }
    return false;
  }

 private:
  struct Payload {
    double dist;
    std::uint64_t id;  // widened so the struct is exactly 16 bytes, no padding
  };
  static_assert(sizeof(Payload) == 16);

  static Payload pack(IdDist x) { return {x.dist, x.id}; }
  static IdDist unpack(Payload p) { return {p.dist, static_cast<index_t>(p.id)}; }
  static bool less(const Payload& a, const Payload& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
  }

  std::atomic<Payload> v_;
};

// Atomic running maximum of a nonnegative double.
class AtomicMaxDouble {
 public:
  AtomicMaxDouble() : v_(-1.0) {}
  void reset() { v_.store(-1.0, std::memory_order_relaxed); }
  double load() const { return v_.load(std::memory_order_acquire); }
  void write_max(double x) {
    double cur = v_.load(std::memory_order_relaxed);
    while (x > cur) {
      if (v_.compare_exchange_weak(cur, x, std::memory_order_acq_rel)) return;
    }
  }

 private:
  std::atomic<double> v_;
};

}  // namespace nnchain
