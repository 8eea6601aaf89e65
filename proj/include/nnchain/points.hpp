#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nnchain {

using index_t = std::uint32_t;
inline constexpr index_t kNone = static_cast<index_t>(-1);

// Dense row-major point set: n points of dimension d.
struct PointSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> coords;  // n*d values

  PointSet() = default;
  PointSet(std::size_t n_, std::size_t d_, std::vector<double> c)
      : n(n_), d(d_), coords(std::move(c)) {
    if (n == 0 || d == 0) throw std::invalid_argument("point set must be non-empty");
    if (coords.size() != n * d) throw std::invalid_argument("coordinate count mismatch");
    for (double v : coords)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite coordinate");
  }

  const double* row(index_t i) const { return coords.data() + std::size_t(i) * d; }
  double* row(index_t i) { return coords.data() + std::size_t(i) * d; }
};

inline double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) {
    double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

inline double euclid_dist(const double* a, const double* b, std::size_t d) {
  return std::sqrt(sq_dist(a, b, d));
}

}  // namespace nnchain
