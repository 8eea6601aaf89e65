#pragma once

#include <cstdint>

#include "nnchain/points.hpp"

namespace nnchain {

// n i.i.d. points uniform in [0, sqrt(n)]^d. Deterministic per seed.
PointSet gen_uniform(std::size_t n, std::size_t d, std::uint64_t seed);

// Mixture benchmark: 90% of the points split evenly across five Gaussian
// blobs whose means are uniform in [0, 5*sqrt(n)]^d, offsets drawn with
// sigma = sqrt(n)/6 per coordinate (a blob diameter of sqrt(n) then bounds
// about 99.7% of its mass); the remaining 10% are uniform background over
// the same grid. Blob points come first. Requires n >= 10.
PointSet gen_gaussian_disc(std::size_t n, std::size_t d, std::uint64_t seed);

}  // namespace nnchain
