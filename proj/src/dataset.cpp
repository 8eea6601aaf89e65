#include "nnchain/dataset.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace nnchain {

namespace {

// Uniform in [0, 1). The explicit 53-bit conversion keeps generated datasets
// bit-identical across standard library implementations.
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller, again avoiding library distributions so the
// stream is reproducible everywhere. u1 lands in (0, 1] to keep log finite.
class GaussianSource {
 public:
  explicit GaussianSource(std::mt19937_64& gen) : gen_(gen) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01(gen_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64& gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

PointSet gen_uniform(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_uniform: n must be at least 1");
  if (d == 0) throw std::invalid_argument("gen_uniform: dimension must be at least 1");
  const double side = std::sqrt(static_cast<double>(n));
  std::mt19937_64 gen(seed);
  std::vector<double> coords(n * d);
  for (double& c : coords) c = side * uniform01(gen);
  return PointSet(n, d, std::move(coords));
}

PointSet gen_gaussian_disc(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("gen_gaussian_disc: n must be at least 10");
  if (d == 0) throw std::invalid_argument("gen_gaussian_disc: dimension must be at least 1");
  constexpr std::size_t kBlobs = 5;
  const double side = 5.0 * std::sqrt(static_cast<double>(n));
  const double sigma = std::sqrt(static_cast<double>(n)) / 6.0;
  const std::size_t n_blob = n * 9 / 10;

  std::mt19937_64 gen(seed);
  GaussianSource gauss(gen);

  std::vector<double> means(kBlobs * d);
  for (double& m : means) m = side * uniform01(gen);

  std::vector<double> coords;
  coords.reserve(n * d);
  for (std::size_t b = 0; b < kBlobs; ++b) {
    const std::size_t count = n_blob / kBlobs + (b < n_blob % kBlobs ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t k = 0; k < d; ++k)
        coords.push_back(means[b * d + k] + sigma * gauss.next());
  }
  for (std::size_t i = n_blob; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) coords.push_back(side * uniform01(gen));
  return PointSet(n, d, std::move(coords));
}

}  // namespace nnchain
