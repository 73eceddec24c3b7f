#ifndef MODELSMC_RNG_HPP
#define MODELSMC_RNG_HPP

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace modelsmc {

// Counter-based stream: a fixed 64-bit key derived from (seed, iteration,
// particle, purpose) plus a draw counter, mixed through splitmix64. Streams
// with equal derivation paths produce equal sequences; derivation is pure,
// so particles can be evaluated in any order or in parallel.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix(seed ^ kRootSalt)) {}

  RngStream derive(std::uint64_t iteration, std::uint64_t particle,
                   std::string_view purpose) const {
    std::uint64_t k = key_;
    k = mix(k ^ mix(iteration + 0x9e3779b97f4a7c15ull));
    k = mix(k ^ mix(particle + 0x3c6ef372fe94f82aull));
    k = mix(k ^ fnv1a(purpose));
    RngStream out(*this);
    out.key_ = k;
    out.counter_ = 0;
    out.has_spare_normal_ = false;
    return out;
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on {lo, ..., hi} inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection against the largest multiple of span to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t u;
    do {
      u = next_u64();
    } while (u >= limit);
    return lo + static_cast<std::int64_t>(u % span);
  }

  // Marsaglia polar method with one cached spare.
  double normal() {
    if (has_spare_normal_) {
      has_spare_normal_ = false;
      return spare_normal_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * f;
    has_spare_normal_ = true;
    return u * f;
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Bernoulli-sum for small n, halving recursion for large n (the sum of two
  // independent binomials with half the trials is exact in distribution).
  std::int64_t binomial(std::int64_t n, double p) {
    if (n <= 0) return 0;
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (n > 4096) return binomial(n / 2, p) + binomial(n - n / 2, p);
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      count += uniform() < p ? 1 : 0;
    }
    return count;
  }

  // Knuth multiplication below lambda = 30, additive splitting above.
  std::int64_t poisson(double lambda) {
    if (!(lambda > 0.0)) return 0;
    if (lambda > 30.0) return poisson(lambda / 2.0) + poisson(lambda - lambda / 2.0);
    const double limit = std::exp(-lambda);
    std::int64_t k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  // k-subset of {0, ..., n-1} without replacement, order of selection.
  std::vector<std::size_t> subset(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k && !pool.empty(); ++i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
      out.push_back(pool[j]);
      pool[j] = pool.back();
      pool.pop_back();
    }
    return out;
  }

 private:
  static constexpr std::uint64_t kRootSalt = 0x8f1b5a3d2c9e7041ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

}  // namespace modelsmc

#endif  // MODELSMC_RNG_HPP
