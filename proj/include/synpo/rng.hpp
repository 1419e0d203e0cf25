// Deterministic random number generation. All randomness in the project goes
// through Rng so that runs are reproducible across platforms; std::mt19937_64
// output is standardized, the std::*_distribution wrappers are not, so we
// derive values from raw 64-bit draws ourselves.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace synpo {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mix an arbitrary list of stream identifiers into one seed.
inline uint64_t derive_seed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x8f1bbcdcbfa53e0bULL;
  for (uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  // Uniform in [0, n). Modulo bias is < n / 2^64, far below anything our
  // statistical tests can resolve.
  int below(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::below: n must be positive");
    return static_cast<int>(u64() % static_cast<uint64_t>(n));
  }

  // Uniform double in [0, 1) with 53 random bits.
  double real01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * real01(); }

  bool bernoulli(double p) { return real01() < p; }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw std::invalid_argument("Rng::pick: empty vector");
    return v[below(static_cast<int>(v.size()))];
  }

  // Sample k distinct values from [0, n) (partial Fisher-Yates).
  std::vector<int> sample_distinct(int n, int k) {
    if (k > n) throw std::invalid_argument("Rng::sample_distinct: k > n");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) std::swap(idx[i], idx[i + below(n - i)]);
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace synpo
