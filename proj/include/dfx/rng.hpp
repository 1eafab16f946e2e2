#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace dfx {

// splitmix64 stream. Every consumer (tree, fold, bootstrap replicate,
// Monte Carlo rep) owns a stream derived from the master seed, so thread
// scheduling can never reorder draws.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform on [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1), safe for log()
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // uniform on [0, n), unbiased
  int next_below(int n) {
    assert(n > 0);
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

  // standard normal, Box-Muller with cached spare
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double u = next_open01();
    const double v = next_open01();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(kTwoPi * v);
    has_spare_ = true;
    return r * std::cos(kTwoPi * v);
  }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic child-stream derivation: mixes the salts through the
// splitmix64 finalizer so streams with different salts are uncorrelated.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt_a, uint64_t salt_b = 0) {
  Rng r0(seed);
  uint64_t h = r0.next_u64();
  Rng r1(h ^ (salt_a * 0xd1342543de82ef95ull));
  h = r1.next_u64();
  Rng r2(h ^ (salt_b * 0xaf251af3b0f025b5ull));
  return r2.next_u64();
}

inline void shuffle(std::vector<int>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    std::swap(v[i], v[rng.next_below(i + 1)]);
  }
}

// k distinct indices from [0, n), returned sorted ascending
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  assert(k >= 0 && k <= n);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.next_below(n - i)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace dfx
