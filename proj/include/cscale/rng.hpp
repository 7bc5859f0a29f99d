#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace cscale {

// Deterministic random source. A self-contained generator with hand-rolled
// sampling (no std::*_distribution) so that a given seed produces the same
// stream on every standard library; run reproducibility depends on it.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed)), inc_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull) | 1) {}

  uint64_t next_u64() {
    // xorshift128+ style step over two splitmix-derived words.
    uint64_t x = state_;
    uint64_t y = inc_;
    state_ = y;
    x ^= x << 23;
    inc_ = x ^ y ^ (x >> 17) ^ (y >> 26);
    return inc_ + y;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller without caching; two uniform draws per sample keeps the
  // stream position independent of call history.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  // Derive an independent deterministic stream, e.g. one per iteration.
  Rng split(uint64_t stream) const { return Rng(splitmix64(state_ ^ splitmix64(stream + 0x632be59bd9b4e019ull))); }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

private:
  uint64_t state_;
  uint64_t inc_;
};

}  // namespace cscale
