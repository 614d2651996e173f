#pragma once

#include <cstdint>
#include <random>

namespace pmm {

// Stateless 64-bit mixing (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive an independent stream key from (seed, replicate, block). Streams are
// addressed by counter, so replicate k can be regenerated without drawing
// replicates 0..k-1 first.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replicate = 0,
                                   std::uint64_t block = 0) {
  return mix64(mix64(mix64(seed) ^ replicate) ^ (block * 0xd1b54a32d192ed03ULL));
}

class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 1, std::uint64_t replicate = 0, std::uint64_t block = 0)
      : engine_(stream_key(seed, replicate, block)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    } while (u == 0.0);
    return u;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double exponential() { return exponential_(engine_); }
  // Index in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
};

}  // namespace pmm
