#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fedmcp {

// Deterministic 64-bit generator (splitmix64). Hand-rolled so that streams
// are identical across standard-library implementations, which keeps golden
// files and cross-run diffs stable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Modulo bias is ~n/2^64, irrelevant at the
  // ranges used here and keeps the stream trivially reproducible.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; caches the second variate.
  double next_gaussian();

  // Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& idx);

 private:
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Derives an independent child seed from (seed, tag[, index]). Used to give
// every client, round, and subsystem its own stream so that parallel and
// sequential execution see identical randomness.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

}  // namespace fedmcp
