#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mmpd {

// splitmix64 mix; derives independent per-stream seeds from a master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Seedable RNG with hand-rolled distributions. std::mt19937_64 output is
// fully specified by the standard; the distributions in <random> are not,
// so drawing from the raw engine keeps results identical across toolchains.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  // Uniform in [0, n); unbiased via rejection.
  int uniform_int(int n);

  // Draws an index from a probability vector (assumed to sum to ~1).
  int categorical(std::span<const double> probs);

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace mmpd
