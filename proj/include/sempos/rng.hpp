#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sempos {

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a over the bytes of `text`.
std::uint64_t hash_string(std::string_view text);

// Seeded random stream. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the distributions are implemented here rather than
// taken from <random> so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 42);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (one draw per call, the pair is not cached).
  double normal();

  // Independent stream derived from this stream's seed and a name. Derivation
  // does not advance this stream.
  Rng substream(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sempos
