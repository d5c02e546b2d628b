#pragma once

#include <cstdint>
#include <random>

namespace aftmed {

// Deterministic random stream addressed by (seed, stream). Streams derived
// from one seed are independent work-item generators: replicate r of a
// simulation uses stream r, so results do not depend on scheduling order or
// worker count. All variates are produced from explicit 53-bit uniforms, so
// sequences are identical across platforms with the same IEEE doubles.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  // Strictly inside (0, 1).
  double uniform();

  // Uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via inverse CDF of a uniform().
  double normal();

  // Standard minimum extreme value via inverse CDF: log(-log(1 - U)).
  double gumbel_min();

 private:
  std::mt19937_64 engine_;
};

}  // namespace aftmed
