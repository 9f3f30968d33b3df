#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace macr {

// One master seed derives every other seed through this chain:
//   derive_seed(master, tag) = splitmix64(master ^ fnv1a64(tag))
// Tags used by the pipeline: "fold", "kmeans", "nonce".
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

// Portable generator. std::*_distribution output is implementation defined,
// so everything that feeds golden files goes through these helpers instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform in [0, bound), rejection sampled.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
};

}  // namespace macr
