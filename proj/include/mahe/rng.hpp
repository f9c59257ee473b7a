#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace mahe {

/// Counter-based seed split: one master seed deterministically yields an
/// independent seed per (stream) stage. splitmix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed streams for pipeline stages hung off one master seed.
namespace seed_stream {
constexpr std::uint64_t sampler = 1;
constexpr std::uint64_t detector_net = 2;
constexpr std::uint64_t linear_fit = 3;
constexpr std::uint64_t probes = 4;
constexpr std::uint64_t base_model = 5;
constexpr std::uint64_t glm = 6;
constexpr std::uint64_t edit = 7;
constexpr std::uint64_t interaction_level0 = 100;  // +k for level k
constexpr std::uint64_t trial0 = 1000;             // +t for trial t
constexpr std::uint64_t instance0 = 2000;          // +i for instance i
}  // namespace seed_stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

  double uniform(double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(gen_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

  /// Uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t integer(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(gen_);
  }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mahe
