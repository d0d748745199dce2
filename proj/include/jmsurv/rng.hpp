#pragma once

#include <cstdint>
#include <limits>

namespace jmsurv {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of `seed` (chains, patients, draws).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Counter-based generator: the output is a pure function of
/// (seed, stream, substream, counter), so independent streams can be created
/// per (draw, patient) without sharing state between threads.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0)
      : key_(derive_seed(derive_seed(seed, stream), substream)) {}

  constexpr result_type operator()() {
    ++counter_;
    return splitmix64(key_ + counter_ * 0xD1B54A32D192ED03ULL);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Uniform on the open interval (0, 1) from 53 random bits.
template <class Rng>
double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace jmsurv
