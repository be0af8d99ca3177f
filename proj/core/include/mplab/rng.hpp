#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace mplab::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Combines two values into a well-mixed stream key. Used to derive
// independent per-(entity, step) streams from a single run seed.
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return finalize(a + kGolden * (b + 0x51afd7ed558ccd6dull));
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                         std::uint64_t d) {
  return mix(mix(a, b, c), d);
}

// SplitMix64 counter generator. Stateful but cheap to fork: any derived
// stream is fully determined by its seed, independent of call order in
// other streams.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return finalize(state_);
  }

  // Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller. Avoids std::normal_distribution, whose
  // output differs between standard library implementations.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Index drawn from a discrete distribution. Weights must be nonnegative
  // and sum to approximately 1; rounding shortfall goes to the last index.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: no options");
    const double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates shuffle driven by a SplitMix64 stream.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = gen.next_u64() % i;
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace mplab::rng
