#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace edo {

/// Named stream components. Every random draw in the library comes from a
/// stream keyed by (global seed, component, a, b, c).
enum class Stream : std::uint64_t {
  kTask = 1,
  kRollout = 2,
  kPairs = 3,
  kMinibatch = 4,
  kEvalSc = 5,
  kEvalBon = 6,
  kEntropy = 7,
  kRewardModel = 8,
  kSearch = 9,
  kInit = 10,
  kDiversity = 11,
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t seed, Stream component, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0);

/// Platform-independent random stream. Uniforms are built from raw engine bits
/// rather than std::uniform_real_distribution, whose output is
/// implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t seed, Stream component, std::uint64_t a = 0, std::uint64_t b = 0,
            std::uint64_t c = 0)
      : engine_(derive_seed(seed, component, a, b, c)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::uint64_t>((static_cast<u128>(engine_()) * n) >> 64);
  }

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace edo
