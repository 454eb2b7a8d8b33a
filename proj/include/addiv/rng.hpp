#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace addiv {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream tags keep independent consumers of one seed apart.
enum class Stream : std::uint64_t {
  Data = 1,
  Folds = 2,
  Bootstrap = 3,
  Truth = 4,
  Oracle = 5,
};

// Counter-based generator: draw j of stream s under seed k is a pure function of (k, s, j).
class CounterRng {
public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0xD1B54A32D192ED03ULL + 1))) {}
  CounterRng(std::uint64_t seed, Stream tag, std::uint64_t sub = 0)
      : CounterRng(splitmix64(seed ^ (static_cast<std::uint64_t>(tag) << 56)), sub) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + splitmix64(counter_++)); }

  std::uint64_t counter() const { return counter_; }

  // Uniform on the open interval (0, 1).
  double uniform() { return ((*this)() >> 11) * 0x1.0p-53 + 0x1.0p-54; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(*this);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(*this);
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace addiv
