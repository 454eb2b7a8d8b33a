#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace addiv {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr double kZ975 = 1.959963984540054;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

// Raised when the fitted conditional covariance between the treatment indicator
// and the weighting function is floored on too many evaluation points.
class WeakInstrumentError : public Error {
public:
  WeakInstrumentError(const std::string& what, double fraction)
      : Error(what), fraction_(fraction) {}
  double fraction() const noexcept { return fraction_; }

private:
  double fraction_;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// FNV-1a, used for config hashes and cache keys.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace addiv
