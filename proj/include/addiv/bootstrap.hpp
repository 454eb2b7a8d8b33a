#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "regime.hpp"
#include "rng.hpp"

namespace addiv {

struct BootstrapResult {
  int B = 0;
  int failures = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_lower = 0.0;  // 2.5% percentile
  double ci_upper = 0.0;  // 97.5% percentile
  std::vector<double> values;
};

inline constexpr int kMinBootstrapReps = 50;

// Row indices of replicate b: n draws with replacement from its own stream.
inline Rows bootstrap_rows(Index n, std::uint64_t seed, int b) {
  CounterRng rng(seed, Stream::Bootstrap, static_cast<std::uint64_t>(b));
  Rows rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  return rows;
}

inline BootstrapResult summarize_bootstrap(std::vector<double> values, int B) {
  BootstrapResult r;
  r.B = B;
  r.failures = B - static_cast<int>(values.size());
  if (values.size() < 2) throw Error("bootstrap failed: fewer than two replicates succeeded");
  const double m = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  r.mean = m;
  r.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  r.ci_lower = empirical_quantile(values, 0.025);
  r.ci_upper = empirical_quantile(values, 0.975);
  r.values = std::move(values);
  return r;
}

// Pairs bootstrap: resample rows with replacement and rerun the estimator (nuisances refit).
// estimator(resampled_data, replicate_seed) -> double. Replicates raising Error are counted as failures.
template <class Data, class Estimator>
BootstrapResult pairs_bootstrap(Estimator&& estimator, const Data& data, int B, std::uint64_t seed) {
  if (B < kMinBootstrapReps)
    throw InvalidArgument("bootstrap needs at least " + std::to_string(kMinBootstrapReps) + " replicates, got " +
                          std::to_string(B));
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const Data boot = data.subset(bootstrap_rows(data.n(), seed, b));
    try {
      values.push_back(estimator(boot, splitmix64(seed + static_cast<std::uint64_t>(b))));
    } catch (const InvalidArgument&) {
      throw;
    } catch (const Error&) {
    }
  }
  return summarize_bootstrap(std::move(values), B);
}

}  // namespace addiv
