#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bootstrap.hpp"
#include "common.hpp"
#include "data.hpp"
#include "nuisance.hpp"
#include "point.hpp"
#include "regime.hpp"
#include "weighting.hpp"

namespace addiv {

// ---------- AIV check: two weighting functions should identify the same ATE ----------

struct AivDiagnostic {
  std::string pi1, pi2;
  double psi1 = 0.0, psi2 = 0.0, difference = 0.0;
  double boot_sd = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  int B = 0;
  int failures = 0;
};

inline AivDiagnostic diagnose_aiv(const PointDataset& data, const WeightingFunctionSpec& pi1,
                                  const WeightingFunctionSpec& pi2, int K, std::uint64_t seed,
                                  const EstimatorConfig& cfg = {}, int B = 200) {
  AivDiagnostic out;
  out.pi1 = pi1.describe();
  out.pi2 = pi2.describe();
  out.psi1 = estimate_ate_fixed_pi(data, pi1, K, seed, cfg).psi_hat;
  out.psi2 = estimate_ate_fixed_pi(data, pi2, K, seed, cfg).psi_hat;
  out.difference = out.psi1 - out.psi2;
  out.B = B;
  if (out.pi1 == out.pi2) {
    if (B < kMinBootstrapReps) throw InvalidArgument("bootstrap needs at least " + std::to_string(kMinBootstrapReps) + " replicates");
    return out;
  }
  const auto boot = pairs_bootstrap(
      [&](const PointDataset& d, std::uint64_t s) {
        return estimate_ate_fixed_pi(d, pi1, K, s, cfg).psi_hat - estimate_ate_fixed_pi(d, pi2, K, s, cfg).psi_hat;
      },
      data, B, seed);
  out.boot_sd = boot.sd;
  out.failures = boot.failures;
  out.statistic = boot.sd > 0 ? out.difference / boot.sd : 0.0;
  out.p_value = boot.sd > 0 ? 2.0 * normal_cdf(-std::abs(out.statistic)) : (out.difference == 0.0 ? 1.0 : 0.0);
  return out;
}

// ---------- latent confounding: f_a(0, L) = E[A^(a) Y | Z, L] - gamma_pi(L) E[A^(a) | Z, L] ----------

struct ConfoundingBin {
  double l_lower = 0.0, l_upper = 0.0;
  Index count = 0;
  double mean = 0.0;
};

struct ConfoundingDiagnostic {
  int level = 1;
  std::string pi;
  double mean = 0.0;
  double boot_sd = 0.0;
  double band_lower = 0.0, band_upper = 0.0;
  int B = 0;
  std::vector<ConfoundingBin> bins;  // quintiles of the first covariate
  Eigen::VectorXd f0;               // cross-fitted per-observation values
};

// Cross-fitted per-observation f_a(0, L_i, Z_i); under the model it does not vary with Z.
inline Eigen::VectorXd latent_confounding_values(const PointDataset& data, int a, const WeightingFunctionSpec& pi,
                                                 int K, std::uint64_t seed, const EstimatorConfig& cfg) {
  detail::require_point(data, cfg, false);
  detail::require_level(data, a);
  const auto folds = make_folds(data.n(), K, seed);
  const Eigen::VectorXd d = data.indicator(a);
  const Eigen::VectorXd w = d.cwiseProduct(data.y());
  const Eigen::MatrixXd zx = detail::join(data.z(), data.l());
  Eigen::VectorXd f(data.n());
  for (int k = 0; k < K; ++k) {
    const Rows train = folds.complement(k), eval = folds.rows(k);
    const Eigen::VectorXd p = evaluate_weight(pi, data, a, train, cfg.regressor);
    const auto bundle = fit_fixed_pi_bundle(data.l()(train, Eigen::all), d(train), w(train), p(train), cfg);
    const auto ev = bundle.evaluate(data.l());
    check_floor(ev.floored, static_cast<Index>(eval.size()), cfg, "fold " + std::to_string(k));
    Eigen::MatrixXd targets(static_cast<Index>(train.size()), 2);
    targets << d(train), w(train);
    const auto m = fit_conditional_means(zx(train, Eigen::all), targets,
                                         cfg.regressor.with_link(Link::Identity).with_tensor(true));
    const Eigen::VectorXd pz = m[0].predict(zx), xz = m[1].predict(zx);
    for (Index i : eval) f(i) = xz(i) - ev.values[static_cast<std::size_t>(i)].gamma * pz(i);
  }
  return f;
}

inline ConfoundingDiagnostic diagnose_latent_confounding(const PointDataset& data, int a, const WeightingFunctionSpec& pi,
                                                         int K, std::uint64_t seed, const EstimatorConfig& cfg = {},
                                                         int B = 200) {
  ConfoundingDiagnostic out;
  out.level = a;
  out.pi = pi.describe();
  out.f0 = latent_confounding_values(data, a, pi, K, seed, cfg);
  out.mean = out.f0.mean();
  out.B = B;
  if (data.l_dim() > 0) {
    std::vector<double> lv(data.l().col(0).data(), data.l().col(0).data() + data.n());
    std::vector<double> cuts;
    for (int q = 0; q <= 5; ++q) cuts.push_back(empirical_quantile(lv, q / 5.0));
    for (int b = 0; b < 5; ++b) {
      ConfoundingBin bin{cuts[static_cast<std::size_t>(b)], cuts[static_cast<std::size_t>(b) + 1], 0, 0.0};
      for (Index i = 0; i < data.n(); ++i) {
        const double x = data.l()(i, 0);
        if (x >= bin.l_lower && (x < bin.l_upper || (b == 4 && x <= bin.l_upper))) {
          bin.mean += out.f0(i);
          ++bin.count;
        }
      }
      if (bin.count > 0) bin.mean /= static_cast<double>(bin.count);
      out.bins.push_back(bin);
    }
  } else {
    out.bins.push_back({0.0, 0.0, data.n(), out.mean});
  }
  const auto boot = pairs_bootstrap(
      [&](const PointDataset& d, std::uint64_t s) { return latent_confounding_values(d, a, pi, K, s, cfg).mean(); }, data,
      B, seed);
  out.boot_sd = boot.sd;
  out.band_lower = boot.ci_lower;
  out.band_upper = boot.ci_upper;
  return out;
}

// ---------- discretized instrument ----------

// Replaces instrument column `column` by its cell index under the sorted cutpoints and drops
// the other instrument columns.
inline PointDataset discretize_instrument(const PointDataset& data, std::vector<double> cutpoints, int column = 0) {
  if (column < 0 || column >= data.z_dim()) throw InvalidArgument("instrument column out of range");
  std::sort(cutpoints.begin(), cutpoints.end());
  const std::size_t cells = cutpoints.size() + 1;
  if (cells < 2) throw InvalidArgument("partition has a single cell: a one-cell instrument has no relevance");
  Eigen::MatrixXd z(data.n(), 1);
  std::vector<Index> count(cells, 0);
  for (Index i = 0; i < data.n(); ++i) {
    const auto m = static_cast<std::size_t>(std::upper_bound(cutpoints.begin(), cutpoints.end(), data.z()(i, column)) -
                                            cutpoints.begin());
    z(i, 0) = static_cast<double>(m);
    ++count[m];
  }
  for (std::size_t m = 0; m < cells; ++m)
    if (count[m] == 0) throw InvalidArgument("instrument cell " + std::to_string(m) + " is empty");
  if (!data.continuous_treatment()) {
    for (int a = 0; a < data.treatment_levels(); ++a) {
      std::vector<double> rate(cells, 0.0);
      for (Index i = 0; i < data.n(); ++i) rate[static_cast<std::size_t>(z(i, 0))] += data.level(i) == a;
      for (std::size_t m = 0; m < cells; ++m) rate[m] /= static_cast<double>(count[m]);
      if (*std::max_element(rate.begin(), rate.end()) == *std::min_element(rate.begin(), rate.end()))
        throw InvalidArgument("discretized instrument is not relevant: Pr(A=" + std::to_string(a) +
                              ") is identical in every cell");
    }
  }
  return data.with_instrument(z);
}

}  // namespace addiv
