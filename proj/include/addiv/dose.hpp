#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "bootstrap.hpp"
#include "common.hpp"
#include "csv.hpp"
#include "data.hpp"
#include "nuisance.hpp"
#include "weighting.hpp"

namespace addiv {

// Plug-in of the continuous-treatment ratio formula at A = a0. Conditioning on A = a0 is
// localized by Gaussian kernel weights in A (local-constant); h = scale * sd(A) * n^(-1/5).
inline double dose_plug_in(const PointDataset& data, double a0, const WeightingFunctionSpec& pi,
                           const EstimatorConfig& cfg, double bandwidth = 0.0) {
  if (!data.continuous_treatment()) throw InvalidArgument("dose estimator requires a continuous treatment");
  const Index n = data.n();
  const double h = bandwidth > 0 ? bandwidth
                                 : cfg.regressor.bandwidth_scale * sample_sd(data.a()) *
                                       std::pow(static_cast<double>(n), -0.2);
  if (!(h > 0)) throw InvalidArgument("dose bandwidth is zero: treatment is constant");
  const Eigen::VectorXd p = pi.evaluate_fixed(data.z(), data.l());
  const Eigen::VectorXd k = ((data.a().array() - a0) / h).square().unaryExpr([](double v) { return std::exp(-0.5 * v); });
  if (!(k.sum() > 0)) throw InvalidArgument("no observations near a0 = " + std::to_string(a0));
  const RegressorSpec spec = cfg.regressor.with_link(Link::Identity).with_tensor(false);
  Eigen::MatrixXd local(n, 3);
  local << data.y().cwiseProduct(p), data.y(), p;
  const auto m = fit_conditional_means(data.l(), local, spec, &k);
  const auto r = fit_conditional_mean(data.l(), p, spec);
  const Eigen::VectorXd myp = m[0].predict(data.l()), my = m[1].predict(data.l()), mp = m[2].predict(data.l()),
                        rp = r.predict(data.l());
  const double floor = cfg.kappa_tau * sample_sd(p);
  if (!(floor > 0)) throw WeakInstrumentError("weak instrument: weighting function is constant", 1.0);
  Index floored = 0;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    double den = mp(i) - rp(i);
    if (!(std::abs(den) > floor)) {
      den = den < 0 ? -floor : floor;
      ++floored;
    }
    total += (myp(i) - my(i) * rp(i)) / den;
  }
  const double frac = static_cast<double>(floored) / static_cast<double>(n);
  if (frac > cfg.max_floor_fraction)
    throw WeakInstrumentError("weak instrument: dose denominator floored at " + std::to_string(frac * 100.0) +
                                  "% of covariate points",
                              frac);
  return total / static_cast<double>(n);
}

// Variance by pairs bootstrap only.
inline EstimateReport estimate_dose_response(const PointDataset& data, double a0, const WeightingFunctionSpec& pi,
                                             std::uint64_t seed, const EstimatorConfig& cfg = {}, int B = 200,
                                             double bandwidth = 0.0) {
  if (data.n() < cfg.min_n)
    throw InvalidArgument("need at least " + std::to_string(cfg.min_n) + " observations, have " + std::to_string(data.n()));
  const double psi = dose_plug_in(data, a0, pi, cfg, bandwidth);
  const auto boot = pairs_bootstrap(
      [&](const PointDataset& d, std::uint64_t) { return dose_plug_in(d, a0, pi, cfg, bandwidth); }, data, B, seed);
  const double n = static_cast<double>(data.n());
  auto rep = make_report("E[Y(a=" + format_double(a0) + ")] [dose plug-in, " + pi.describe() + "]", psi,
                         boot.sd * boot.sd * n, data.n(), 0, seed);
  rep.variance_method = "bootstrap";
  rep.diagnostics["bootstrap_reps"] = B;
  rep.diagnostics["bootstrap_failures"] = boot.failures;
  return rep;
}

}  // namespace addiv
