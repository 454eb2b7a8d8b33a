#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "regression.hpp"
#include "scores.hpp"
#include "weighting.hpp"

namespace addiv {

struct EstimatorConfig {
  RegressorSpec regressor;
  // |kappa| below tau * sd(pi) * sd(d) is floored.
  double kappa_tau = 0.05;
  double max_floor_fraction = 0.2;
  // Longitudinal pseudo-outcomes are winsorized at median +- winsor_iqr * IQR; <= 0 disables.
  double winsor_iqr = 50.0;
  int min_n = 50;
};

inline nlohmann::json to_json(const EstimatorConfig& c) {
  return {{"regressor", to_json(c.regressor)},
          {"kappa_tau", c.kappa_tau},
          {"max_floor_fraction", c.max_floor_fraction},
          {"winsor_iqr", c.winsor_iqr},
          {"min_n", c.min_n}};
}

inline double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

struct NuisanceEvaluation {
  Index floored = 0;
};

// Fixed-pi bundle. With r = pi - rho_hat, kappa = F[d r] - delta F[r] and gamma kappa = F[w r] - eta F[r]:
// covariances of the residualized weight. A difference of two raw fits changes sign where both are
// extrapolated; subtracting F[r] keeps gamma exactly 0 for constant w.
class FixedPiNuisanceBundle {
public:
  ConditionalMeanModel delta, eta, rho, res, dres, wres;
  double floor = 0.0;

  struct Evaluation : NuisanceEvaluation {
    std::vector<FixedPiValues> values;
  };

  Evaluation evaluate(const Eigen::MatrixXd& x) const {
    Evaluation out;
    const Eigen::VectorXd de = delta.predict(x), et = eta.predict(x), rh = rho.predict(x), rr = res.predict(x),
                          dr = dres.predict(x), wr = wres.predict(x);
    out.values.resize(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      auto& v = out.values[static_cast<std::size_t>(i)];
      v.delta = de(i);
      v.eta = et(i);
      v.rho = rh(i);
      v.kappa = dr(i) - de(i) * rr(i);
      if (!(std::abs(v.kappa) > floor)) {
        v.kappa = v.kappa < 0 ? -floor : floor;
        ++out.floored;
      }
      v.gamma = (wr(i) - et(i) * rr(i)) / v.kappa;
    }
    return out;
  }
};

inline double kappa_floor(const Eigen::VectorXd& pi, const Eigen::VectorXd& d, double tau) {
  const double f = tau * sample_sd(pi) * sample_sd(d);
  if (!(f > 0))
    throw WeakInstrumentError("weak instrument: weighting function or treatment indicator is constant on the training rows", 1.0);
  return f;
}

// x: conditioning inputs (L or H_t) on training rows; d, w, pi on the same rows.
inline FixedPiNuisanceBundle fit_fixed_pi_bundle(const Eigen::MatrixXd& x, const Eigen::VectorXd& d,
                                                 const Eigen::VectorXd& w, const Eigen::VectorXd& pi,
                                                 const EstimatorConfig& cfg) {
  FixedPiNuisanceBundle b;
  b.floor = kappa_floor(pi, d, cfg.kappa_tau);
  const RegressorSpec spec = cfg.regressor.with_link(Link::Identity).with_tensor(false);
  Eigen::MatrixXd targets(x.rows(), 3);
  targets << d, w, pi;
  auto m = fit_conditional_means(x, targets, spec);
  b.delta = std::move(m[0]);
  b.eta = std::move(m[1]);
  b.rho = std::move(m[2]);
  const Eigen::VectorXd r = pi - b.rho.predict(x);
  Eigen::MatrixXd res(x.rows(), 3);
  res << r, d.cwiseProduct(r), w.cwiseProduct(r);
  auto mr = fit_conditional_means(x, res, spec);
  b.res = std::move(mr[0]);
  b.dres = std::move(mr[1]);
  b.wres = std::move(mr[2]);
  return b;
}

// Adaptive bundle: pi = E[d | Z, L] (clipped), kappa = E[(pi - delta)^2 | L], xi = E[w | Z, L].
// gamma = (F[w r] - eta F[r]) / (F[d r] - delta F[r]) with r = pi - F[pi], as in the fixed-pi bundle.
class AdaptiveNuisanceBundle {
public:
  ConditionalMeanModel pi, xi, delta, eta, mpi, res, dres, wres, kappa;
  double clip = 0.01;
  double floor = 0.0;

  struct Evaluation : NuisanceEvaluation {
    std::vector<AdaptiveValues> values;
  };

  Eigen::VectorXd propensity(const Eigen::MatrixXd& zx) const {
    return pi.predict(zx).cwiseMax(clip).cwiseMin(1.0 - clip);
  }

  // zx = [Z^pi, x], x = conditioning inputs.
  Evaluation evaluate(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& x) const {
    Evaluation out;
    const Eigen::VectorXd raw = pi.predict(zx), p = propensity(zx), xv = xi.predict(zx), de = delta.predict(x), et = eta.predict(x),
                          rr = res.predict(x), dr = dres.predict(x), wr = wres.predict(x), ka = kappa.predict(x);
    out.values.resize(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      auto& v = out.values[static_cast<std::size_t>(i)];
      v.pi = p(i);
      v.xi = xv(i);
      v.delta = de(i);
      v.eta = et(i);
      v.kappa = ka(i);
      // gamma shares the covariance functional of its numerator so that w = c d gives gamma = c exactly.
      double cov = dr(i) - de(i) * rr(i);
      if (!(v.kappa > floor) || !(cov > floor)) ++out.floored;
      v.kappa = std::max(v.kappa, floor);
      cov = std::max(cov, floor);
      v.gamma = (wr(i) - et(i) * rr(i)) / cov;
      // E[w | Z, L] = eta + gamma (pi - delta) under AIV, so clipping pi moves xi along that line.
      v.xi += v.gamma * (p(i) - raw(i));
    }
    return out;
  }
};

inline AdaptiveNuisanceBundle fit_adaptive_bundle(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& x,
                                                  const Eigen::VectorXd& d, const Eigen::VectorXd& w,
                                                  const EstimatorConfig& cfg) {
  AdaptiveNuisanceBundle b;
  b.clip = cfg.regressor.prob_clip;
  const RegressorSpec joint = cfg.regressor.with_link(Link::Identity).with_tensor(true);
  const RegressorSpec marginal = cfg.regressor.with_link(Link::Identity).with_tensor(false);
  Eigen::MatrixXd zt(zx.rows(), 2);
  zt << d, w;
  auto mz = fit_conditional_means(zx, zt, joint);
  b.pi = std::move(mz[0]);
  b.xi = std::move(mz[1]);
  const Eigen::VectorXd p = b.propensity(zx);
  b.floor = kappa_floor(p, d, cfg.kappa_tau);
  Eigen::MatrixXd lt(x.rows(), 3);
  lt << d, w, p;
  auto ml = fit_conditional_means(x, lt, marginal);
  b.delta = std::move(ml[0]);
  b.eta = std::move(ml[1]);
  b.mpi = std::move(ml[2]);
  const Eigen::VectorXd r = p - b.mpi.predict(x);
  Eigen::MatrixXd st(x.rows(), 4);
  st << r, d.cwiseProduct(r), w.cwiseProduct(r), (p - b.delta.predict(x)).array().square().matrix();
  auto ms = fit_conditional_means(x, st, marginal);
  b.res = std::move(ms[0]);
  b.dres = std::move(ms[1]);
  b.wres = std::move(ms[2]);
  b.kappa = std::move(ms[3]);
  return b;
}

// Outcome of one cross-fitting step: pseudo-outcomes and nuisances on every row.
struct FixedStep {
  Eigen::VectorXd psi;
  std::vector<FixedPiValues> values;
  Index floored_eval = 0;
};

struct AdaptiveStep {
  Eigen::VectorXd psi;
  std::vector<AdaptiveValues> values;
  Index floored_eval = 0;
};

inline void check_floor(Index floored, Index total, const EstimatorConfig& cfg, const std::string& what) {
  const double frac = total > 0 ? static_cast<double>(floored) / static_cast<double>(total) : 0.0;
  if (frac > cfg.max_floor_fraction)
    throw WeakInstrumentError("weak instrument: kappa floored on " + std::to_string(frac * 100.0) +
                                  "% of evaluation points" + (what.empty() ? "" : " (" + what + ")"),
                              frac);
}

enum class ScoreKind { FixedPi, Miv };

inline FixedStep fixed_pi_step(const Eigen::MatrixXd& x, const Eigen::VectorXd& d, const Eigen::VectorXd& w,
                               const Eigen::VectorXd& pi, const Rows& train, const Rows& eval,
                               const EstimatorConfig& cfg, ScoreKind kind = ScoreKind::FixedPi,
                               const std::string& what = {}) {
  const auto bundle = fit_fixed_pi_bundle(x(train, Eigen::all), d(train), w(train), pi(train), cfg);
  FixedStep s;
  auto ev = bundle.evaluate(x);
  s.values = std::move(ev.values);
  for (Index i : eval)
    if (std::abs(s.values[static_cast<std::size_t>(i)].kappa) == bundle.floor) ++s.floored_eval;
  check_floor(s.floored_eval, static_cast<Index>(eval.size()), cfg, what);
  s.psi.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const auto& v = s.values[static_cast<std::size_t>(i)];
    s.psi(i) = kind == ScoreKind::FixedPi ? fixed_pi_pseudo_outcome(pi(i), d(i), w(i), v)
                                          : miv_pseudo_outcome(pi(i), d(i), w(i), v);
  }
  return s;
}

inline AdaptiveStep adaptive_step(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& x, const Eigen::VectorXd& d,
                                  const Eigen::VectorXd& w, const Rows& train, const Rows& eval,
                                  const EstimatorConfig& cfg, const std::string& what = {}) {
  const auto bundle = fit_adaptive_bundle(zx(train, Eigen::all), x(train, Eigen::all), d(train), w(train), cfg);
  AdaptiveStep s;
  auto ev = bundle.evaluate(zx, x);
  s.values = std::move(ev.values);
  for (Index i : eval)
    if (s.values[static_cast<std::size_t>(i)].kappa == bundle.floor) ++s.floored_eval;
  check_floor(s.floored_eval, static_cast<Index>(eval.size()), cfg, what);
  s.psi.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i)
    s.psi(i) = adaptive_pseudo_outcome(d(i), w(i), s.values[static_cast<std::size_t>(i)]);
  return s;
}

}  // namespace addiv
