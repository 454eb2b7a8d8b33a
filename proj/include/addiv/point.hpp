#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "nuisance.hpp"
#include "oracle.hpp"
#include "weighting.hpp"

namespace addiv {

// Per-observation influence values phi_i = Psi_i - psi_hat.
struct EIFEvaluation {
  Eigen::VectorXd phi;
  double mean = 0.0;
  double second_moment = 0.0;
};

struct PointFit {
  Eigen::VectorXd psi_obs;  // cross-fitted pseudo-outcome of every row
  FoldAssignment folds;
  Index floored = 0;
};

namespace detail {

inline Eigen::MatrixXd join(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

inline void require_point(const PointDataset& d, const EstimatorConfig& cfg, bool binary) {
  if (d.n() < cfg.min_n)
    throw InvalidArgument("need at least " + std::to_string(cfg.min_n) + " observations, have " + std::to_string(d.n()));
  if (d.continuous_treatment()) throw InvalidArgument("estimator requires a categorical treatment");
  if (binary && d.treatment_levels() != 2)
    throw InvalidArgument("estimator requires a binary treatment (M = 1), data has " +
                          std::to_string(d.treatment_levels()) + " levels");
}

inline void require_level(const PointDataset& d, int a) {
  if (a < 0 || a >= d.treatment_levels())
    throw InvalidArgument("treatment level " + std::to_string(a) + " outside 0.." + std::to_string(d.treatment_levels() - 1));
}

inline std::string level_name(int a) { return "E[Y(" + std::to_string(a) + ")]"; }

}  // namespace detail

// Cross-fitted fixed-pi (or MIV) pseudo-outcomes for the given target.
inline PointFit cross_fit_fixed(const PointDataset& data, const PointTarget& target, const WeightingFunctionSpec& pi,
                                int K, std::uint64_t seed, const EstimatorConfig& cfg,
                                ScoreKind kind = ScoreKind::FixedPi) {
  PointFit fit;
  fit.folds = make_folds(data.n(), K, seed);
  fit.psi_obs.resize(data.n());
  Eigen::VectorXd d(data.n()), w(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    d(i) = target.d(data.level(i));
    w(i) = target.w(data.level(i), data.y()(i));
  }
  for (int k = 0; k < K; ++k) {
    const Rows train = fit.folds.complement(k), eval = fit.folds.rows(k);
    const Eigen::VectorXd p = evaluate_weight(pi, data, target.ate ? 1 : target.level, train, cfg.regressor);
    const auto step = fixed_pi_step(data.l(), d, w, p, train, eval, cfg, kind, "fold " + std::to_string(k));
    fit.floored += step.floored_eval;
    for (Index i : eval) fit.psi_obs(i) = step.psi(i);
  }
  return fit;
}

inline PointFit cross_fit_adaptive(const PointDataset& data, const PointTarget& target, int K, std::uint64_t seed,
                                   const EstimatorConfig& cfg) {
  PointFit fit;
  fit.folds = make_folds(data.n(), K, seed);
  fit.psi_obs.resize(data.n());
  Eigen::VectorXd d(data.n()), w(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    d(i) = target.d(data.level(i));
    w(i) = target.w(data.level(i), data.y()(i));
  }
  const Eigen::MatrixXd zx = detail::join(data.z(), data.l());
  for (int k = 0; k < K; ++k) {
    const Rows train = fit.folds.complement(k), eval = fit.folds.rows(k);
    const auto step = adaptive_step(zx, data.l(), d, w, train, eval, cfg, "fold " + std::to_string(k));
    fit.floored += step.floored_eval;
    for (Index i : eval) fit.psi_obs(i) = step.psi(i);
  }
  return fit;
}

// psi_hat = fold-size-weighted mean of Psi; sigma^2 = fold-size-weighted E_nk[(Psi - psi_hat)^2].
inline EstimateReport summarize_point(const std::string& label, const PointFit& fit, std::uint64_t seed) {
  const Index n = fit.psi_obs.size();
  const double psi = fit.psi_obs.mean();
  double sigma = 0.0;
  std::vector<double> per_fold;
  for (int k = 0; k < fit.folds.K; ++k) {
    const Rows r = fit.folds.rows(k);
    const double v = (fit.psi_obs(r).array() - psi).square().mean();
    per_fold.push_back(v);
    sigma += static_cast<double>(r.size()) / static_cast<double>(n) * v;
  }
  auto rep = make_report(label, psi, sigma, n, fit.folds.K, seed);
  rep.per_fold_variance = per_fold;
  rep.diagnostics["kappa_floored"] = static_cast<double>(fit.floored);
  return rep;
}

inline EIFEvaluation eif_evaluation(const PointFit& fit) {
  EIFEvaluation e;
  const double psi = fit.psi_obs.mean();
  e.phi = fit.psi_obs.array() - psi;
  e.mean = e.phi.mean();
  e.second_moment = e.phi.squaredNorm() / static_cast<double>(e.phi.size());
  return e;
}

inline EstimateReport estimate_ate_fixed_pi(const PointDataset& data, const WeightingFunctionSpec& pi, int K,
                                            std::uint64_t seed, const EstimatorConfig& cfg = {}) {
  detail::require_point(data, cfg, true);
  const auto fit = cross_fit_fixed(data, PointTarget::average_effect(), pi, K, seed, cfg);
  auto rep = summarize_point("psi_pi (ATE under AIV) [" + pi.describe() + "]", fit, seed);
  return rep;
}

inline EstimateReport estimate_ate_adaptive(const PointDataset& data, int K, std::uint64_t seed,
                                            const EstimatorConfig& cfg = {}) {
  detail::require_point(data, cfg, true);
  return summarize_point("psi_ada (ATE under AIV)", cross_fit_adaptive(data, PointTarget::average_effect(), K, seed, cfg),
                         seed);
}

inline EstimateReport estimate_mean_po(const PointDataset& data, int a, const WeightingFunctionSpec& pi, int K,
                                       std::uint64_t seed, const EstimatorConfig& cfg = {}) {
  detail::require_point(data, cfg, false);
  detail::require_level(data, a);
  const auto fit = cross_fit_fixed(data, PointTarget::mean_outcome(a), pi, K, seed, cfg);
  return summarize_point(detail::level_name(a) + " [" + pi.describe() + "]", fit, seed);
}

inline EstimateReport estimate_mean_po_adaptive(const PointDataset& data, int a, int K, std::uint64_t seed,
                                                const EstimatorConfig& cfg = {}) {
  detail::require_point(data, cfg, false);
  detail::require_level(data, a);
  return summarize_point(detail::level_name(a) + " [adaptive]",
                         cross_fit_adaptive(data, PointTarget::mean_outcome(a), K, seed, cfg), seed);
}

inline EstimateReport estimate_mean_po_miv(const PointDataset& data, int a, const WeightingFunctionSpec& pi, int K,
                                           std::uint64_t seed, const EstimatorConfig& cfg = {}) {
  detail::require_point(data, cfg, false);
  detail::require_level(data, a);
  // Everyone at level a: the score is Y itself.
  const Eigen::VectorXd ind = data.indicator(a);
  if ((ind.array() == 1.0).all()) {
    PointFit fit;
    fit.folds = make_folds(data.n(), K, seed);
    fit.psi_obs = data.y();
    return summarize_point(detail::level_name(a) + " [MIV]", fit, seed);
  }
  const auto fit = cross_fit_fixed(data, PointTarget::mean_outcome(a), pi, K, seed, cfg, ScoreKind::Miv);
  return summarize_point(detail::level_name(a) + " [MIV, " + pi.describe() + "]", fit, seed);
}

// Estimates from externally supplied per-row nuisances (oracle injection). weights are observation
// weights (e.g. atom probabilities); the estimate is the weighted mean of the pseudo-outcome.
inline double psi_with_nuisances(const PointDataset& data, const PointTarget& t, const Eigen::VectorXd& pi,
                                 const std::vector<FixedPiValues>& values, const Eigen::VectorXd& weights,
                                 ScoreKind kind = ScoreKind::FixedPi) {
  if (pi.size() != data.n() || weights.size() != data.n() || static_cast<Index>(values.size()) != data.n())
    throw InvalidArgument("injected nuisances must have one entry per row");
  double s = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const int a = static_cast<int>(data.a()(i));
    const double d = t.d(a), w = t.w(a, data.y()(i));
    const auto& v = values[static_cast<std::size_t>(i)];
    s += weights(i) * (kind == ScoreKind::FixedPi ? fixed_pi_pseudo_outcome(pi(i), d, w, v) : miv_pseudo_outcome(pi(i), d, w, v));
  }
  return s / weights.sum();
}

inline double psi_with_nuisances(const PointDataset& data, const PointTarget& t, const std::vector<AdaptiveValues>& values,
                                 const Eigen::VectorXd& weights) {
  if (weights.size() != data.n() || static_cast<Index>(values.size()) != data.n())
    throw InvalidArgument("injected nuisances must have one entry per row");
  double s = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const int a = static_cast<int>(data.a()(i));
    s += weights(i) * adaptive_pseudo_outcome(t.d(a), t.w(a, data.y()(i)), values[static_cast<std::size_t>(i)]);
  }
  return s / weights.sum();
}

}  // namespace addiv
