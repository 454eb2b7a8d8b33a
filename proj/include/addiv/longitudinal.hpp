#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "nuisance.hpp"
#include "regime.hpp"
#include "scores.hpp"
#include "weighting.hpp"

namespace addiv {

enum class LongitudinalScore { FixedPi, Adaptive };

struct LongitudinalOptions {
  // Per-period scalar instrument transform pi_t(Z_t, H_t); expressions see l<j> as history
  // coordinate j. A single entry applies to every period.
  std::vector<WeightingFunctionSpec> pi_transforms{WeightingFunctionSpec::identity(0)};
  LongitudinalScore score = LongitudinalScore::FixedPi;

  const WeightingFunctionSpec& transform(int t) const {
    if (pi_transforms.empty()) throw InvalidArgument("no instrument transform declared");
    return pi_transforms.size() == 1 ? pi_transforms.front() : pi_transforms.at(static_cast<std::size_t>(t));
  }
};

// Cross-fitted backward state. Row-indexed quantities hold the values computed by the fold
// in which the row is held out.
struct LongitudinalFit {
  std::vector<Eigen::VectorXd> psi;  // psi[t], t = 0..T+1; psi[T+1] = Y
  std::vector<Eigen::VectorXd> d;    // I{A_t = g_t(H_t)}
  std::vector<Eigen::VectorXd> pi;   // pi_t(Z_t, H_t) (fixed score)
  std::vector<std::vector<FixedPiValues>> fixed_values;
  std::vector<std::vector<AdaptiveValues>> adaptive_values;
  std::vector<bool> identity_step;   // natural-rule periods
  FoldAssignment folds;
  LongitudinalScore score = LongitudinalScore::FixedPi;
  Index floored = 0;
  Index winsorized = 0;

  const Eigen::VectorXd& psi0() const { return psi.front(); }
};

namespace detail {

// Clip to median +- c * IQR computed on the training rows; returns clipped evaluation rows.
inline Index winsorize(Eigen::VectorXd& v, const Rows& train, const Rows& eval, double c) {
  if (!(c > 0.0)) return 0;
  std::vector<double> t;
  t.reserve(train.size());
  for (Index i : train) t.push_back(v(i));
  const double q1 = empirical_quantile(t, 0.25), q3 = empirical_quantile(t, 0.75), med = empirical_quantile(t, 0.5);
  const double iqr = q3 - q1;
  if (!(iqr > 0.0)) return 0;
  const double lo = med - c * iqr, hi = med + c * iqr;
  Index clipped = 0;
  for (Index i : eval)
    if (v(i) < lo || v(i) > hi) ++clipped;
  v = v.cwiseMax(lo).cwiseMin(hi);
  return clipped;
}

inline Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace detail

// Algorithms 1-3: per fold, Psi_{T+1} = Y and one backward update per period on all rows.
inline LongitudinalFit backward_cross_fit(const PanelDataset& data, const Regime& regime, int K, std::uint64_t seed,
                                          const EstimatorConfig& cfg, const LongitudinalOptions& opt = {}) {
  validate_regime(regime, data);
  if (data.n() < cfg.min_n)
    throw InvalidArgument("need at least " + std::to_string(cfg.min_n) + " subjects, have " + std::to_string(data.n()));
  if (opt.score == LongitudinalScore::Adaptive && !regime.is_static())
    throw InvalidArgument("the adaptive longitudinal estimator takes a static regime");
  const int T = data.horizon();
  const Index n = data.n();
  LongitudinalFit fit;
  fit.score = opt.score;
  fit.folds = make_folds(n, K, seed);
  fit.psi.assign(static_cast<std::size_t>(T + 2), Eigen::VectorXd::Zero(n));
  fit.psi.back() = data.y();
  fit.d.assign(static_cast<std::size_t>(T + 1), Eigen::VectorXd::Ones(n));
  fit.pi.assign(static_cast<std::size_t>(T + 1), Eigen::VectorXd::Zero(n));
  fit.fixed_values.assign(static_cast<std::size_t>(T + 1), std::vector<FixedPiValues>(static_cast<std::size_t>(n)));
  fit.adaptive_values.assign(static_cast<std::size_t>(T + 1), std::vector<AdaptiveValues>(static_cast<std::size_t>(n)));
  fit.identity_step.assign(static_cast<std::size_t>(T + 1), false);

  std::vector<Eigen::MatrixXd> hist;
  std::vector<std::vector<std::string>> names;
  for (int t = 0; t <= T; ++t) {
    hist.push_back(data.history(t));
    names.push_back(data.history_names(t));
    fit.identity_step[static_cast<std::size_t>(t)] =
        regime.rules[static_cast<std::size_t>(t)].kind == RegimeRule::Kind::Natural;
  }

  for (int k = 0; k < K; ++k) {
    const Rows train = fit.folds.complement(k), eval = fit.folds.rows(k);
    Eigen::VectorXd cur = data.y();
    for (int t = T; t >= 0; --t) {
      const auto ts = static_cast<std::size_t>(t);
      const std::string what = "fold " + std::to_string(k) + ", t=" + std::to_string(t);
      if (fit.identity_step[ts]) {
        for (Index i : eval) fit.psi[ts](i) = cur(i);
        continue;
      }
      const Eigen::MatrixXd& h = hist[ts];
      const FittedRule rule = fit_rule(regime.rules[ts], names[ts], h, train, t);
      const Eigen::VectorXd d = rule.indicator(h, data.a(t));
      const Eigen::VectorXd w = d.cwiseProduct(cur);
      if (opt.score == LongitudinalScore::FixedPi) {
        const auto& tr = opt.transform(t);
        if (tr.kind == WeightingFunctionSpec::Kind::FittedPropensity)
          throw InvalidArgument("use the adaptive estimator for a fitted-propensity weight");
        const Eigen::VectorXd p = tr.evaluate_fixed(data.z(t), h);
        const auto step = fixed_pi_step(h, d, w, p, train, eval, cfg, ScoreKind::FixedPi, what);
        fit.floored += step.floored_eval;
        cur = step.psi;
        for (Index i : eval) {
          fit.pi[ts](i) = p(i);
          fit.fixed_values[ts][static_cast<std::size_t>(i)] = step.values[static_cast<std::size_t>(i)];
        }
      } else {
        const auto step = adaptive_step(detail::hcat(data.z(t), h), h, d, w, train, eval, cfg, what);
        fit.floored += step.floored_eval;
        cur = step.psi;
        for (Index i : eval) fit.adaptive_values[ts][static_cast<std::size_t>(i)] = step.values[static_cast<std::size_t>(i)];
      }
      fit.winsorized += detail::winsorize(cur, train, eval, cfg.winsor_iqr);
      for (Index i : eval) {
        fit.d[ts](i) = d(i);
        fit.psi[ts](i) = cur(i);
      }
    }
  }
  return fit;
}

// Product-of-weights expansion of Psi_0 from the stored per-period nuisances of row i.
inline double closed_form_pseudo_outcome(const LongitudinalFit& fit, Index i) {
  const auto iu = static_cast<std::size_t>(i);
  const int T = static_cast<int>(fit.d.size()) - 1;
  double weight = 1.0, total = 0.0;
  for (int t = 0; t <= T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    if (fit.identity_step[ts]) continue;
    const double d = fit.d[ts](i);
    double w_t = 0.0, term = 0.0;
    if (fit.score == LongitudinalScore::FixedPi) {
      const auto& v = fit.fixed_values[ts][iu];
      const double c = fit.pi[ts](i) - v.rho;
      w_t = c * d / v.kappa;
      term = (1.0 - c * (d - v.delta) / v.kappa) * v.gamma - c * v.eta / v.kappa;
    } else {
      const auto& v = fit.adaptive_values[ts][iu];
      const double rp = d - v.pi, rd = d - v.delta;
      w_t = (v.pi - v.delta) * d / v.kappa;
      term = (rp * v.xi - rd * v.eta + v.gamma * (v.kappa + rp * rp - rd * rd)) / v.kappa;
    }
    total += weight * term;
    weight *= w_t;
  }
  return total + weight * fit.psi.back()(i);
}

// psi = fold-size-weighted fold means; sigma^2 = fold-size-weighted within-fold variances.
inline EstimateReport summarize_longitudinal(const std::string& label, const LongitudinalFit& fit, std::uint64_t seed) {
  const Eigen::VectorXd& psi0 = fit.psi0();
  const Index n = psi0.size();
  double psi = 0.0, sigma = 0.0;
  std::vector<double> per_fold;
  for (int k = 0; k < fit.folds.K; ++k) {
    const Rows r = fit.folds.rows(k);
    const Eigen::VectorXd v = psi0(r);
    const double m = v.mean(), var = (v.array() - m).square().mean();
    const double wk = static_cast<double>(r.size()) / static_cast<double>(n);
    psi += wk * m;
    sigma += wk * var;
    per_fold.push_back(var);
  }
  auto rep = make_report(label, psi, sigma, n, fit.folds.K, seed);
  rep.per_fold_variance = per_fold;
  rep.diagnostics["kappa_floored"] = static_cast<double>(fit.floored);
  rep.diagnostics["winsorized"] = static_cast<double>(fit.winsorized);
  return rep;
}

inline EstimateReport estimate_longitudinal_static(const PanelDataset& data, const std::vector<int>& levels, int K,
                                                   std::uint64_t seed, const EstimatorConfig& cfg = {},
                                                   const LongitudinalOptions& opt = {}) {
  const Regime regime = Regime::fixed(levels);
  LongitudinalOptions o = opt;
  o.score = LongitudinalScore::FixedPi;
  return summarize_longitudinal("E[Y" + regime.describe() + "]", backward_cross_fit(data, regime, K, seed, cfg, o), seed);
}

inline EstimateReport estimate_longitudinal_dtr(const PanelDataset& data, const Regime& regime, int K,
                                                std::uint64_t seed, const EstimatorConfig& cfg = {},
                                                const LongitudinalOptions& opt = {}) {
  LongitudinalOptions o = opt;
  o.score = LongitudinalScore::FixedPi;
  return summarize_longitudinal("E[Y" + regime.describe() + "]", backward_cross_fit(data, regime, K, seed, cfg, o), seed);
}

inline EstimateReport estimate_longitudinal_adaptive(const PanelDataset& data, const std::vector<int>& levels, int K,
                                                     std::uint64_t seed, const EstimatorConfig& cfg = {}) {
  const Regime regime = Regime::fixed(levels);
  LongitudinalOptions o;
  o.score = LongitudinalScore::Adaptive;
  return summarize_longitudinal("E[Y" + regime.describe() + "] [adaptive]",
                                backward_cross_fit(data, regime, K, seed, cfg, o), seed);
}

// Cross-fitted Psi_0 (and Psi_t for every t through the returned fit) for downstream analysis.
inline LongitudinalFit evaluate_pseudo_outcomes(const PanelDataset& data, const Regime& regime, int K, std::uint64_t seed,
                                                const EstimatorConfig& cfg = {}, const LongitudinalOptions& opt = {}) {
  return backward_cross_fit(data, regime, K, seed, cfg, opt);
}

}  // namespace addiv
