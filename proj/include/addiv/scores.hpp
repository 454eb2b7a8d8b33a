#pragma once

// Per-observation pseudo-outcomes. Every influence function here is affine in the target
// with coefficient -1, so phi = Psi - psi and the estimator is the mean of Psi.

namespace addiv {

// d: treatment indicator (A, or A^(a), or I{A_t = g_t(H_t)}); w: outcome-like term
// (Y, A^(a) Y, or A_t Psi_{t+1}); pi: weighting function value.
struct FixedPiValues {
  double delta = 0.0;  // E[d | L]
  double eta = 0.0;    // E[w | L]
  double rho = 0.0;    // E[pi | L]
  double kappa = 1.0;  // Cov(d, pi | L)
  double gamma = 0.0;  // Cov(w, pi | L) / kappa
};

inline double fixed_pi_pseudo_outcome(double pi, double d, double w, const FixedPiValues& v) {
  const double c = pi - v.rho;
  return c * (w - v.eta) / v.kappa + (1.0 - c * (d - v.delta) / v.kappa) * v.gamma;
}

struct AdaptiveValues {
  double pi = 0.0;     // E[d | Z, L]
  double delta = 0.0;  // E[d | L]
  double kappa = 1.0;  // E[(pi - delta)^2 | L]
  double xi = 0.0;     // E[w | Z, L]
  double eta = 0.0;    // E[w | L]
  double gamma = 0.0;  // Cov(w, pi | L) / kappa
};

inline double adaptive_pseudo_outcome(double d, double w, const AdaptiveValues& v) {
  const double rp = d - v.pi, rd = d - v.delta;
  return (v.pi - v.delta) * w / v.kappa + v.gamma / v.kappa * (v.kappa + rp * rp - rd * rd) +
         (v.xi * rp - v.eta * rd) / v.kappa;
}

// Multiplicative-IV score for E[Y(a)]: d = A^(a), w = A^(a) Y, nuisances as in FixedPiValues.
inline double miv_pseudo_outcome(double pi, double d, double w, const FixedPiValues& v) {
  const double c = pi - v.rho;
  return (1.0 - d) * v.gamma + w +
         (1.0 - v.delta) / v.kappa * ((w - v.eta) * c - v.gamma * (d - v.delta) * c);
}

}  // namespace addiv
