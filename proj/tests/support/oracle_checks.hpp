#pragma once

// Exact-enumeration verification of identification identities and influence-function
// properties. Everything here is computed from the enumerated law, independently of the
// cross-fitting estimators.

#include <addiv/oracle.hpp>
#include <addiv/rng.hpp>
#include <addiv/scores.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace oracle_checks {

using namespace addiv;

struct Check {
  std::string name;
  double value = 0.0;  // worst absolute error found
  double tol = 0.0;
  bool pass() const { return std::isfinite(value) && value <= tol; }
};

inline std::vector<std::pair<std::string, PiFunction>> rwf_set() {
  return {{"z", [](double z, double) { return z; }},
          {"z^2", [](double z, double) { return z * z; }},
          {"z^3", [](double z, double) { return z * z * z; }},
          {"exp(z)+l", [](double z, double l) { return std::exp(z) + l; }},
          {"z+l*z", [](double z, double l) { return z + l * z; }},
          {"sin(z)", [](double z, double) { return std::sin(z); }}};
}

// ---------- point exposure ----------

inline double point_mean_psi_fixed(const PointOracle& o, const PiFunction& pi, const PointTarget& t,
                                   const std::vector<FixedPiValues>& nu, bool miv = false) {
  return o.mean([&](const PointAtom& at) {
    const auto& v = nu[static_cast<std::size_t>(at.li)];
    const double p = pi(at.z, at.l), d = t.d(at.a), w = t.w(at.a, at.y);
    return miv ? miv_pseudo_outcome(p, d, w, v) : fixed_pi_pseudo_outcome(p, d, w, v);
  });
}

inline double point_mean_psi_adaptive(const PointOracle& o, const PointTarget& t,
                                      const std::vector<std::vector<AdaptiveValues>>& nu) {
  return o.mean([&](const PointAtom& at) {
    return adaptive_pseudo_outcome(t.d(at.a), t.w(at.a, at.y),
                                   nu[static_cast<std::size_t>(at.li)][static_cast<std::size_t>(at.zi)]);
  });
}

inline double miv_estimand(const PointOracle& o, int a, const PiFunction& pi) {
  const auto nu = o.fixed_nuisance(pi, PointTarget::mean_outcome(a));
  return o.mean([&](const PointAtom& at) {
    const double d = at.a == a;
    return (1 - d) * nu[static_cast<std::size_t>(at.li)].gamma + d * at.y;
  });
}

struct Perturber {
  CounterRng rng;
  explicit Perturber(std::uint64_t seed) : rng(seed, Stream::Oracle) {}
  double u() { return rng.uniform(-1.0, 1.0); }
  FixedPiValues fixed(const FixedPiValues& v, double s, unsigned mask = 31u) {
    FixedPiValues p = v;
    if (mask & 1u) p.delta += s * u();
    if (mask & 2u) p.eta += s * u();
    if (mask & 4u) p.rho += s * u();
    if (mask & 8u) p.kappa *= 1.0 + s * u();
    if (mask & 16u) p.gamma += s * u();
    return p;
  }
  AdaptiveValues adaptive(const AdaptiveValues& v, double s) {
    AdaptiveValues p = v;
    p.pi += s * u();
    p.delta += s * u();
    p.kappa *= 1.0 + s * u();
    p.xi += s * u();
    p.eta += s * u();
    p.gamma += s * u();
    return p;
  }
};

// Fixed-pi mixed bias. The (rho)(delta) term enters as -(rho~ - rho)(delta~ - delta) gamma~.
inline double fixed_mixed_bias_formula(const PointOracle& o, const PointTarget& t, const std::vector<FixedPiValues>& tru,
                                       const std::vector<FixedPiValues>& per) {
  return o.mean([&](const PointAtom& at) {
    const auto& a = tru[static_cast<std::size_t>(at.li)];
    const auto& b = per[static_cast<std::size_t>(at.li)];
    (void)t;
    return ((b.kappa - a.kappa) * (b.gamma - a.gamma) + (b.rho - a.rho) * (b.eta - a.eta) -
            (b.rho - a.rho) * (b.delta - a.delta) * b.gamma) /
           b.kappa;
  });
}

// Adaptive mixed bias.
inline double adaptive_mixed_bias_formula(const PointOracle& o, const std::vector<std::vector<AdaptiveValues>>& tru,
                                          const std::vector<std::vector<AdaptiveValues>>& per) {
  return o.mean([&](const PointAtom& at) {
    const auto& a = tru[static_cast<std::size_t>(at.li)][static_cast<std::size_t>(at.zi)];
    const auto& b = per[static_cast<std::size_t>(at.li)][static_cast<std::size_t>(at.zi)];
    return ((b.gamma - a.gamma) * (b.kappa - a.kappa) - b.gamma * (a.delta - b.delta) * (a.delta - b.delta) +
            b.gamma * (a.pi - b.pi) * (a.pi - b.pi) - (b.xi - a.xi) * (b.pi - a.pi) +
            (b.eta - a.eta) * (b.delta - a.delta)) /
           b.kappa;
  });
}

// ---------- longitudinal ----------

using Rules = std::array<OracleRule, 2>;
using FixedTables = std::array<std::vector<FixedPiValues>, 2>;
using AdaptiveTables = std::array<std::vector<std::array<AdaptiveValues, 3>>, 2>;

inline double d_of(const OracleRule& r, const LongAtom& at, int period) {
  const int observed = period == 0 ? at.a0 : at.a1;
  return static_cast<double>(observed == r.apply(at, observed));
}

// Psi_0 by the backward recursion; a natural period is an identity step.
inline double long_psi0_fixed(const LongAtom& at, const Rules& rules, const FixedTables& tab) {
  double psi = at.y;
  if (!rules[1].natural()) {
    const double d = d_of(rules[1], at, 1);
    psi = fixed_pi_pseudo_outcome(at.z1, d, d * psi, tab[1][static_cast<std::size_t>(at.h1())]);
  }
  if (!rules[0].natural()) {
    const double d = d_of(rules[0], at, 0);
    psi = fixed_pi_pseudo_outcome(at.z0, d, d * psi, tab[0][static_cast<std::size_t>(at.h0())]);
  }
  return psi;
}

inline double long_psi1_fixed(const LongAtom& at, const Rules& rules, const FixedTables& tab) {
  if (rules[1].natural()) return at.y;
  const double d = d_of(rules[1], at, 1);
  return fixed_pi_pseudo_outcome(at.z1, d, d * at.y, tab[1][static_cast<std::size_t>(at.h1())]);
}

inline double long_psi0_adaptive(const LongAtom& at, const std::array<int, 2>& lv, const AdaptiveTables& tab) {
  const double d1 = at.a1 == lv[1], d0 = at.a0 == lv[0];
  const double psi1 = adaptive_pseudo_outcome(d1, d1 * at.y, tab[1][static_cast<std::size_t>(at.h1())][static_cast<std::size_t>(at.z1)]);
  return adaptive_pseudo_outcome(d0, d0 * psi1, tab[0][static_cast<std::size_t>(at.h0())][static_cast<std::size_t>(at.z0)]);
}

// Longitudinal mixed bias: per-period products of nuisance errors, weighted by the perturbed
// weights of earlier periods, with eta_t^o built from the true gamma_{t+1}^o.
inline double long_mixed_bias_formula(const LongitudinalOracle& o, const Rules& rules, const FixedTables& tru,
                                      const FixedTables& per) {
  auto bracket = [](const FixedPiValues& a, const FixedPiValues& b) {
    return ((b.kappa - a.kappa) * (b.gamma - a.gamma) + (b.rho - a.rho) * (b.eta - a.eta) -
            (b.rho - a.rho) * (b.delta - a.delta) * b.gamma) /
           b.kappa;
  };
  return o.mean([&](const LongAtom& at) {
    const auto& a0 = tru[0][static_cast<std::size_t>(at.h0())];
    const auto& b0 = per[0][static_cast<std::size_t>(at.h0())];
    const auto& a1 = tru[1][static_cast<std::size_t>(at.h1())];
    const auto& b1 = per[1][static_cast<std::size_t>(at.h1())];
    const double w0 = (at.z0 - b0.rho) * d_of(rules[0], at, 0) / b0.kappa;
    return bracket(a0, b0) + w0 * bracket(a1, b1);
  });
}

// ---------- suites ----------

inline std::vector<Check> identification_checks() {
  std::vector<Check> out;
  const PointOracle o(aiv_oracle());
  const double ate = o.ate();
  double worst = 0.0, spread = 0.0;
  std::vector<double> vals;
  for (const auto& [name, pi] : rwf_set()) {
    const double r = o.identified(pi, PointTarget::average_effect());
    worst = std::max(worst, std::abs(r - ate));
    vals.push_back(r);
    for (int a = 0; a < 2; ++a)
      worst = std::max(worst, std::abs(o.identified(pi, PointTarget::mean_outcome(a)) - o.mean_potential(a)));
  }
  for (double v : vals) spread = std::max(spread, std::abs(v - vals.front()));
  out.push_back({"AIV: population ratio vs counterfactual ATE (6 RWFs)", worst, 1e-12});
  out.push_back({"AIV: ratio invariant across RWFs", spread, 1e-12});

  const PointOracle o3(aiv_oracle_three_level());
  double worst3 = 0.0;
  for (int a = 0; a < 3; ++a)
    for (const auto& [name, pi] : rwf_set())
      worst3 = std::max(worst3, std::abs(o3.identified(pi, PointTarget::mean_outcome(a)) - o3.mean_potential(a)));
  out.push_back({"AIV, three levels: E[Y(a)] identified for a = 0,1,2", worst3, 1e-12});

  const PointOracle m(miv_oracle());
  double fz = 0.0, est = 0.0;
  const auto cp = m.conditional_potential(1), cu = m.conditional_potential_untreated(1);
  for (const auto& [name, pi] : rwf_set()) {
    const auto f0 = m.f_zero(1, pi);
    for (std::size_t l = 0; l < f0.size(); ++l)
      for (double v : f0[l]) fz = std::max(fz, std::abs(v - (cp[l] - cu[l])));
    est = std::max(est, std::abs(miv_estimand(m, 1, pi) - m.mean_potential(1)));
  }
  out.push_back({"MIV: f(0,L) = E[Y(a)|L] - E[Y(a)|L,A!=a]", fz, 1e-12});
  out.push_back({"MIV: psi_MIV = E[Y(a)]", est, 1e-12});

  const PointOracle nc(aiv_oracle(false));
  double f0nc = 0.0, lat = 0.0, aivc = 0.0;
  for (const auto& row : nc.f_zero(1, rwf_set()[0].second))
    for (double v : row) f0nc = std::max(f0nc, std::abs(v));
  const auto f0c = o.f_zero(1, rwf_set()[0].second);
  const auto lc = o.latent_covariance(1);
  for (std::size_t l = 0; l < lc.size(); ++l)
    for (std::size_t z = 0; z < lc[l].size(); ++z) lat = std::max(lat, std::abs(f0c[l][z] - lc[l][z]));
  const auto& s = o.spec();
  for (int l = 0; l < 2; ++l)
    for (int u = 0; u < 2; ++u)
      for (int z = 0; z < 3; ++z)
        aivc = std::max(aivc, std::abs(s.treat_prob(1, l, u, z) - s.c[1][l][z] - s.treat_prob(1, l, u, 0) + s.c[1][l][0]));
  out.push_back({"AIV unconfounded: f(0,L) = 0", f0nc, 1e-12});
  out.push_back({"AIV: f(0,L) = Cov{E[Y(a)|U,L], Pr(A=a|Z,U,L) | L}", lat, 1e-12});
  out.push_back({"AIV oracle: Pr(A=1|Z,U,L) - c(Z,L) constant in Z", aivc, 1e-15});
  return out;
}

inline std::vector<Check> eif_checks(int directions = 10) {
  std::vector<Check> out;
  const PointOracle o(aiv_oracle());
  const auto pi = rwf_set()[0].second;

  // Mean zero at the truth.
  double mz = 0.0;
  for (const auto& t : {PointTarget::average_effect(), PointTarget::mean_outcome(0), PointTarget::mean_outcome(1)}) {
    const double truth = t.ate ? o.ate() : o.mean_potential(t.level);
    for (const auto& [name, p] : rwf_set())
      mz = std::max(mz, std::abs(point_mean_psi_fixed(o, p, t, o.fixed_nuisance(p, t)) - truth));
  }
  out.push_back({"mean zero: phi_pi", mz, 1e-10});
  double mza = 0.0;
  for (const auto& t : {PointTarget::average_effect(), PointTarget::mean_outcome(0), PointTarget::mean_outcome(1)}) {
    const double truth = t.ate ? o.ate() : o.mean_potential(t.level);
    mza = std::max(mza, std::abs(point_mean_psi_adaptive(o, t, o.adaptive_nuisance(t)) - truth));
  }
  out.push_back({"mean zero: phi_ada", mza, 1e-10});
  const PointOracle m(miv_oracle());
  const auto tm = PointTarget::mean_outcome(1);
  out.push_back({"mean zero: phi_MIV",
                 std::abs(point_mean_psi_fixed(m, pi, tm, m.fixed_nuisance(pi, tm), true) - m.mean_potential(1)), 1e-10});

  const LongitudinalOracle lo;
  double mzl = 0.0, mzg = 0.0, mzla = 0.0;
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1) {
      const Rules r{OracleRule{a0, {}}, OracleRule{a1, {}}};
      const auto tab = lo.fixed_nuisance(r);
      mzl = std::max(mzl, std::abs(lo.mean([&](const LongAtom& at) { return long_psi0_fixed(at, r, tab); }) - lo.value(r)));
      const auto at = lo.adaptive_nuisance({a0, a1});
      mzla = std::max(mzla, std::abs(lo.mean([&](const LongAtom& x) { return long_psi0_adaptive(x, {a0, a1}, at); }) - lo.value(r)));
    }
  const Rules dtr{OracleRule{1, {}}, OracleRule{-1, [](const LongAtom& at) { return at.l1 == 0 ? 1 : 0; }}};
  const Rules dtr_nat{OracleRule{}, OracleRule{-1, [](const LongAtom& at) { return at.l1 == 0 ? 1 : 0; }}};
  for (const auto& r : {dtr, dtr_nat}) {
    const auto tab = lo.fixed_nuisance(r);
    mzg = std::max(mzg, std::abs(lo.mean([&](const LongAtom& at) { return long_psi0_fixed(at, r, tab); }) - lo.value(r)));
  }
  out.push_back({"mean zero: phi_abar (4 static regimes)", mzl, 1e-10});
  out.push_back({"mean zero: phi_gbar (dynamic regimes)", mzg, 1e-10});
  out.push_back({"mean zero: phi_abar,ada", mzla, 1e-10});

  // Mixed bias, fixed pi.
  Perturber pert(2024);
  double mb5 = 0.0, mb5a = 0.0, mb5b = 0.0;
  for (const auto& t : {PointTarget::average_effect(), PointTarget::mean_outcome(1)}) {
    const double truth = t.ate ? o.ate() : o.mean_potential(t.level);
    for (const auto& [name, p] : rwf_set()) {
      const auto tru = o.fixed_nuisance(p, t);
      for (int rep = 0; rep < 5; ++rep) {
        std::vector<FixedPiValues> gen, ka, rh;
        for (const auto& v : tru) {
          gen.push_back(pert.fixed(v, 0.2));
          ka.push_back(pert.fixed(v, 0.2, 1u | 2u | 16u));
          rh.push_back(pert.fixed(v, 0.2, 4u | 8u));
        }
        mb5 = std::max(mb5, std::abs(point_mean_psi_fixed(o, p, t, gen) - truth - fixed_mixed_bias_formula(o, t, tru, gen)));
        mb5a = std::max(mb5a, std::abs(point_mean_psi_fixed(o, p, t, ka) - truth));
        mb5b = std::max(mb5b, std::abs(point_mean_psi_fixed(o, p, t, rh) - truth));
      }
    }
  }
  out.push_back({"mixed bias (fixed pi): kappa, rho exact => zero bias", mb5a, 1e-10});
  out.push_back({"mixed bias (fixed pi): eta, delta, gamma exact => zero bias", mb5b, 1e-10});
  out.push_back({"mixed bias (fixed pi): product formula", mb5, 1e-10});

  double mb7 = 0.0;
  for (const auto& t : {PointTarget::average_effect(), PointTarget::mean_outcome(0), PointTarget::mean_outcome(1)}) {
    const double truth = t.ate ? o.ate() : o.mean_potential(t.level);
    const auto tru = o.adaptive_nuisance(t);
    for (int rep = 0; rep < 10; ++rep) {
      auto per = tru;
      for (auto& row : per) {
        const auto base = pert.adaptive(row[0], 0.15);
        for (auto& v : row) {
          const auto cell = pert.adaptive(v, 0.15);
          v = base;
          v.pi = cell.pi;
          v.xi = cell.xi;
        }
      }
      mb7 = std::max(mb7, std::abs(point_mean_psi_adaptive(o, t, per) - truth - adaptive_mixed_bias_formula(o, tru, per)));
    }
  }
  out.push_back({"mixed bias (adaptive): product formula", mb7, 1e-10});

  double mb9 = 0.0, mb9zero = 0.0;
  for (const auto& r : {Rules{OracleRule{0, {}}, OracleRule{1, {}}}, Rules{OracleRule{1, {}}, OracleRule{1, {}}}, dtr}) {
    const auto tru = lo.fixed_nuisance(r);
    const double truth = lo.value(r);
    mb9zero = std::max(mb9zero, std::abs(lo.mean([&](const LongAtom& at) { return long_psi0_fixed(at, r, tru); }) - truth));
    for (int rep = 0; rep < 10; ++rep) {
      FixedTables per = tru;
      for (auto& tab : per)
        for (auto& v : tab) v = pert.fixed(v, 0.15);
      const double bias = lo.mean([&](const LongAtom& at) { return long_psi0_fixed(at, r, per); }) - truth;
      mb9 = std::max(mb9, std::abs(bias - long_mixed_bias_formula(lo, r, tru, per)));
      // One nuisance per period.
      for (unsigned bit : {1u, 2u, 4u, 8u, 16u}) {
        FixedTables one = tru;
        for (auto& tab : one)
          for (auto& v : tab) v = pert.fixed(v, 0.15, bit);
        const double b1 = lo.mean([&](const LongAtom& at) { return long_psi0_fixed(at, r, one); }) - truth;
        mb9 = std::max(mb9, std::abs(b1 - long_mixed_bias_formula(lo, r, tru, one)));
      }
    }
  }
  out.push_back({"mixed bias (longitudinal): no perturbation => zero", mb9zero, 1e-10});
  out.push_back({"mixed bias (longitudinal): product formula", mb9, 1e-10});

  // Neyman orthogonality by central differences.
  const double h = 1e-4;
  auto orth = [&](auto eval_at) {
    double worst = 0.0;
    for (int dir = 0; dir < directions; ++dir) {
      // Fourth-order central stencil: small kappa makes the third derivative large.
      const double g = (8 * (eval_at(h, dir) - eval_at(-h, dir)) - (eval_at(2 * h, dir) - eval_at(-2 * h, dir))) / (12 * h);
      worst = std::max(worst, std::abs(g));
    }
    return worst;
  };
  auto dirs = [&](std::size_t count, int dir) {
    CounterRng r(9000 + static_cast<std::uint64_t>(dir), Stream::Oracle);
    std::vector<double> v(count);
    for (auto& x : v) x = r.uniform(-1, 1);
    return v;
  };
  auto shift_fixed = [](std::vector<FixedPiValues> tab, const std::vector<double>& dv, double t) {
    for (std::size_t i = 0; i < tab.size(); ++i) {
      tab[i].delta += t * dv[5 * i];
      tab[i].eta += t * dv[5 * i + 1];
      tab[i].rho += t * dv[5 * i + 2];
      tab[i].kappa *= 1.0 + t * dv[5 * i + 3];
      tab[i].gamma += t * dv[5 * i + 4];
    }
    return tab;
  };
  {
    const auto t = PointTarget::average_effect();
    const auto tru = o.fixed_nuisance(pi, t);
    out.push_back({"Neyman orthogonality: phi_pi", orth([&](double s, int dir) {
                     return point_mean_psi_fixed(o, pi, t, shift_fixed(tru, dirs(tru.size() * 5, dir), s));
                   }), 1e-6});
    const auto trm = m.fixed_nuisance(pi, tm);
    out.push_back({"Neyman orthogonality: phi_MIV", orth([&](double s, int dir) {
                     return point_mean_psi_fixed(m, pi, tm, shift_fixed(trm, dirs(trm.size() * 5, dir), s), true);
                   }), 1e-6});
    const auto tra = o.adaptive_nuisance(t);
    out.push_back({"Neyman orthogonality: phi_ada", orth([&](double s, int dir) {
                     const auto dv = dirs(tra.size() * 3 * 2 + tra.size() * 4, dir);
                     auto per = tra;
                     std::size_t k = 0;
                     for (std::size_t l = 0; l < per.size(); ++l) {
                       const double dd = dv[k++], dk = dv[k++], de = dv[k++], dg = dv[k++];
                       for (auto& v : per[l]) {
                         v.delta += s * dd;
                         v.kappa *= 1.0 + s * dk;
                         v.eta += s * de;
                         v.gamma += s * dg;
                         v.pi += s * dv[k++];
                         v.xi += s * dv[k++];
                       }
                     }
                     return point_mean_psi_adaptive(o, t, per);
                   }), 1e-6});
    for (const auto& [label, r] : {std::pair<std::string, Rules>{"phi_abar", Rules{OracleRule{0, {}}, OracleRule{1, {}}}},
                                   std::pair<std::string, Rules>{"phi_gbar", dtr}}) {
      const auto trl = lo.fixed_nuisance(r);
      out.push_back({"Neyman orthogonality: " + label, orth([&](double s, int dir) {
                       const auto dv = dirs((trl[0].size() + trl[1].size()) * 5, dir);
                       FixedTables per = trl;
                       per[0] = shift_fixed(trl[0], std::vector<double>(dv.begin(), dv.begin() + static_cast<long>(trl[0].size() * 5)), s);
                       per[1] = shift_fixed(trl[1], std::vector<double>(dv.begin() + static_cast<long>(trl[0].size() * 5), dv.end()), s);
                       return lo.mean([&](const LongAtom& at) { return long_psi0_fixed(at, r, per); });
                     }), 1e-6});
    }
    const auto tla = lo.adaptive_nuisance({1, 1});
    out.push_back({"Neyman orthogonality: phi_abar,ada", orth([&](double s, int dir) {
                     const auto dv = dirs((tla[0].size() + tla[1].size()) * 3 * 6, dir);
                     AdaptiveTables per = tla;
                     std::size_t k = 0;
                     for (auto& tab : per)
                       for (auto& cell : tab) {
                         const double dd = dv[k++], dk = dv[k++], de = dv[k++], dg = dv[k++];
                         for (auto& v : cell) {
                           v.delta += s * dd;
                           v.kappa *= 1.0 + s * dk;
                           v.eta += s * de;
                           v.gamma += s * dg;
                           v.pi += s * dv[k++];
                           v.xi += s * dv[k++];
                         }
                       }
                     return lo.mean([&](const LongAtom& at) { return long_psi0_adaptive(at, {1, 1}, per); });
                   }), 1e-6});
  }
  return out;
}

// Multi-period identification over all (s, r) with s + r <= T + 1, and the DR-learner identity E[Psi_t | H_t] = gamma_t.
inline std::vector<Check> longitudinal_identity_checks() {
  std::vector<Check> out;
  const LongitudinalOracle lo;
  double worst = 0.0, drl = 0.0;
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1) {
      const Rules full{OracleRule{a0, {}}, OracleRule{a1, {}}};
      const Rules tail{OracleRule{}, OracleRule{a1, {}}};
      const auto tab = lo.fixed_nuisance(full);
      auto w0 = [&](const LongAtom& at) {
        const auto& v = tab[0][static_cast<std::size_t>(at.h0())];
        return (at.z0 - v.rho) * (at.a0 == a0) / v.kappa;
      };
      auto w1 = [&](const LongAtom& at) {
        const auto& v = tab[1][static_cast<std::size_t>(at.h1())];
        return (at.z1 - v.rho) * (at.a1 == a1) / v.kappa;
      };
      auto g1 = [&](const LongAtom& at) { return tab[1][static_cast<std::size_t>(at.h1())].gamma; };
      auto g0 = [&](const LongAtom& at) { return tab[0][static_cast<std::size_t>(at.h0())].gamma; };
      const double v_full = lo.value(full), v_tail = lo.value(tail), v_obs = lo.mean([](const LongAtom& at) { return at.y; });
      worst = std::max(worst, std::abs(lo.mean([&](const LongAtom& at) { return w0(at) * w1(at) * at.y; }) - v_full));  // s=0,r=0
      worst = std::max(worst, std::abs(lo.mean([&](const LongAtom& at) { return w0(at) * g1(at); }) - v_full));          // s=0,r=1
      worst = std::max(worst, std::abs(lo.mean(g0) - v_full));                                                           // s=0,r=2
      worst = std::max(worst, std::abs(lo.mean([&](const LongAtom& at) { return w1(at) * at.y; }) - v_tail));            // s=1,r=0
      worst = std::max(worst, std::abs(lo.mean(g1) - v_tail));                                                           // s=1,r=1
      worst = std::max(worst, std::abs(lo.mean([](const LongAtom& at) { return at.y; }) - v_obs));                       // s=2,r=0
      // E[Psi_1 | H_1] = gamma_1 and E[Psi_0 | H_0] = gamma_0 per history cell.
      const auto p1 = lo.given(LongitudinalOracle::kH1, [](const LongAtom& at) { return at.h1(); },
                               [&](const LongAtom& at) { return long_psi1_fixed(at, full, tab); });
      const auto p0 = lo.given(LongitudinalOracle::kH0, [](const LongAtom& at) { return at.h0(); },
                               [&](const LongAtom& at) { return long_psi0_fixed(at, full, tab); });
      for (std::size_t h = 0; h < p1.size(); ++h) drl = std::max(drl, std::abs(p1[h] - tab[1][h].gamma));
      for (std::size_t h = 0; h < p0.size(); ++h) drl = std::max(drl, std::abs(p0[h] - tab[0][h].gamma));
    }
  out.push_back({"longitudinal identification over all (s, r), T = 1", worst, 1e-12});
  out.push_back({"DR-learner identity E[Psi_t | H_t] = gamma_t", drl, 1e-10});
  return out;
}

// Optimal weight: on the homoskedastic oracle, E[phi_pi^2] over a 6-element RWF set is minimised by
// pi = Pr(A=1 | Z, L). Returns (check of minimality, best strict gap).
inline std::vector<Check> optimal_rwf_checks() {
  const PointOracle o(homoskedastic_oracle());
  const auto t = PointTarget::average_effect();
  const double psi = o.ate();
  const auto prop = o.given_zl([](const PointAtom& at) { return static_cast<double>(at.a); });
  const auto& zv = o.spec().z_values;
  const auto& lv = o.spec().l_values;
  auto idx = [](const std::vector<double>& v, double x) {
    return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
  };
  const PiFunction opt = [&](double z, double l) { return prop[idx(lv, l)][idx(zv, z)]; };
  auto second_moment = [&](const PiFunction& pi) {
    const auto nu = o.fixed_nuisance(pi, t);
    return o.mean([&](const PointAtom& at) {
      const double phi = fixed_pi_pseudo_outcome(pi(at.z, at.l), at.a, at.y, nu[static_cast<std::size_t>(at.li)]) - psi;
      return phi * phi;
    });
  };
  const double best = second_moment(opt);
  double worst_violation = 0.0, max_gap = 0.0;
  auto set = rwf_set();
  set.erase(set.begin() + 4);  // keep six candidates including the optimum
  for (const auto& [name, pi] : set) {
    const double v = second_moment(pi);
    worst_violation = std::max(worst_violation, best - v);
    max_gap = std::max(max_gap, v - best);
  }
  return {{"optimal RWF: E[phi^2] at Pr(A=1|Z,L) <= every competitor", std::max(0.0, worst_violation), 1e-12},
          {"optimal RWF: strict improvement >= 1e-6 over some competitor", max_gap >= 1e-6 ? 0.0 : 1e-6 - max_gap, 0.0}};
}

}  // namespace oracle_checks
