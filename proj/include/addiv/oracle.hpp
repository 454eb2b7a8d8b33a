#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "scores.hpp"

namespace addiv {

inline constexpr double kOracleSupportCap = 1e6;

// Finite-support point-exposure law over (L, U, Z, A, noise) with Y(a) = m(a, L, U) + noise.
struct DiscretePointOracleSpec {
  enum class Structure { Aiv, Miv, General };
  std::string name;
  Structure structure = Structure::Aiv;
  int levels = 2;
  std::vector<double> l_values, l_probs;
  std::vector<double> u_values;
  std::vector<std::vector<double>> u_given_l;  // [l][u]
  std::vector<double> z_values;
  std::vector<std::vector<double>> z_given_l;  // [l][z]
  // Structural factors: AIV Pr(A=a|z,u,l) = b[a][l][u] + c[a][l][z];
  // MIV Pr(A!=a|z,u,l) = b[a][l][u] * c[a][l][z] for the level miv_level.
  std::vector<std::vector<std::vector<double>>> b, c;
  int miv_level = 1;
  std::vector<std::vector<std::vector<double>>> outcome_mean;  // [a][l][u]
  std::vector<double> noise_values{-1.0, 1.0}, noise_probs{0.5, 0.5};

  // Pr(A = a | Z = z_i, U = u_i, L = l_i).
  double treat_prob(int a, int li, int ui, int zi) const {
    if (structure == Structure::Miv) {
      const double not_a = b[0][static_cast<std::size_t>(li)][static_cast<std::size_t>(ui)] *
                           c[0][static_cast<std::size_t>(li)][static_cast<std::size_t>(zi)];
      if (levels != 2) throw InvalidArgument("MIV oracle supports binary treatment");
      return a == miv_level ? 1.0 - not_a : not_a;
    }
    if (a == 0) {
      double rest = 0.0;
      for (int k = 1; k < levels; ++k) rest += treat_prob(k, li, ui, zi);
      return 1.0 - rest;
    }
    return b[static_cast<std::size_t>(a)][static_cast<std::size_t>(li)][static_cast<std::size_t>(ui)] +
           c[static_cast<std::size_t>(a)][static_cast<std::size_t>(li)][static_cast<std::size_t>(zi)];
  }

  double support_size() const {
    return static_cast<double>(l_values.size()) * static_cast<double>(u_values.size()) *
           static_cast<double>(z_values.size()) * levels * static_cast<double>(noise_values.size());
  }
};

namespace detail {
inline std::vector<std::vector<std::vector<double>>> table3(int a, int b, int c) {
  return std::vector<std::vector<std::vector<double>>>(
      static_cast<std::size_t>(a),
      std::vector<std::vector<double>>(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(c), 0.0)));
}

inline DiscretePointOracleSpec base_point_oracle() {
  DiscretePointOracleSpec s;
  s.l_values = {0.0, 1.0};
  s.l_probs = {0.5, 0.5};
  s.u_values = {0.0, 1.0};
  s.u_given_l = {{0.6, 0.4}, {0.4, 0.6}};
  s.z_values = {0.0, 1.0, 2.0};
  s.z_given_l = {{0.3, 0.4, 0.3}, {0.5, 0.3, 0.2}};
  return s;
}
}  // namespace detail

// b(U,L) = 0.1 + 0.2U, c(Z,L) = 0.1Z + 0.05L, E[Y(a)|U,L] = a(1+U) + 0.5L + U.
// Without confounding the outcome mean drops its U terms.
inline DiscretePointOracleSpec aiv_oracle(bool confounded = true) {
  auto s = detail::base_point_oracle();
  s.name = confounded ? "oracle-aiv" : "oracle-aiv-unconfounded";
  s.b = detail::table3(2, 2, 2);
  s.c = detail::table3(2, 2, 3);
  s.outcome_mean = detail::table3(2, 2, 2);
  for (int l = 0; l < 2; ++l) {
    for (int u = 0; u < 2; ++u) s.b[1][l][u] = 0.1 + 0.2 * u;
    for (int z = 0; z < 3; ++z) s.c[1][l][z] = 0.1 * z + 0.05 * l;
    for (int a = 0; a < 2; ++a)
      for (int u = 0; u < 2; ++u)
        s.outcome_mean[a][l][u] = confounded ? a * (1.0 + u) + 0.5 * l + u : a * (1.0 + 0.5 * l) + 0.5 * l;
  }
  return s;
}

// Three treatment levels; levels 1 and 2 each follow an additive decomposition.
inline DiscretePointOracleSpec aiv_oracle_three_level() {
  auto s = detail::base_point_oracle();
  s.name = "oracle-aiv-3";
  s.levels = 3;
  s.b = detail::table3(3, 2, 2);
  s.c = detail::table3(3, 2, 3);
  s.outcome_mean = detail::table3(3, 2, 2);
  for (int l = 0; l < 2; ++l) {
    for (int u = 0; u < 2; ++u) {
      s.b[1][l][u] = 0.1 + 0.1 * u;
      s.b[2][l][u] = 0.15 + 0.15 * u;
    }
    for (int z = 0; z < 3; ++z) {
      s.c[1][l][z] = 0.05 * z + 0.05 * l;
      s.c[2][l][z] = 0.1 * z + 0.02 * l;
    }
    for (int a = 0; a < 3; ++a)
      for (int u = 0; u < 2; ++u) s.outcome_mean[a][l][u] = a * (1.0 + u) + 0.5 * l + u + 0.3 * a * a;
  }
  return s;
}

// Pr(A=0 | Z,U,L) = b(U,L) c(Z,L) with b = 0.5 + 0.3U and c = 0.9 - 0.25Z + 0.05L.
inline DiscretePointOracleSpec miv_oracle() {
  auto s = detail::base_point_oracle();
  s.name = "oracle-miv";
  s.structure = DiscretePointOracleSpec::Structure::Miv;
  s.b = detail::table3(1, 2, 2);
  s.c = detail::table3(1, 2, 3);
  s.outcome_mean = detail::table3(2, 2, 2);
  for (int l = 0; l < 2; ++l) {
    for (int u = 0; u < 2; ++u) s.b[0][l][u] = 0.5 + 0.3 * u;
    for (int z = 0; z < 3; ++z) s.c[0][l][z] = 0.9 - 0.25 * z + 0.05 * l;
    for (int a = 0; a < 2; ++a)
      for (int u = 0; u < 2; ++u) s.outcome_mean[a][l][u] = a * (1.0 + u) + 0.5 * l + u;
  }
  return s;
}

// U moves treatment only; Y(a) = a(1 + 0.5L) + 0.5L + noise, so the outcome residual is
// homoskedastic given (Z, L). c(Z,L) is non-linear in Z.
inline DiscretePointOracleSpec homoskedastic_oracle() {
  auto s = detail::base_point_oracle();
  s.name = "oracle-homoskedastic";
  s.b = detail::table3(2, 2, 2);
  s.c = detail::table3(2, 2, 3);
  s.outcome_mean = detail::table3(2, 2, 2);
  for (int l = 0; l < 2; ++l) {
    for (int u = 0; u < 2; ++u) s.b[1][l][u] = 0.1 + 0.2 * u;
    for (int z = 0; z < 3; ++z) s.c[1][l][z] = 0.06 * z + 0.05 * z * z + 0.05 * l;
    for (int a = 0; a < 2; ++a)
      for (int u = 0; u < 2; ++u) s.outcome_mean[a][l][u] = a * (1.0 + 0.5 * l) + 0.5 * l;
  }
  return s;
}

struct PointAtom {
  double p = 0.0;
  int li = 0, ui = 0, zi = 0, a = 0, ei = 0;
  double l = 0.0, u = 0.0, z = 0.0, y = 0.0;
  std::vector<double> y_potential;
};

// Which estimand a score targets: the ATE (d = A, w = Y) or E[Y(a)] (d = A^(a), w = A^(a) Y).
struct PointTarget {
  bool ate = false;
  int level = 1;
  static PointTarget average_effect() { return {true, 1}; }
  static PointTarget mean_outcome(int a) { return {false, a}; }
  double d(int a) const { return ate ? static_cast<double>(a) : static_cast<double>(a == level); }
  double w(int a, double y) const { return ate ? y : d(a) * y; }
};

using PiFunction = std::function<double(double z, double l)>;

// Exact enumeration of a DiscretePointOracleSpec.
class PointOracle {
public:
  explicit PointOracle(DiscretePointOracleSpec spec) : spec_(std::move(spec)) {
    if (spec_.support_size() > kOracleSupportCap)
      throw InvalidArgument("oracle support exceeds the enumeration cap of 1e6 atoms");
    const auto& s = spec_;
    for (std::size_t li = 0; li < s.l_values.size(); ++li)
      for (std::size_t ui = 0; ui < s.u_values.size(); ++ui)
        for (std::size_t zi = 0; zi < s.z_values.size(); ++zi)
          for (int a = 0; a < s.levels; ++a)
            for (std::size_t ei = 0; ei < s.noise_values.size(); ++ei) {
              const double pa = s.treat_prob(a, static_cast<int>(li), static_cast<int>(ui), static_cast<int>(zi));
              if (!(pa > 0.0 && pa < 1.0)) throw InvalidArgument("oracle treatment probability outside (0,1)");
              PointAtom at;
              at.p = s.l_probs[li] * s.u_given_l[li][ui] * s.z_given_l[li][zi] * pa * s.noise_probs[ei];
              at.li = static_cast<int>(li);
              at.ui = static_cast<int>(ui);
              at.zi = static_cast<int>(zi);
              at.a = a;
              at.ei = static_cast<int>(ei);
              at.l = s.l_values[li];
              at.u = s.u_values[ui];
              at.z = s.z_values[zi];
              for (int k = 0; k < s.levels; ++k)
                at.y_potential.push_back(s.outcome_mean[static_cast<std::size_t>(k)][li][ui] + s.noise_values[ei]);
              at.y = at.y_potential[static_cast<std::size_t>(a)];
              atoms_.push_back(std::move(at));
            }
  }

  const DiscretePointOracleSpec& spec() const { return spec_; }
  const std::vector<PointAtom>& atoms() const { return atoms_; }
  int n_l() const { return static_cast<int>(spec_.l_values.size()); }
  int n_z() const { return static_cast<int>(spec_.z_values.size()); }

  template <class F>
  double mean(F f) const {
    double s = 0.0;
    for (const auto& at : atoms_) s += at.p * f(at);
    return s;
  }

  template <class F>
  std::vector<double> given_l(F f) const {
    std::vector<double> num(static_cast<std::size_t>(n_l()), 0.0), den(num);
    for (const auto& at : atoms_) {
      num[static_cast<std::size_t>(at.li)] += at.p * f(at);
      den[static_cast<std::size_t>(at.li)] += at.p;
    }
    for (std::size_t i = 0; i < num.size(); ++i) num[i] /= den[i];
    return num;
  }

  template <class F>
  std::vector<std::vector<double>> given_zl(F f) const {
    std::vector<std::vector<double>> num(static_cast<std::size_t>(n_l()), std::vector<double>(static_cast<std::size_t>(n_z()), 0.0)),
        den(num);
    for (const auto& at : atoms_) {
      num[static_cast<std::size_t>(at.li)][static_cast<std::size_t>(at.zi)] += at.p * f(at);
      den[static_cast<std::size_t>(at.li)][static_cast<std::size_t>(at.zi)] += at.p;
    }
    for (std::size_t i = 0; i < num.size(); ++i)
      for (std::size_t j = 0; j < num[i].size(); ++j) num[i][j] /= den[i][j];
    return num;
  }

  // E[Y(a)] from the counterfactual outcomes directly.
  double mean_potential(int a) const {
    return mean([&](const PointAtom& at) { return at.y_potential[static_cast<std::size_t>(a)]; });
  }
  double ate() const { return mean_potential(1) - mean_potential(0); }

  // True fixed-pi nuisances per L cell.
  std::vector<FixedPiValues> fixed_nuisance(const PiFunction& pi, const PointTarget& t) const {
    auto pv = [&](const PointAtom& at) { return pi(at.z, at.l); };
    const auto delta = given_l([&](const PointAtom& at) { return t.d(at.a); });
    const auto eta = given_l([&](const PointAtom& at) { return t.w(at.a, at.y); });
    const auto rho = given_l(pv);
    const auto zeta = given_l([&](const PointAtom& at) { return t.w(at.a, at.y) * pv(at); });
    const auto dpi = given_l([&](const PointAtom& at) { return t.d(at.a) * pv(at); });
    std::vector<FixedPiValues> out(static_cast<std::size_t>(n_l()));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].delta = delta[i];
      out[i].eta = eta[i];
      out[i].rho = rho[i];
      out[i].kappa = dpi[i] - delta[i] * rho[i];
      out[i].gamma = (zeta[i] - eta[i] * rho[i]) / out[i].kappa;
    }
    return out;
  }

  // True adaptive nuisances per (L, Z) cell.
  std::vector<std::vector<AdaptiveValues>> adaptive_nuisance(const PointTarget& t) const {
    const auto pi = given_zl([&](const PointAtom& at) { return t.d(at.a); });
    const auto xi = given_zl([&](const PointAtom& at) { return t.w(at.a, at.y); });
    auto piv = [&](const PointAtom& at) { return pi[static_cast<std::size_t>(at.li)][static_cast<std::size_t>(at.zi)]; };
    const auto delta = given_l([&](const PointAtom& at) { return t.d(at.a); });
    const auto eta = given_l([&](const PointAtom& at) { return t.w(at.a, at.y); });
    const auto kappa = given_l([&](const PointAtom& at) {
      const double r = piv(at) - delta[static_cast<std::size_t>(at.li)];
      return r * r;
    });
    const auto wpi = given_l([&](const PointAtom& at) { return t.w(at.a, at.y) * piv(at); });
    const auto mpi = given_l(piv);
    std::vector<std::vector<AdaptiveValues>> out(static_cast<std::size_t>(n_l()),
                                                 std::vector<AdaptiveValues>(static_cast<std::size_t>(n_z())));
    for (std::size_t l = 0; l < out.size(); ++l)
      for (std::size_t z = 0; z < out[l].size(); ++z) {
        auto& v = out[l][z];
        v.pi = pi[l][z];
        v.xi = xi[l][z];
        v.delta = delta[l];
        v.eta = eta[l];
        v.kappa = kappa[l];
        v.gamma = (wpi[l] - eta[l] * mpi[l]) / kappa[l];
      }
    return out;
  }

  // Population identification ratio E[Cov(w, pi | L) / Cov(d, pi | L)].
  double identified(const PiFunction& pi, const PointTarget& t) const {
    const auto nu = fixed_nuisance(pi, t);
    return mean([&](const PointAtom& at) { return nu[static_cast<std::size_t>(at.li)].gamma; });
  }

  // f_a(0, L) from the identifying equation's solution, per (L, Z) cell; constant in Z when it exists.
  std::vector<std::vector<double>> f_zero(int a, const PiFunction& pi) const {
    const auto nu = fixed_nuisance(pi, PointTarget::mean_outcome(a));
    const auto ad = given_zl([&](const PointAtom& at) { return static_cast<double>(at.a == a); });
    const auto ay = given_zl([&](const PointAtom& at) { return (at.a == a) * at.y; });
    auto out = ad;
    for (std::size_t l = 0; l < out.size(); ++l)
      for (std::size_t z = 0; z < out[l].size(); ++z) out[l][z] = -nu[l].gamma * ad[l][z] + ay[l][z];
    return out;
  }

  // Cov{E[Y(a)|U,L], Pr(A=a|Z,U,L) | L, Z} per (L, Z) cell.
  std::vector<std::vector<double>> latent_covariance(int a) const {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(n_l()), std::vector<double>(static_cast<std::size_t>(n_z()), 0.0));
    const auto& s = spec_;
    for (int l = 0; l < n_l(); ++l)
      for (int z = 0; z < n_z(); ++z) {
        double em = 0, ep = 0, emp = 0;
        for (std::size_t u = 0; u < s.u_values.size(); ++u) {
          const double pu = s.u_given_l[static_cast<std::size_t>(l)][u];
          const double m = s.outcome_mean[static_cast<std::size_t>(a)][static_cast<std::size_t>(l)][u];
          const double pr = s.treat_prob(a, l, static_cast<int>(u), z);
          em += pu * m;
          ep += pu * pr;
          emp += pu * m * pr;
        }
        out[static_cast<std::size_t>(l)][static_cast<std::size_t>(z)] = emp - em * ep;
      }
    return out;
  }

  // E[Y(a) | L] and E[Y(a) | L, A != a].
  std::vector<double> conditional_potential(int a) const {
    return given_l([&](const PointAtom& at) { return at.y_potential[static_cast<std::size_t>(a)]; });
  }
  std::vector<double> conditional_potential_untreated(int a) const {
    std::vector<double> num(static_cast<std::size_t>(n_l()), 0.0), den(num);
    for (const auto& at : atoms_)
      if (at.a != a) {
        num[static_cast<std::size_t>(at.li)] += at.p * at.y_potential[static_cast<std::size_t>(a)];
        den[static_cast<std::size_t>(at.li)] += at.p;
      }
    for (std::size_t i = 0; i < num.size(); ++i) num[i] /= den[i];
    return num;
  }

  // Weighted "dataset" of atoms: row i is atom i with weight p_i.
  PointDataset as_dataset() const {
    const Index n = static_cast<Index>(atoms_.size());
    Eigen::MatrixXd z(n, 1), l(n, 1);
    Eigen::VectorXd a(n), y(n);
    for (Index i = 0; i < n; ++i) {
      const auto& at = atoms_[static_cast<std::size_t>(i)];
      z(i, 0) = at.z;
      l(i, 0) = at.l;
      a(i) = at.a;
      y(i) = at.y;
    }
    return PointDataset(z, a, y, l, spec_.levels);
  }
  Eigen::VectorXd weights() const {
    Eigen::VectorXd w(static_cast<Index>(atoms_.size()));
    for (std::size_t i = 0; i < atoms_.size(); ++i) w(static_cast<Index>(i)) = atoms_[i].p;
    return w;
  }

  // Finite sample drawn from the enumerated law.
  PointDataset sample(Index n, std::uint64_t seed) const {
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& at : atoms_) cdf.push_back(acc += at.p);
    Eigen::MatrixXd z(n, 1), l(n, 1);
    Eigen::VectorXd a(n), y(n), u(n);
    for (Index i = 0; i < n; ++i) {
      CounterRng rng(seed, Stream::Oracle, static_cast<std::uint64_t>(i));
      const double r = rng.uniform() * acc;
      auto k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
      k = std::min(k, atoms_.size() - 1);
      const auto& at = atoms_[k];
      z(i, 0) = at.z;
      l(i, 0) = at.l;
      a(i) = at.a;
      y(i) = at.y;
      u(i) = at.u;
    }
    PointDataset d(z, a, y, l, spec_.levels);
    d.latent_u = u;
    return d;
  }

private:
  DiscretePointOracleSpec spec_;
  std::vector<PointAtom> atoms_;
};

inline PointOracle enumerate_oracle(const DiscretePointOracleSpec& spec) { return PointOracle(spec); }

// T = 1 law over (U0, L0, Z0, A0, L1, U1, Z1, A1, noise), every variable binary or ternary.
// Per period Pr(A_t=1 | Z_t, U-bar_t, H_t) = b_t(U-bar_t, H_t) + c_t(Z_t, H_t), and Z_t depends on H_t only.
struct LongitudinalOracleSpec {
  double p_l0 = 0.45;
  double scale = 1.0;  // multiplies every instrument effect c_t

  double pu0(int l0) const { return 0.35 + 0.3 * l0; }
  std::array<double, 3> pz0(int l0) const {
    return l0 == 0 ? std::array<double, 3>{0.3, 0.4, 0.3} : std::array<double, 3>{0.45, 0.35, 0.2};
  }
  double b0(int u0, int l0) const { return 0.15 + 0.25 * u0 + 0.05 * l0; }
  double c0(int z0, int l0) const { return scale * (0.12 * z0 + 0.04 * z0 * l0); }
  double pl1(int l0, int u0, int a0) const { return 0.2 + 0.25 * l0 + 0.2 * u0 + 0.2 * a0; }
  double pu1(int u0, int a0, int l1) const { return 0.15 + 0.35 * u0 + 0.15 * a0 + 0.15 * l1; }
  std::array<double, 3> pz1(int z0, int a0, int l1) const {
    const double p0 = 0.35 - 0.05 * a0 - 0.05 * l1;
    const double p2 = 0.2 + 0.05 * a0 + 0.05 * l1 + 0.05 * z0;
    return {p0, 1.0 - p0 - p2, p2};
  }
  double b1(int u0, int u1, int a0, int l1) const { return 0.1 + 0.2 * u1 + 0.1 * u0 + 0.05 * a0 + 0.05 * l1; }
  double c1(int z1, int a0, int l1) const { return scale * (0.1 * z1 + 0.03 * z1 * l1 + 0.02 * z1 * a0); }
  double mean_y(int a0, int a1, int l0, int l1, int u0, int u1) const {
    return 1.0 + 0.8 * a0 + 1.5 * a1 + 0.5 * l1 + u1 + 0.6 * a1 * u1 + 0.4 * a0 * u0 + 0.3 * l0 +
           0.5 * u0 + 0.2 * a0 * a1;
  }
};

struct LongAtom {
  double p = 0.0;
  int u0 = 0, l0 = 0, z0 = 0, a0 = 0, l1 = 0, u1 = 0, z1 = 0, a1 = 0, e = 0;
  double y = 0.0;
  int h0() const { return l0; }
  int h1() const { return ((l0 * 3 + z0) * 2 + a0) * 2 + l1; }
};

// Treatment rule for one oracle period: -1 keeps the natural treatment, 0/1 force a level,
// or a function of the atom's history.
struct OracleRule {
  int level = -1;
  std::function<int(const LongAtom&)> rule;
  bool natural() const { return level < 0 && !rule; }
  int apply(const LongAtom& at, int observed) const {
    if (rule) return rule(at);
    return level < 0 ? observed : level;
  }
};

class LongitudinalOracle {
public:
  static constexpr int kH0 = 2;
  static constexpr int kH1 = 24;

  explicit LongitudinalOracle(LongitudinalOracleSpec spec = {}) : spec_(spec) {
    atoms_ = enumerate({OracleRule{}, OracleRule{}}, false);
  }

  const std::vector<LongAtom>& atoms() const { return atoms_; }
  const LongitudinalOracleSpec& spec() const { return spec_; }

  // Joint law of the counterfactual world under per-period rules (A_t set to g_t(H_t)).
  std::vector<LongAtom> enumerate(const std::array<OracleRule, 2>& rules, bool intervene = true) const {
    std::vector<LongAtom> out;
    const auto& s = spec_;
    for (int l0 = 0; l0 < 2; ++l0)
      for (int u0 = 0; u0 < 2; ++u0)
        for (int z0 = 0; z0 < 3; ++z0)
          for (int a0n = 0; a0n < 2; ++a0n) {
            const double pa0 = a0n ? s.b0(u0, l0) + s.c0(z0, l0) : 1 - s.b0(u0, l0) - s.c0(z0, l0);
            const double p0 = (l0 ? s.p_l0 : 1 - s.p_l0) * (u0 ? s.pu0(l0) : 1 - s.pu0(l0)) *
                              s.pz0(l0)[static_cast<std::size_t>(z0)] * pa0;
            LongAtom base;
            base.l0 = l0;
            base.u0 = u0;
            base.z0 = z0;
            base.a0 = a0n;
            const int a0 = intervene ? rules[0].apply(base, a0n) : a0n;
            for (int l1 = 0; l1 < 2; ++l1)
              for (int u1 = 0; u1 < 2; ++u1)
                for (int z1 = 0; z1 < 3; ++z1)
                  for (int a1n = 0; a1n < 2; ++a1n)
                    for (int e = 0; e < 2; ++e) {
                      const double b1 = s.b1(u0, u1, a0, l1), c1 = s.c1(z1, a0, l1);
                      const double pa1 = a1n ? b1 + c1 : 1 - b1 - c1;
                      const double p = p0 * (l1 ? s.pl1(l0, u0, a0) : 1 - s.pl1(l0, u0, a0)) *
                                       (u1 ? s.pu1(u0, a0, l1) : 1 - s.pu1(u0, a0, l1)) *
                                       s.pz1(z0, a0, l1)[static_cast<std::size_t>(z1)] * pa1 * 0.5;
                      LongAtom at = base;
                      at.a0 = a0;
                      at.l1 = l1;
                      at.u1 = u1;
                      at.z1 = z1;
                      at.a1 = a1n;
                      at.e = e;
                      at.a1 = intervene ? rules[1].apply(at, a1n) : a1n;
                      at.p = p;
                      at.y = s.mean_y(at.a0, at.a1, l0, l1, u0, u1) + (e ? 1.0 : -1.0);
                      out.push_back(at);
                    }
          }
    return out;
  }

  double value(const std::array<OracleRule, 2>& rules) const {
    double s = 0.0;
    for (const auto& at : enumerate(rules)) s += at.p * at.y;
    return s;
  }

  template <class Key, class F>
  std::vector<double> given(int cells, Key key, F f) const {
    std::vector<double> num(static_cast<std::size_t>(cells), 0.0), den(num);
    for (const auto& at : atoms_) {
      num[static_cast<std::size_t>(key(at))] += at.p * f(at);
      den[static_cast<std::size_t>(key(at))] += at.p;
    }
    for (std::size_t i = 0; i < num.size(); ++i) num[i] = den[i] > 0 ? num[i] / den[i] : 0.0;
    return num;
  }

  template <class F>
  double mean(F f) const {
    double s = 0.0;
    for (const auto& at : atoms_) s += at.p * f(at);
    return s;
  }

  // True per-period nuisances (pi_t = Z_t) for a regime: period 1 keyed by h1, period 0 by h0.
  // A natural period carries no nuisances and returns an empty table.
  std::array<std::vector<FixedPiValues>, 2> fixed_nuisance(const std::array<OracleRule, 2>& rules) const {
    std::array<std::vector<FixedPiValues>, 2> out;
    std::vector<double> gamma1;
    auto d1 = [&](const LongAtom& at) { return static_cast<double>(at.a1 == rules[1].apply(at, at.a1)); };
    auto h1 = [](const LongAtom& at) { return at.h1(); };
    auto h0 = [](const LongAtom& at) { return at.h0(); };
    std::function<double(const LongAtom&)> next = [](const LongAtom& at) { return at.y; };
    if (!rules[1].natural()) {
      out[1] = build(kH1, h1, [&](const LongAtom& at) { return static_cast<double>(at.z1); }, d1,
                     [&](const LongAtom& at) { return d1(at) * at.y; });
      const auto tab = out[1];
      next = [tab](const LongAtom& at) { return tab[static_cast<std::size_t>(at.h1())].gamma; };
    } else {
      const auto m = given(kH1, h1, [](const LongAtom& at) { return at.y; });
      next = [m](const LongAtom& at) { return m[static_cast<std::size_t>(at.h1())]; };
    }
    if (!rules[0].natural()) {
      auto d0 = [&](const LongAtom& at) { return static_cast<double>(at.a0 == rules[0].apply(at, at.a0)); };
      out[0] = build(kH0, h0, [](const LongAtom& at) { return static_cast<double>(at.z0); }, d0,
                     [&](const LongAtom& at) { return d0(at) * next(at); });
    }
    return out;
  }

  // True adaptive nuisances per period, keyed by history cell then instrument value.
  std::array<std::vector<std::array<AdaptiveValues, 3>>, 2> adaptive_nuisance(const std::array<int, 2>& levels) const {
    std::array<std::vector<std::array<AdaptiveValues, 3>>, 2> out;
    auto d1 = [&](const LongAtom& at) { return static_cast<double>(at.a1 == levels[1]); };
    auto d0 = [&](const LongAtom& at) { return static_cast<double>(at.a0 == levels[0]); };
    out[1] = build_adaptive(kH1, [](const LongAtom& at) { return at.h1(); }, [](const LongAtom& at) { return at.z1; }, d1,
                            [&](const LongAtom& at) { return d1(at) * at.y; });
    const auto tab = out[1];
    auto g1 = [tab](const LongAtom& at) { return tab[static_cast<std::size_t>(at.h1())][0].gamma; };
    out[0] = build_adaptive(kH0, [](const LongAtom& at) { return at.h0(); }, [](const LongAtom& at) { return at.z0; }, d0,
                            [&](const LongAtom& at) { return d0(at) * g1(at); });
    return out;
  }

  // Atoms as a weighted panel dataset (row i has weight p_i); history(1) = [z0, a0, l0, l1].
  PanelDataset as_panel() const { return panel_from(atoms_); }
  Eigen::VectorXd weights() const {
    Eigen::VectorXd w(static_cast<Index>(atoms_.size()));
    for (std::size_t i = 0; i < atoms_.size(); ++i) w(static_cast<Index>(i)) = atoms_[i].p;
    return w;
  }

  PanelDataset sample(Index n, std::uint64_t seed) const {
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& at : atoms_) cdf.push_back(acc += at.p);
    std::vector<LongAtom> drawn;
    drawn.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      CounterRng rng(seed, Stream::Oracle, static_cast<std::uint64_t>(i));
      const double r = rng.uniform() * acc;
      auto k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
      drawn.push_back(atoms_[std::min(k, atoms_.size() - 1)]);
    }
    return panel_from(drawn);
  }

private:
  template <class Key, class P, class D, class W>
  std::vector<FixedPiValues> build(int cells, Key key, P pi, D d, W w) const {
    const auto delta = given(cells, key, d);
    const auto eta = given(cells, key, w);
    const auto rho = given(cells, key, pi);
    const auto dpi = given(cells, key, [&](const LongAtom& at) { return d(at) * pi(at); });
    const auto wpi = given(cells, key, [&](const LongAtom& at) { return w(at) * pi(at); });
    std::vector<FixedPiValues> out(static_cast<std::size_t>(cells));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].delta = delta[i];
      out[i].eta = eta[i];
      out[i].rho = rho[i];
      out[i].kappa = dpi[i] - delta[i] * rho[i];
      out[i].gamma = (wpi[i] - eta[i] * rho[i]) / out[i].kappa;
    }
    return out;
  }

  template <class Key, class ZK, class D, class W>
  std::vector<std::array<AdaptiveValues, 3>> build_adaptive(int cells, Key key, ZK zk, D d, W w) const {
    auto kz = [&](const LongAtom& at) { return key(at) * 3 + zk(at); };
    const auto pi = given(cells * 3, kz, d);
    const auto xi = given(cells * 3, kz, w);
    auto piv = [&](const LongAtom& at) { return pi[static_cast<std::size_t>(kz(at))]; };
    const auto delta = given(cells, key, d);
    const auto eta = given(cells, key, w);
    const auto kappa = given(cells, key, [&](const LongAtom& at) {
      const double r = piv(at) - delta[static_cast<std::size_t>(key(at))];
      return r * r;
    });
    const auto wpi = given(cells, key, [&](const LongAtom& at) { return w(at) * piv(at); });
    const auto mpi = given(cells, key, piv);
    std::vector<std::array<AdaptiveValues, 3>> out(static_cast<std::size_t>(cells));
    for (std::size_t h = 0; h < out.size(); ++h)
      for (std::size_t z = 0; z < 3; ++z) {
        auto& v = out[h][z];
        v.pi = pi[h * 3 + z];
        v.xi = xi[h * 3 + z];
        v.delta = delta[h];
        v.eta = eta[h];
        v.kappa = kappa[h];
        v.gamma = (wpi[h] - eta[h] * mpi[h]) / kappa[h];
      }
    return out;
  }

  static PanelDataset panel_from(const std::vector<LongAtom>& atoms) {
    const Index n = static_cast<Index>(atoms.size());
    std::vector<Eigen::MatrixXd> z(2, Eigen::MatrixXd(n, 1)), l(2, Eigen::MatrixXd(n, 1));
    std::vector<Eigen::VectorXd> a(2, Eigen::VectorXd(n));
    Eigen::VectorXd y(n);
    std::vector<std::string> ids;
    for (Index i = 0; i < n; ++i) {
      const auto& at = atoms[static_cast<std::size_t>(i)];
      z[0](i, 0) = at.z0;
      z[1](i, 0) = at.z1;
      l[0](i, 0) = at.l0;
      l[1](i, 0) = at.l1;
      a[0](i) = at.a0;
      a[1](i) = at.a1;
      y(i) = at.y;
      ids.push_back(std::to_string(i + 1));
    }
    return PanelDataset(std::move(ids), std::move(z), std::move(a), std::move(l), std::move(y), {2, 2});
  }

  LongitudinalOracleSpec spec_;
  std::vector<LongAtom> atoms_;
};

}  // namespace addiv
