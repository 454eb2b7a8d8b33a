#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "oracle.hpp"
#include "regime.hpp"
#include "rng.hpp"

namespace addiv {

// ---------- point exposure designs ----------

struct PointDGPSpec {
  int outcome = 1;    // Y1 or Y2
  int treatment = 1;  // A1 or A2
  Index n = 5000;
  std::uint64_t seed = 0;
  bool noise = true;  // false zeroes eps_Z and eps_Y

  std::string name() const { return "y" + std::to_string(outcome) + "a" + std::to_string(treatment); }
};

struct PointDraw {
  PointDataset data;
  Eigen::VectorXd u;
  Eigen::VectorXd treat_prob;
};

inline double point_treat_prob(int design, double z, double u, double l) {
  return design == 1 ? 0.7 * normal_cdf(-2.0 * z + 2.0 * l) + 0.3 * normal_cdf(3.0 * u - l) : logistic(z - l + u);
}

inline double point_outcome(int design, int a, double u, double l, double eps) {
  if (design == 1) return 2.0 * u - 2.0 * l + 4.0 * a * l + eps;
  return (1 - a) * (3.0 * std::cos(2.0 * u) - 3.0 * std::cos(2.0 * l)) + a * (3.0 * std::sin(2.0 * u) + 2.0 * l) + eps;
}

// Observation i draws from its own stream, so a dataset is a prefix of any larger one.
inline PointDraw draw_point(const PointDGPSpec& s) {
  if (s.n < 1) throw InvalidArgument("sample size n must be positive");
  if ((s.outcome != 1 && s.outcome != 2) || (s.treatment != 1 && s.treatment != 2))
    throw InvalidArgument("point design must be Y1/Y2 x A1/A2");
  Eigen::MatrixXd z(s.n, 1), l(s.n, 1);
  Eigen::VectorXd a(s.n), y(s.n), u(s.n), p(s.n);
  for (Index i = 0; i < s.n; ++i) {
    CounterRng rng(s.seed, Stream::Data, static_cast<std::uint64_t>(i));
    const double ui = rng.uniform(-1.0, 1.0), li = rng.uniform(-1.0, 1.0);
    const double ez = rng.normal(), ua = rng.uniform(), ey = rng.normal();
    const double zi = li + std::sin(3.0 * li) + (s.noise ? 2.0 * ez : 0.0);
    p(i) = point_treat_prob(s.treatment, zi, ui, li);
    const int ai = ua < p(i) ? 1 : 0;
    z(i, 0) = zi;
    l(i, 0) = li;
    a(i) = ai;
    u(i) = ui;
    y(i) = point_outcome(s.outcome, ai, ui, li, s.noise ? ey : 0.0);
  }
  PointDraw out{PointDataset(z, a, y, l, 2), u, p};
  out.data.latent_u = u;
  return out;
}

inline PointDataset generate_point(const PointDGPSpec& s) { return draw_point(s).data; }

// ---------- continuous treatment (Gaussian mixture AIV) ----------

// U, L ~ Ber(1/2), Z | L ~ Ber(0.3 + 0.4 L). The density of A is the equal mixture of
// N(U + 0.5 L, 1) and N(2 Z - 0.5 + 0.3 L, 1), additive in a U-part and a Z-part.
// Y = A (1 + U) + 0.5 L + U + N(0, 1), so E[Y(a)] = 1.5 a + 0.75.
struct ContinuousDGPSpec {
  Index n = 5000;
  std::uint64_t seed = 0;

  static double truth(double a) { return 1.5 * a + 0.75; }
};

inline PointDataset generate_continuous(const ContinuousDGPSpec& s) {
  if (s.n < 1) throw InvalidArgument("sample size n must be positive");
  Eigen::MatrixXd z(s.n, 1), l(s.n, 1);
  Eigen::VectorXd a(s.n), y(s.n), u(s.n);
  for (Index i = 0; i < s.n; ++i) {
    CounterRng rng(s.seed, Stream::Data, static_cast<std::uint64_t>(i));
    const int ui = rng.bernoulli(0.5), li = rng.bernoulli(0.5);
    const int zi = rng.bernoulli(0.3 + 0.4 * li);
    const bool first = rng.bernoulli(0.5);
    const double ea = rng.normal(), ey = rng.normal();
    const double ai = (first ? ui + 0.5 * li : 2.0 * zi - 0.5 + 0.3 * li) + ea;
    z(i, 0) = zi;
    l(i, 0) = li;
    a(i) = ai;
    u(i) = ui;
    y(i) = ai * (1.0 + ui) + 0.5 * li + ui + ey;
  }
  PointDataset d(z, a, y, l, 0);
  d.latent_u = u;
  return d;
}

// ---------- longitudinal design (T = 1) ----------

struct LongitudinalDGPSpec {
  Index n = 5000;
  std::uint64_t seed = 0;
};

// Chooses A_t from the history row H_t = [Z-bar_{t-1}, A-bar_{t-1}, L-bar_t] and the natural draw.
using TreatmentPolicy = std::function<int(int t, const Eigen::RowVectorXd& h, int natural)>;

struct LongDraw {
  double z0, a0, l0, z1, a1, l1, y, u0, u1;
};

inline LongDraw draw_long(CounterRng& rng, const TreatmentPolicy& policy) {
  const double el0 = rng.normal(), eu0 = rng.normal(), ez0 = rng.normal(), ua0 = rng.uniform();
  const double el1 = rng.normal(), eu1 = rng.normal(), ez1 = rng.normal(), ua1 = rng.uniform(), ey = rng.normal();
  LongDraw d{};
  d.l0 = 1.5 * el0;
  d.u0 = 1.5 * eu0;
  d.z0 = 0.3 * d.l0 + std::sin(1.5 * d.l0) + 2.0 * ez0;
  const int a0n = ua0 < 0.7 * normal_cdf(-2.0 * d.z0 + 0.6 * d.l0) + 0.3 * normal_cdf(3.0 * d.u0 - d.l0) ? 1 : 0;
  Eigen::RowVectorXd h0(1);
  h0 << d.l0;
  d.a0 = policy ? policy(0, h0, a0n) : a0n;
  d.l1 = (d.a0 - 0.5) + 0.5 * d.l0 + 0.3 * d.u0 + 0.5 * el1;
  d.u1 = (d.a0 - 0.5) + 0.5 * d.u0 + 0.3 * d.l1 + 0.5 * eu1;
  d.z1 = 0.5 * d.l1 - 0.5 * (d.a0 - 0.5) - 0.3 * d.z0 + 2.0 * ez1;
  const int a1n = ua1 < 0.7 * normal_cdf(-2.0 * d.z1 + d.l1) + 0.3 * normal_cdf(3.0 * d.u1 - d.l1) ? 1 : 0;
  Eigen::RowVectorXd h1(4);
  h1 << d.z0, d.a0, d.l0, d.l1;
  d.a1 = policy ? policy(1, h1, a1n) : a1n;
  d.y = (d.a1 - 0.5) + 2.0 * d.l1 + d.u1 + 0.5 * ey;
  return d;
}

inline PanelDataset generate_longitudinal(const LongitudinalDGPSpec& s) {
  if (s.n < 1) throw InvalidArgument("sample size n must be positive");
  std::vector<Eigen::MatrixXd> z(2, Eigen::MatrixXd(s.n, 1)), l(2, Eigen::MatrixXd(s.n, 1));
  std::vector<Eigen::VectorXd> a(2, Eigen::VectorXd(s.n));
  Eigen::VectorXd y(s.n);
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(s.n));
  for (Index i = 0; i < s.n; ++i) {
    CounterRng rng(s.seed, Stream::Data, static_cast<std::uint64_t>(i));
    const LongDraw d = draw_long(rng, {});
    z[0](i, 0) = d.z0;
    z[1](i, 0) = d.z1;
    l[0](i, 0) = d.l0;
    l[1](i, 0) = d.l1;
    a[0](i) = d.a0;
    a[1](i) = d.a1;
    y(i) = d.y;
    ids.push_back(std::to_string(i + 1));
  }
  return PanelDataset(std::move(ids), std::move(z), std::move(a), std::move(l), std::move(y), {2, 2});
}

// ---------- truths ----------

enum class TruthSource { Enumeration, ClosedForm, Resimulation };

inline std::string to_string(TruthSource s) {
  switch (s) {
    case TruthSource::Enumeration: return "enumeration";
    case TruthSource::ClosedForm: return "closed-form";
    case TruthSource::Resimulation: return "re-simulation";
  }
  return {};
}

struct Truth {
  double value = 0.0;
  TruthSource source = TruthSource::ClosedForm;
};

// Both point outcome models have E[Y(1)] = E[Y(0)] = 0 because U and L are symmetric about 0.
inline Truth point_truth(const PointDGPSpec&, const PointTarget&) { return {0.0, TruthSource::ClosedForm}; }

// E[Y] = E[A_1] - 0.5 + 3.3 (E[A_0] - 0.5) for any regime in which A_1 does not feed back into
// (L_1, U_1); natural A_0 has mean 0.5 by the symmetry (L_0, U_0, eps_Z0) -> -(L_0, U_0, eps_Z0).
inline std::optional<double> longitudinal_closed_form(const Regime& r) {
  if (r.rules.size() != 2) return std::nullopt;
  const auto& r0 = r.rules[0];
  const auto& r1 = r.rules[1];
  double ea0 = 0.0;
  if (r0.kind == RegimeRule::Kind::Level) ea0 = r0.level;
  else if (r0.kind == RegimeRule::Kind::Natural) ea0 = 0.5;
  else return std::nullopt;
  double ea1 = 0.0;
  if (r1.kind == RegimeRule::Kind::Level) {
    ea1 = r1.level;
  } else if (r1.kind == RegimeRule::Kind::Threshold && r0.kind == RegimeRule::Kind::Natural && r1.coordinate == "l1_0") {
    // The cut is the observational quantile and L_1 keeps its observational law.
    ea1 = r1.below ? r1.quantile : 1.0 - r1.quantile;
  } else {
    return std::nullopt;
  }
  return (ea1 - 0.5) + 3.3 * (ea0 - 0.5);
}

inline std::vector<std::string> long_history_names(int t) {
  return t == 0 ? std::vector<std::string>{"l0_0"} : std::vector<std::string>{"z0_0", "a0", "l0_0", "l1_0"};
}

// Mean outcome under the regime by re-simulating n_truth subjects with A_t forced to g_t(H_t).
// Threshold cutpoints are quantiles of an observational sample of the same size.
inline double compute_truth_by_intervention(const Regime& regime, Index n_truth = 100000, std::uint64_t seed = 0) {
  if (regime.rules.size() != 2) throw InvalidArgument("the longitudinal design has T = 1 (two periods)");
  if (n_truth < 1) throw InvalidArgument("n_truth must be positive");
  std::vector<FittedRule> rules;
  std::optional<PanelDataset> obs;
  for (int t = 0; t < 2; ++t) {
    const auto& rule = regime.rules[static_cast<std::size_t>(t)];
    FittedRule f{rule, -1, 0.0};
    if (rule.kind == RegimeRule::Kind::Threshold) {
      if (!obs) obs = generate_longitudinal({n_truth, splitmix64(seed ^ 0x7475u)});
      Rows all(static_cast<std::size_t>(n_truth));
      for (Index i = 0; i < n_truth; ++i) all[static_cast<std::size_t>(i)] = i;
      f = fit_rule(rule, long_history_names(t), obs->history(t), all, t);
    }
    rules.push_back(f);
  }
  const TreatmentPolicy policy = [&](int t, const Eigen::RowVectorXd& h, int natural) {
    const auto& f = rules[static_cast<std::size_t>(t)];
    return f.apply(f.column >= 0 ? h(f.column) : 0.0, natural);
  };
  double sum = 0.0;
  for (Index i = 0; i < n_truth; ++i) {
    CounterRng rng(seed, Stream::Truth, static_cast<std::uint64_t>(i));
    sum += draw_long(rng, policy).y;
  }
  return sum / static_cast<double>(n_truth);
}

namespace detail {
inline std::mutex& truth_mutex() {
  static std::mutex m;
  return m;
}
inline std::map<std::string, double>& truth_cache() {
  static std::map<std::string, double> c;
  return c;
}
}  // namespace detail

// Closed form when available, otherwise a cached re-simulation.
inline Truth longitudinal_truth(const Regime& regime, Index n_truth = 100000, std::uint64_t seed = 0) {
  if (const auto cf = longitudinal_closed_form(regime)) return {*cf, TruthSource::ClosedForm};
  const std::string key = "long-t1|" + regime.describe() + "|" + std::to_string(n_truth) + "|" + std::to_string(seed);
  {
    std::lock_guard<std::mutex> lock(detail::truth_mutex());
    const auto it = detail::truth_cache().find(key);
    if (it != detail::truth_cache().end()) return {it->second, TruthSource::Resimulation};
  }
  const double v = compute_truth_by_intervention(regime, n_truth, seed);
  std::lock_guard<std::mutex> lock(detail::truth_mutex());
  detail::truth_cache()[key] = v;
  return {v, TruthSource::Resimulation};
}

// ---------- registry ----------

struct DgpInfo {
  std::string name;
  std::string description;
  bool longitudinal = false;
};

inline const std::vector<DgpInfo>& dgp_registry() {
  static const std::vector<DgpInfo> r{
      {"y1a1", "point exposure, outcome Y1, treatment A1 (AIV holds)", false},
      {"y1a2", "point exposure, outcome Y1, treatment A2 (logistic, AIV fails)", false},
      {"y2a1", "point exposure, outcome Y2, treatment A1", false},
      {"y2a2", "point exposure, outcome Y2, treatment A2", false},
      {"long-t1", "longitudinal design with T = 1", true},
      {"dose-gm", "continuous treatment, Gaussian-mixture AIV", false},
      {"oracle-aiv", "discrete AIV oracle (sampled from the enumerated law)", false},
      {"oracle-miv", "discrete MIV oracle (sampled from the enumerated law)", false},
      {"oracle-long", "discrete T = 1 AIV oracle (sampled from the enumerated law)", true},
  };
  return r;
}

inline std::string dgp_names() {
  std::string s;
  for (const auto& d : dgp_registry()) s += (s.empty() ? "" : ", ") + d.name;
  return s;
}

inline const DgpInfo& find_dgp(const std::string& name) {
  for (const auto& d : dgp_registry())
    if (d.name == name) return d;
  throw InvalidArgument("unknown DGP '" + name + "' (valid: " + dgp_names() + ")");
}

inline PointDGPSpec point_spec(const std::string& name, Index n, std::uint64_t seed) {
  if (name.size() != 4 || name[0] != 'y' || name[2] != 'a') throw InvalidArgument("not a point design: " + name);
  return {name[1] - '0', name[3] - '0', n, seed, true};
}

struct GeneratedData {
  std::optional<PointDataset> point;
  std::optional<PanelDataset> panel;
};

inline GeneratedData generate(const std::string& name, Index n, std::uint64_t seed) {
  const auto& info = find_dgp(name);
  if (n < 1) throw InvalidArgument("sample size n must be positive");
  GeneratedData g;
  if (info.name == "long-t1") g.panel = generate_longitudinal({n, seed});
  else if (info.name == "oracle-long") g.panel = LongitudinalOracle().sample(n, seed);
  else if (info.name == "dose-gm") g.point = generate_continuous({n, seed});
  else if (info.name == "oracle-aiv") g.point = PointOracle(aiv_oracle()).sample(n, seed);
  else if (info.name == "oracle-miv") g.point = PointOracle(miv_oracle()).sample(n, seed);
  else g.point = generate_point(point_spec(info.name, n, seed));
  return g;
}

}  // namespace addiv
