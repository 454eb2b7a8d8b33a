#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "common.hpp"
#include "csv.hpp"
#include "data.hpp"
#include "dgp.hpp"
#include "dose.hpp"
#include "longitudinal.hpp"
#include "nuisance.hpp"
#include "oracle.hpp"
#include "point.hpp"
#include "regime.hpp"
#include "weighting.hpp"

namespace addiv {

// ---------- estimator dispatch ----------

struct EstimatorChoice {
  std::string estimator = "fixed";  // fixed | adaptive | miv | dose | dtr
  std::string weight = "identity:0";
  std::optional<int> level;         // point: unset means the ATE
  std::string regime;               // longitudinal, e.g. "0,1" or "x,below:l1_0:0.8"
  double a0 = 0.0;                  // dose
  int bootstrap_reps = 200;         // dose variance
};

inline EstimateReport run_point_estimator(const EstimatorChoice& c, const PointDataset& d, int K, std::uint64_t seed,
                                          const EstimatorConfig& cfg) {
  if (c.estimator == "dose") {
    if (!d.continuous_treatment()) throw InvalidArgument("--estimator dose requires a continuous treatment");
    return estimate_dose_response(d, c.a0, WeightingFunctionSpec::parse(c.weight), seed, cfg, c.bootstrap_reps);
  }
  if (d.continuous_treatment()) throw InvalidArgument("estimator '" + c.estimator + "' requires a categorical treatment");
  if (c.estimator == "fixed") {
    const auto pi = WeightingFunctionSpec::parse(c.weight);
    return c.level ? estimate_mean_po(d, *c.level, pi, K, seed, cfg) : estimate_ate_fixed_pi(d, pi, K, seed, cfg);
  }
  if (c.estimator == "adaptive")
    return c.level ? estimate_mean_po_adaptive(d, *c.level, K, seed, cfg) : estimate_ate_adaptive(d, K, seed, cfg);
  if (c.estimator == "miv") {
    if (!c.level) throw InvalidArgument("--estimator miv needs --level");
    return estimate_mean_po_miv(d, *c.level, WeightingFunctionSpec::parse(c.weight), K, seed, cfg);
  }
  throw InvalidArgument("unknown point estimator '" + c.estimator + "' (valid: fixed, adaptive, miv, dose)");
}

inline EstimateReport run_panel_estimator(const EstimatorChoice& c, const PanelDataset& d, int K, std::uint64_t seed,
                                          const EstimatorConfig& cfg) {
  if (c.regime.empty()) throw InvalidArgument("longitudinal estimators need --regime");
  const Regime regime = Regime::parse(c.regime);
  LongitudinalOptions opt;
  opt.pi_transforms = {WeightingFunctionSpec::parse(c.weight)};
  if (c.estimator == "fixed") {
    if (!regime.is_static()) throw InvalidArgument("--estimator fixed takes a static regime; use dtr for '" + c.regime + "'");
    return estimate_longitudinal_static(d, regime.levels(), K, seed, cfg, opt);
  }
  if (c.estimator == "dtr") return estimate_longitudinal_dtr(d, regime, K, seed, cfg, opt);
  if (c.estimator == "adaptive") {
    if (!regime.is_static()) throw InvalidArgument("--estimator adaptive takes a static regime");
    return estimate_longitudinal_adaptive(d, regime.levels(), K, seed, cfg);
  }
  throw InvalidArgument("unknown longitudinal estimator '" + c.estimator + "' (valid: fixed, dtr, adaptive)");
}

inline EstimateReport run_estimator(const EstimatorChoice& c, const GeneratedData& g, int K, std::uint64_t seed,
                                    const EstimatorConfig& cfg) {
  return g.panel ? run_panel_estimator(c, *g.panel, K, seed, cfg) : run_point_estimator(c, *g.point, K, seed, cfg);
}

// Truth for a registry DGP; enumeration beats closed form beats re-simulation.
inline Truth truth_for(const std::string& dgp, const EstimatorChoice& c, Index n_truth = 100000,
                       std::uint64_t truth_seed = 0) {
  const auto& info = find_dgp(dgp);
  if (info.name == "oracle-aiv" || info.name == "oracle-miv") {
    const PointOracle o(info.name == "oracle-aiv" ? aiv_oracle() : miv_oracle());
    return {c.level ? o.mean_potential(*c.level) : o.ate(), TruthSource::Enumeration};
  }
  if (info.name == "oracle-long") {
    const Regime r = Regime::parse(c.regime);
    if (r.rules.size() != 2) throw InvalidArgument("oracle-long has two periods");
    std::array<OracleRule, 2> rules;
    for (std::size_t t = 0; t < 2; ++t) {
      if (r.rules[t].kind == RegimeRule::Kind::Threshold)
        throw InvalidArgument("threshold rules are not enumerable on oracle-long");
      if (r.rules[t].kind == RegimeRule::Kind::Level) rules[t] = OracleRule{r.rules[t].level, {}};
    }
    return {LongitudinalOracle().value(rules), TruthSource::Enumeration};
  }
  if (info.name == "long-t1") return longitudinal_truth(Regime::parse(c.regime), n_truth, truth_seed);
  if (info.name == "dose-gm") return {ContinuousDGPSpec::truth(c.a0), TruthSource::ClosedForm};
  if (c.level && (*c.level < 0 || *c.level > 1)) throw InvalidArgument("point designs have levels 0 and 1");
  return point_truth(point_spec(info.name, 1, 0), c.level ? PointTarget::mean_outcome(*c.level) : PointTarget::average_effect());
}

// ---------- Monte Carlo ----------

struct ReplicateRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double psi_hat = 0.0, std_error = 0.0, ci_lower = 0.0, ci_upper = 0.0;
};

struct MonteCarloArm {
  std::string label;
  std::string method;  // table grouping, e.g. "adaptive" / "prespecified"
  std::string column;  // e.g. "treated" / "control" / "ate" / "(0,1)"
  EstimatorChoice choice;
  // Replaces the registry estimator when set; the truth still comes from choice.
  std::function<EstimateReport(const GeneratedData&, int K, std::uint64_t seed)> custom;
};

struct MonteCarloPlan {
  std::string dgp;
  Index n = 5000;
  int K = 2;
  std::vector<MonteCarloArm> arms;
  Index n_truth = 100000;
  std::uint64_t truth_seed = 0;
};

struct MonteCarloSummary {
  std::string label, dgp, method, column;
  Index n = 0;
  int reps = 0;
  int failures = 0;
  bool aborted = false;
  double truth = 0.0;
  TruthSource truth_source = TruthSource::ClosedForm;
  double bias = 0.0, se = 0.0, sd = 0.0, cr = 0.0;
  std::vector<ReplicateRecord> records;
};

inline constexpr double kMaxFailureFraction = 0.05;

inline MonteCarloSummary summarize_replicates(MonteCarloSummary s) {
  s.reps = static_cast<int>(s.records.size());
  std::vector<double> psi;
  double se = 0.0;
  int covered = 0;
  s.failures = 0;
  for (const auto& r : s.records) {
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    psi.push_back(r.psi_hat);
    se += r.std_error;
    covered += r.ci_lower <= s.truth && s.truth <= r.ci_upper;
  }
  s.aborted = s.failures > kMaxFailureFraction * s.reps || psi.size() < 2;
  if (psi.empty()) return s;
  const double m = std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
  double ss = 0.0;
  for (double v : psi) ss += (v - m) * (v - m);
  s.bias = m - s.truth;
  s.se = se / static_cast<double>(psi.size());
  s.sd = psi.size() > 1 ? std::sqrt(ss / static_cast<double>(psi.size() - 1)) : 0.0;
  s.cr = static_cast<double>(covered) / static_cast<double>(psi.size());
  return s;
}

// Replicate r uses seed base + r for data and folds; every arm sees the same dataset.
inline std::vector<MonteCarloSummary> run_monte_carlo(const MonteCarloPlan& plan, int R, std::uint64_t base_seed, int jobs,
                                                      const EstimatorConfig& cfg = {}, std::ostream* progress = nullptr) {
  if (R < 2) throw InvalidArgument("Monte Carlo needs at least 2 replicates");
  if (jobs < 1) throw InvalidArgument("--jobs must be at least 1");
  find_dgp(plan.dgp);
  std::vector<MonteCarloSummary> out;
  for (const auto& arm : plan.arms) {
    MonteCarloSummary s;
    s.label = arm.label;
    s.dgp = plan.dgp;
    s.method = arm.method;
    s.column = arm.column;
    s.n = plan.n;
    const Truth t = truth_for(plan.dgp, arm.choice, plan.n_truth, plan.truth_seed);
    s.truth = t.value;
    s.truth_source = t.source;
    s.records.resize(static_cast<std::size_t>(R));
    out.push_back(std::move(s));
  }
  std::atomic<int> next{0}, done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (int r = next++; r < R; r = next++) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
      std::optional<GeneratedData> g;
      std::string gen_error;
      try {
        g = generate(plan.dgp, plan.n, seed);
      } catch (const std::exception& e) {
        gen_error = e.what();
      }
      for (std::size_t a = 0; a < plan.arms.size(); ++a) {
        ReplicateRecord rec;
        rec.rep = r;
        rec.seed = seed;
        if (!g) {
          rec.error = gen_error;
        } else {
          try {
            const auto& arm = plan.arms[a];
            const auto rep = arm.custom ? arm.custom(*g, plan.K, seed) : run_estimator(arm.choice, *g, plan.K, seed, cfg);
            rec.ok = std::isfinite(rep.psi_hat) && std::isfinite(rep.std_error);
            if (!rec.ok) rec.error = "non-finite estimate";
            rec.psi_hat = rep.psi_hat;
            rec.std_error = rep.std_error;
            rec.ci_lower = rep.ci_lower;
            rec.ci_upper = rep.ci_upper;
          } catch (const InvalidArgument&) {
            throw;
          } catch (const Error& e) {
            rec.error = e.what();
          }
        }
        out[a].records[static_cast<std::size_t>(r)] = rec;
      }
      const int d = ++done;
      if (progress && (d % 10 == 0 || d == R)) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        *progress << "[" << plan.dgp << "] " << d << "/" << R << " replicates\n" << std::flush;
      }
    }
  };
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto guarded = [&] {
    try {
      worker();
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = R;
    }
  };
  if (jobs == 1) {
    guarded();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(guarded);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& s : out) s = summarize_replicates(std::move(s));
  return out;
}

// ---------- presets ----------

inline const std::vector<std::string>& table1_dgps() {
  static const std::vector<std::string> d{"y1a1", "y2a1", "y1a2", "y2a2"};
  return d;
}

inline const std::vector<std::string>& table2_regimes() {
  static const std::vector<std::string> r{"0,0", "0,1", "1,0", "1,1", "x,0", "x,1"};
  return r;
}

inline std::vector<MonteCarloArm> table1_arms() {
  std::vector<MonteCarloArm> arms;
  for (const std::string method : {"adaptive", "prespecified"})
    for (const std::string column : {"treated", "control", "ate"}) {
      MonteCarloArm a;
      a.method = method;
      a.column = column;
      a.label = method + " " + column;
      a.choice.estimator = method == "adaptive" ? "adaptive" : "fixed";
      a.choice.weight = "identity:0";
      if (column == "treated") a.choice.level = 1;
      if (column == "control") a.choice.level = 0;
      arms.push_back(a);
    }
  return arms;
}

inline std::vector<MonteCarloPlan> table1_plans(Index n = 5000, int K = 2) {
  std::vector<MonteCarloPlan> plans;
  for (const auto& d : table1_dgps()) {
    MonteCarloPlan p;
    p.dgp = d;
    p.n = n;
    p.K = K;
    p.arms = table1_arms();
    for (auto& a : p.arms) a.label = d + " " + a.label;
    plans.push_back(p);
  }
  return plans;
}

inline MonteCarloPlan table2_plan(Index n = 5000, int K = 2, Index n_truth = 100000) {
  MonteCarloPlan p;
  p.dgp = "long-t1";
  p.n = n;
  p.K = K;
  p.n_truth = n_truth;
  for (const auto& r : table2_regimes()) {
    MonteCarloArm a;
    a.choice.estimator = "dtr";
    a.choice.regime = r;
    a.method = "fixed";
    a.column = Regime::parse(r).describe();
    a.label = "long-t1 " + a.column;
    p.arms.push_back(a);
  }
  return p;
}

// ---------- output ----------

inline std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct TableOutput {
  std::string layout;  // the layout actually rendered
  std::string text;
  std::string csv;
};

namespace detail {

inline const MonteCarloSummary* find_summary(const std::vector<MonteCarloSummary>& s, const std::string& dgp,
                                             const std::string& method, const std::string& column) {
  for (const auto& x : s)
    if (x.dgp == dgp && x.method == method && x.column == column) return &x;
  return nullptr;
}

inline double metric(const MonteCarloSummary& s, const std::string& m) {
  if (m == "Bias") return s.bias;
  if (m == "SE") return s.se;
  if (m == "SD") return s.sd;
  return s.cr;
}

inline std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

inline std::string dgp_title(const std::string& d) {
  return d.size() == 4 ? "(Y" + d.substr(1, 1) + ",A" + d.substr(3, 1) + ")" : d;
}

}  // namespace detail

inline TableOutput emit_generic(const std::vector<MonteCarloSummary>& s) {
  TableOutput t{"generic", "", ""};
  std::ostringstream txt, csv;
  txt << detail::pad("estimand", 36) << detail::pad("reps", 6) << detail::pad("fail", 6) << detail::pad("truth", 10)
      << detail::pad("Bias", 10) << detail::pad("SE", 10) << detail::pad("SD", 10) << "CR\n";
  csv << "label,dgp,n,reps,failures,truth,truth_source,bias,se,sd,cr\n";
  for (const auto& x : s) {
    txt << detail::pad(x.label, 36) << detail::pad(std::to_string(x.reps), 6) << detail::pad(std::to_string(x.failures), 6)
        << detail::pad(fmt4(x.truth), 10) << detail::pad(fmt4(x.bias), 10) << detail::pad(fmt4(x.se), 10)
        << detail::pad(fmt4(x.sd), 10) << fmt4(x.cr) << (x.aborted ? "  ABORTED" : "") << "\n";
    csv << csv_escape(x.label) << "," << x.dgp << "," << x.n << "," << x.reps << "," << x.failures << ","
        << format_double(x.truth) << "," << to_string(x.truth_source) << "," << format_double(x.bias) << ","
        << format_double(x.se) << "," << format_double(x.sd) << "," << format_double(x.cr) << "\n";
  }
  t.text = txt.str();
  t.csv = csv.str();
  return t;
}

// layout: "table1" (4 designs x 2 methods x 3 estimands), "table2" (six interventions), or
// "generic". A layout whose grid is incomplete falls back to generic.
inline TableOutput emit_table(const std::vector<MonteCarloSummary>& s, const std::string& layout) {
  static const std::vector<std::string> metrics{"Bias", "SE", "SD", "CR"};
  if (layout == "table1") {
    bool complete = !s.empty();
    for (const auto& d : table1_dgps())
      for (const std::string m : {"adaptive", "prespecified"})
        for (const std::string c : {"treated", "control", "ate"}) complete = complete && detail::find_summary(s, d, m, c);
    if (!complete) return emit_generic(s);
    TableOutput t{"table1", "", ""};
    std::ostringstream txt, csv;
    txt << detail::pad("DGP", 10) << detail::pad("Metric", 8) << "| Adaptive weight          | Prespecified (pi(Z,L)=Z)\n"
        << detail::pad("", 18) << "| Treated Control ATE     | Treated Control ATE\n";
    csv << "dgp,metric,adaptive_treated,adaptive_control,adaptive_ate,prespecified_treated,prespecified_control,"
           "prespecified_ate\n";
    for (const auto& d : table1_dgps())
      for (const auto& m : metrics) {
        txt << detail::pad(m == "Bias" ? detail::dgp_title(d) : "", 10) << detail::pad(m, 8) << "|";
        csv << d << "," << m;
        for (const std::string meth : {"adaptive", "prespecified"}) {
          for (const std::string c : {"treated", "control", "ate"}) {
            const double v = detail::metric(*detail::find_summary(s, d, meth, c), m);
            txt << " " << fmt4(v);
            csv << "," << fmt4(v);
          }
          txt << (meth == "adaptive" ? "  |" : "");
        }
        txt << "\n";
        csv << "\n";
      }
    t.text = txt.str();
    t.csv = csv.str();
    return t;
  }
  if (layout == "table2") {
    std::vector<std::string> cols;
    for (const auto& r : table2_regimes()) cols.push_back(Regime::parse(r).describe());
    std::vector<Index> sizes;
    for (const auto& x : s)
      if (std::find(sizes.begin(), sizes.end(), x.n) == sizes.end()) sizes.push_back(x.n);
    bool complete = !s.empty();
    for (Index n : sizes)
      for (const auto& c : cols) {
        bool found = false;
        for (const auto& x : s) found = found || (x.n == n && x.column == c);
        complete = complete && found;
      }
    if (!complete) return emit_generic(s);
    TableOutput t{"table2", "", ""};
    std::ostringstream txt, csv;
    txt << detail::pad("Size", 6) << detail::pad("Metric", 8) << "|";
    csv << "n,metric";
    for (const auto& c : cols) {
      txt << " " << detail::pad(c, 7);
      csv << "," << csv_escape(c);
    }
    txt << "\n";
    csv << "\n";
    for (Index n : sizes)
      for (const auto& m : metrics) {
        txt << detail::pad(m == "Bias" ? std::to_string(n) : "", 6) << detail::pad(m, 8) << "|";
        csv << n << "," << m;
        for (const auto& c : cols)
          for (const auto& x : s)
            if (x.n == n && x.column == c) {
              txt << " " << detail::pad(fmt4(detail::metric(x, m)), 7);
              csv << "," << fmt4(detail::metric(x, m));
              break;
            }
        txt << "\n";
        csv << "\n";
      }
    t.text = txt.str();
    t.csv = csv.str();
    return t;
  }
  if (layout != "generic") throw InvalidArgument("unknown table layout '" + layout + "' (valid: table1, table2, generic)");
  return emit_generic(s);
}

inline std::string records_csv(const std::vector<MonteCarloSummary>& s) {
  std::ostringstream out;
  out << "label,rep,seed,ok,psi_hat,std_error,ci_lower,ci_upper,covered,error\n";
  for (const auto& x : s)
    for (const auto& r : x.records)
      out << csv_escape(x.label) << "," << r.rep << "," << r.seed << "," << (r.ok ? 1 : 0) << ","
          << format_double(r.psi_hat) << "," << format_double(r.std_error) << "," << format_double(r.ci_lower) << ","
          << format_double(r.ci_upper) << "," << (r.ok && r.ci_lower <= x.truth && x.truth <= r.ci_upper ? 1 : 0) << ","
          << csv_escape(r.error) << "\n";
  return out.str();
}

inline nlohmann::json summaries_json(const std::vector<MonteCarloSummary>& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& x : s)
    arr.push_back({{"label", x.label},
                   {"dgp", x.dgp},
                   {"method", x.method},
                   {"column", x.column},
                   {"n", x.n},
                   {"reps", x.reps},
                   {"failures", x.failures},
                   {"aborted", x.aborted},
                   {"truth", x.truth},
                   {"truth_source", to_string(x.truth_source)},
                   {"bias", x.bias},
                   {"se", x.se},
                   {"sd", x.sd},
                   {"cr", x.cr}});
  return {{"schema_version", kSchemaVersion}, {"summaries", arr}};
}

}  // namespace addiv
