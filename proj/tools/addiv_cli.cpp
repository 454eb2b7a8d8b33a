#include <CLI11.hpp>
#include <addiv/addiv.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

using namespace addiv;
using nlohmann::json;

namespace {

// Flags merged with the optional TOML config; flags win.
struct RunConfig {
  std::string dgp, input, output, design = "point", estimator = "fixed", weight = "identity:0";
  std::string regime, preset, layout = "generic", check = "aiv", pi1, pi2;
  Index n = 5000;
  std::uint64_t seed = 1;
  int folds = 2, reps = 200, jobs = 1;
  std::optional<int> level;
  double a0 = 0.0;
  bool debug_latents = false;
  EstimatorConfig est;
};

class UsageError : public Error {
public:
  using Error::Error;
};

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json provenance(const CLI::App& sub, const RunConfig& c) {
  const std::string cfg = sub.config_to_str(true, false);
  return {{"version", kVersion},
          {"schema_version", kSchemaVersion},
          {"command", sub.get_name()},
          {"seed", c.seed},
          {"config_hash", hex64(fnv1a(cfg))},
          {"config", cfg}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

void validate_common(const RunConfig& c) {
  require(c.folds >= 2, "--folds must be at least 2");
  require(c.design == "point" || c.design == "longitudinal", "--design must be point or longitudinal");
  c.est.regressor.validate();
}

EstimatorChoice choice_of(const RunConfig& c) {
  EstimatorChoice e;
  e.estimator = c.estimator;
  e.weight = c.weight;
  e.level = c.level;
  e.regime = c.regime;
  e.a0 = c.a0;
  e.bootstrap_reps = c.reps;
  WeightingFunctionSpec::parse(c.weight);
  if (!c.regime.empty()) Regime::parse(c.regime);
  return e;
}

PointDataset load_point(const RunConfig& c) {
  PointSchema schema;
  if (c.estimator == "dose") schema.treatment_levels = -1;
  PointDataset d = load_point_csv(c.input, schema);
  if (c.estimator == "dose") {
    std::set<double> distinct(d.a().data(), d.a().data() + d.n());
    if (distinct.size() <= static_cast<std::size_t>(c.est.regressor.max_discrete_levels))
      throw InvalidArgument("--estimator dose requires a continuous treatment; column 'a' has " +
                            std::to_string(distinct.size()) + " distinct values");
  }
  return d;
}

GeneratedData load_input(const RunConfig& c) {
  require(!c.input.empty(), "--input is required");
  GeneratedData g;
  if (c.design == "longitudinal") g.panel = load_panel_csv(c.input);
  else g.point = load_point(c);
  return g;
}

void add_estimator_flags(CLI::App* s, RunConfig& c) {
  s->add_option("--estimator", c.estimator, "fixed | adaptive | miv | dose | dtr")
      ->check(CLI::IsMember({"fixed", "adaptive", "miv", "dose", "dtr"}));
  s->add_option("--weight", c.weight, "identity:j | expr:<expression> | propensity[:a]");
  s->add_option("--level", c.level, "treatment level a; omit for the ATE");
  s->add_option("--regime", c.regime, "per-period rules, e.g. 0,1 or x,below:l1_0:0.8");
  s->add_option("--a0", c.a0, "dose at which to evaluate E[Y(a0)]");
  s->add_option("--design", c.design, "point | longitudinal");
  s->add_option("--folds", c.folds, "cross-fitting folds K (>= 2)");
  s->add_option("--seed", c.seed, "seed");
  s->add_option("--kappa-tau", c.est.kappa_tau, "kappa floor as a fraction of sd(pi) sd(d)");
  s->add_option("--winsor-iqr", c.est.winsor_iqr, "longitudinal winsorization multiple of the IQR; <= 0 disables");
  s->add_option("--knots", c.est.regressor.interior_knots, "interior spline knots per input");
}

int cmd_simulate(const CLI::App& sub, const RunConfig& c) {
  require(!c.dgp.empty(), "--dgp is required");
  require(!c.output.empty(), "--out is required");
  require(c.n >= 1, "--n must be positive");
  const GeneratedData g = generate(c.dgp, c.n, c.seed);
  if (g.panel) {
    require(!c.debug_latents, "--debug-latents is only available for point designs");
    write_panel_csv(c.output, *g.panel);
  } else {
    write_point_csv(c.output, *g.point, c.debug_latents);
  }
  json meta = {{"provenance", provenance(sub, c)}, {"dgp", c.dgp}, {"n", c.n}, {"file", c.output}};
  write_json(c.output + ".provenance.json", meta);
  return 0;
}

int cmd_estimate(const CLI::App& sub, const RunConfig& c) {
  validate_common(c);
  require(!c.output.empty(), "--out is required");
  const EstimatorChoice e = choice_of(c);
  const GeneratedData g = load_input(c);
  EstimateReport r = run_estimator(e, g, c.folds, c.seed, c.est);
  r.provenance = provenance(sub, c);
  json j = r;
  write_json(c.output, j);
  return 0;
}

int cmd_montecarlo(const CLI::App& sub, const RunConfig& c) {
  validate_common(c);
  require(!c.output.empty(), "--out is required");
  require(c.reps >= 2, "--reps must be at least 2");
  std::vector<MonteCarloPlan> plans;
  std::string layout = c.layout;
  if (c.preset == "table1") {
    plans = table1_plans(c.n, c.folds);
    if (layout == "generic") layout = "table1";
  } else if (c.preset == "table2") {
    plans = {table2_plan(c.n, c.folds)};
    if (layout == "generic") layout = "table2";
  } else {
    require(c.preset.empty(), "--preset must be table1 or table2");
    require(!c.dgp.empty(), "--dgp or --preset is required");
    MonteCarloPlan p;
    p.dgp = c.dgp;
    p.n = c.n;
    p.K = c.folds;
    MonteCarloArm a;
    a.choice = choice_of(c);
    a.method = c.estimator;
    a.column = c.regime.empty() ? (c.level ? "level " + std::to_string(*c.level) : "ate") : c.regime;
    a.label = c.dgp + " " + c.estimator + " " + a.column;
    p.arms = {a};
    plans = {p};
  }
  std::vector<MonteCarloSummary> all;
  for (const auto& p : plans) {
    auto s = run_monte_carlo(p, c.reps, c.seed, c.jobs, c.est, &std::cerr);
    all.insert(all.end(), s.begin(), s.end());
  }
  const TableOutput t = emit_table(all, layout);
  json j = summaries_json(all);
  j["provenance"] = provenance(sub, c);
  j["layout"] = t.layout;
  write_json(c.output + ".summary.json", j);
  write_text(c.output + ".summary.csv", emit_generic(all).csv);
  write_text(c.output + ".table.csv", t.csv);
  write_text(c.output + ".table.txt", t.text);
  write_text(c.output + ".records.csv", records_csv(all));
  std::cout << t.text;
  bool aborted = false;
  for (const auto& s : all) aborted = aborted || s.aborted;
  if (aborted) throw Error("more than 5% of replicates failed in at least one summary; see " + c.output + ".records.csv");
  return 0;
}

int cmd_bootstrap(const CLI::App& sub, const RunConfig& c) {
  validate_common(c);
  require(!c.output.empty(), "--out is required");
  require(c.reps >= kMinBootstrapReps, "--reps must be at least " + std::to_string(kMinBootstrapReps));
  BootstrapResult b;
  std::string label;
  if (c.estimator == "mean") {
    require(!c.input.empty(), "--input is required");
    const PointDataset d = load_point_csv(c.input);
    label = "mean(y)";
    b = pairs_bootstrap([](const PointDataset& x, std::uint64_t) { return x.y().mean(); }, d, c.reps, c.seed);
  } else {
    const EstimatorChoice e = choice_of(c);
    const GeneratedData g = load_input(c);
    const int K = c.folds;
    const EstimatorConfig est = c.est;
    if (g.panel) {
      label = run_panel_estimator(e, *g.panel, K, c.seed, est).estimand;
      b = pairs_bootstrap(
          [&](const PanelDataset& x, std::uint64_t s) { return run_panel_estimator(e, x, K, s, est).psi_hat; }, *g.panel,
          c.reps, c.seed);
    } else {
      label = run_point_estimator(e, *g.point, K, c.seed, est).estimand;
      b = pairs_bootstrap(
          [&](const PointDataset& x, std::uint64_t s) { return run_point_estimator(e, x, K, s, est).psi_hat; }, *g.point,
          c.reps, c.seed);
    }
  }
  json j = {{"schema_version", kSchemaVersion},
            {"estimand", label},
            {"B", b.B},
            {"failures", b.failures},
            {"mean", b.mean},
            {"sd", b.sd},
            {"ci_lower", b.ci_lower},
            {"ci_upper", b.ci_upper},
            {"values", b.values},
            {"provenance", provenance(sub, c)}};
  write_json(c.output, j);
  return 0;
}

int cmd_diagnose(const CLI::App& sub, const RunConfig& c) {
  validate_common(c);
  require(!c.output.empty(), "--out is required");
  require(c.design == "point", "diagnostics take point-exposure data");
  json j = {{"schema_version", kSchemaVersion}, {"check", c.check}};
  if (c.check == "aiv") {
    require(!c.pi1.empty() && !c.pi2.empty(), "--check aiv needs both --pi1 and --pi2");
    const auto p1 = WeightingFunctionSpec::parse(c.pi1), p2 = WeightingFunctionSpec::parse(c.pi2);
    require(!c.input.empty(), "--input is required");
    const PointDataset d = load_point_csv(c.input);
    const auto r = diagnose_aiv(d, p1, p2, c.folds, c.seed, c.est, c.reps);
    j.update({{"pi1", r.pi1},
              {"pi2", r.pi2},
              {"psi1", r.psi1},
              {"psi2", r.psi2},
              {"difference", r.difference},
              {"boot_sd", r.boot_sd},
              {"statistic", r.statistic},
              {"p_value", r.p_value},
              {"B", r.B},
              {"failures", r.failures}});
  } else if (c.check == "confounding") {
    require(!c.input.empty(), "--input is required");
    const auto pi = WeightingFunctionSpec::parse(c.pi1.empty() ? c.weight : c.pi1);
    const PointDataset d = load_point_csv(c.input);
    const auto r = diagnose_latent_confounding(d, c.level.value_or(1), pi, c.folds, c.seed, c.est, c.reps);
    json bins = json::array();
    for (const auto& b : r.bins)
      bins.push_back({{"l_lower", b.l_lower}, {"l_upper", b.l_upper}, {"count", b.count}, {"mean", b.mean}});
    j.update({{"level", r.level},
              {"pi", r.pi},
              {"mean", r.mean},
              {"boot_sd", r.boot_sd},
              {"band_lower", r.band_lower},
              {"band_upper", r.band_upper},
              {"B", r.B},
              {"bins", bins}});
  } else {
    throw UsageError("--check must be aiv or confounding");
  }
  j["provenance"] = provenance(sub, c);
  write_json(c.output, j);
  return 0;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::string one_line = message;
  for (auto& ch : one_line)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << json{{"error", kind}, {"message", one_line}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-fitted estimators for additive and multiplicative instrumental variables"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_version_flag("--version", std::string(kVersion));
  app.option_defaults()->always_capture_default();

  RunConfig c;
  auto* sim = app.add_subcommand("simulate", "draw a dataset from a named DGP");
  sim->add_option("--dgp", c.dgp, "DGP name");
  sim->add_option("--n", c.n, "sample size");
  sim->add_option("--seed", c.seed, "seed");
  sim->add_option("--out", c.output, "output CSV");
  sim->add_flag("--debug-latents", c.debug_latents, "include the latent confounder column u");

  auto* est = app.add_subcommand("estimate", "estimate a causal target from a CSV");
  est->add_option("--input", c.input, "input CSV");
  est->add_option("--out", c.output, "report JSON");
  add_estimator_flags(est, c);

  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo study on a named DGP or preset");
  mc->add_option("--dgp", c.dgp, "DGP name");
  mc->add_option("--preset", c.preset, "table1 | table2");
  mc->add_option("--n", c.n, "sample size per replicate");
  mc->add_option("--reps", c.reps, "replicates R");
  mc->add_option("--jobs", c.jobs, "worker threads");
  mc->add_option("--layout", c.layout, "table1 | table2 | generic");
  mc->add_option("--out", c.output, "output prefix");
  add_estimator_flags(mc, c);

  auto* bs = app.add_subcommand("bootstrap", "pairs bootstrap of an estimator");
  bs->add_option("--input", c.input, "input CSV");
  bs->add_option("--reps", c.reps, "bootstrap replicates B (>= 50)");
  bs->add_option("--out", c.output, "report JSON");
  add_estimator_flags(bs, c);
  bs->get_option("--estimator")->check(CLI::IsMember({"fixed", "adaptive", "miv", "dose", "dtr", "mean"}));

  auto* dg = app.add_subcommand("diagnose", "AIV and latent-confounding diagnostics");
  dg->add_option("--input", c.input, "input CSV");
  dg->add_option("--check", c.check, "aiv | confounding")->check(CLI::IsMember({"aiv", "confounding"}));
  dg->add_option("--pi1", c.pi1, "first weighting function");
  dg->add_option("--pi2", c.pi2, "second weighting function");
  dg->add_option("--reps", c.reps, "bootstrap replicates");
  dg->add_option("--out", c.output, "report JSON");
  add_estimator_flags(dg, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*sim) return cmd_simulate(*sim, c);
    if (*est) return cmd_estimate(*est, c);
    if (*mc) return cmd_montecarlo(*mc, c);
    if (*bs) return cmd_bootstrap(*bs, c);
    return cmd_diagnose(*dg, c);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const InvalidArgument& e) {
    return fail("invalid-argument", e.what(), 2);
  } catch (const WeakInstrumentError& e) {
    return fail("weak-instrument", e.what(), 1);
  } catch (const DataError& e) {
    return fail("data", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
}
