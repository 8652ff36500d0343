#include "runner.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield::cli {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Outputs run_markov(const Experiment& ex, const MarkovPlan& p) {
  const auto& q = p.rates;
  const auto dist = markov::stationary_distribution(q);
  const auto report = markov::entropy_production(q, dist, p.rel_tol);
  const auto db = markov::detailed_balance_check(q, p.affinity_tol);

  io::Csv stat({"state", "p", "phi"});
  const auto phi = dist.quasi_potential();
  for (std::size_t i = 0; i < dist.probs.size(); ++i) stat.row(i, dist.probs[i], phi[i]);

  io::KeyValue kv;
  kv.set("kind", "markov");
  kv.set("seed", ex.seed);
  kv.set("states", q.size());
  kv.set("edges", markov::support_edges(q).size());
  kv.set("cycles", report.cycles.size());
  kv.set("sigma", report.total());
  kv.set("sigma_edge_form", report.sigma_edge_form);
  kv.set("sigma_cycle_form", report.sigma_cycle_form);
  kv.set("global_balance_residual", markov::global_balance_residual(q, dist));
  kv.set("detailed_balance", db.holds);
  kv.set("worst_abs_affinity", db.worst_abs_affinity);
  return {{"cycles.csv", markov::cycle_report_csv(report)}, {"stationary.csv", stat.str()}, {"summary.txt", kv.str()}};
}

Outputs run_field(const Experiment& ex, const FieldPlan& p) {
  const Ensemble ens = integrate(p.manifold, p.drift, p.sim);
  FieldGrid field = estimate_density(ens, p.manifold, p.grid, p.field);
  stationary_current(field, p.drift, p.sim.noise);
  entropy_field(field);
  const auto coll = collinearity_map(field, p.collinearity);
  const auto diag = stationarity_diagnostic(field);

  io::KeyValue kv;
  kv.set("kind", "field");
  kv.set("seed", ex.seed);
  kv.set("samples", field.total_samples);
  kv.set("cells", field.size());
  kv.set("sigma_total", field.sigma_total);
  kv.set("sigma_noise_floor", field.sigma_noise_floor);
  kv.set("sigma_integral", field.sigma_integral);
  kv.set("sigma_integral_noise_level", field.sigma_integral_noise_level);
  kv.set("collinear_fraction", coll.fraction.value_or(std::numeric_limits<double>::quiet_NaN()));
  kv.set("collinear_included_cells", coll.included_cells);
  kv.set("collinear_included_mass", coll.included_mass);
  kv.set("divergence_mean_abs", diag.mean_abs_divergence);
  kv.set("divergence_se", diag.divergence_se);
  if (coll.degenerate()) kv.set("note", "no cell passes the gradient floors; collinear fraction undefined");
  try {
    const auto dec = decompose_drift(field, p.drift);
    kv.set("decomposition_alpha", dec.alpha);
    kv.set("decomposition_beta", dec.beta);
    kv.set("decomposition_residual_fraction", dec.residual_fraction);
    kv.set("decomposition_gram_condition", dec.gram_condition);
    kv.set("decomposition_cells", dec.cells);
  } catch (const CollinearRegressorsError& e) {
    kv.set("note", std::string("decomposition skipped: ") + e.what());
  } catch (const InsufficientDataError& e) {
    kv.set("note", std::string("decomposition skipped: ") + e.what());
  }

  Outputs out{{"fieldgrid.csv", fieldgrid_csv(field, &coll)}, {"summary.txt", kv.str()}};
  if (p.trajectory) out.emplace_back("trajectory.csv", trajectory_csv(ens));
  return out;
}

Outputs run_selfref(const Experiment& ex, const SelfRefPlan& p) {
  io::KeyValue kv;
  kv.set("kind", "selfref");
  kv.set("seed", ex.seed);
  kv.set("model_dim", p.system.model_dim());
  std::vector<CouplingReport> trace;
  if (p.evaluate_only) {
    std::size_t tau = 0;
    if (p.system.tau) tau = *p.system.tau;
    else tau = estimate_tau(p.system, integrate_selfref(p.system, p.sim));
    const auto r = evaluate_coupling(p.system, p.sim, tau, p.threshold);
    trace.push_back(r);
    kv.set("kappa", r.kappa);
    kv.set("tau", r.tau);
    kv.set("mi_nats", r.mi.nats);
    kv.set("fidelity", r.fidelity);
    kv.set("efficacy", r.efficacy);
    kv.set("pass_fidelity", r.pass_f);
    kv.set("pass_efficacy", r.pass_c);
  } else {
    const auto t = kappa_threshold(p.system, p.sim, p.threshold);
    trace = t.trace;
    kv.set("kappa_c", t.kappa_c);
    kv.set("bracket_lo", t.bracket.lo);
    kv.set("bracket_hi", t.bracket.hi);
    kv.set("tau", t.tau);
    kv.set("finite", t.finite());
    if (!t.finite()) kv.set("note", "no kappa up to kappa_max passes both conditions");
  }
  return {{"trace.csv", coupling_trace_csv(trace)}, {"summary.txt", kv.str()}};
}

Outputs run_breakdown(const Experiment& ex, const BreakdownPlan& p) {
  std::vector<BreakdownEstimate> curve;
  std::vector<double> ns, alphas;
  for (std::size_t n : p.ns) {
    curve.push_back(breakdown_rate(make_ontology(n, p.delta, ex.seed), p.options));
    ns.push_back(static_cast<double>(n));
    alphas.push_back(curve.back().alpha_dagger);
  }
  std::string summary = "kind=breakdown\nseed=" + io::fmt(ex.seed) + "\ndelta=" + io::fmt(p.delta) + "\n";
  bool positive = true;
  for (double a : alphas) positive = positive && a > 0.0;
  if (!positive) {
    summary += "note=scaling fit skipped: some alpha is zero\n";
  } else {
    try {
      summary += scaling_fit_kv(scaling_fit(ns, alphas));
    } catch (const InsufficientDataError& e) {
      summary += std::string("note=scaling fit skipped: ") + e.what() + "\n";
    }
  }
  return {{"curve.csv", breakdown_curve_csv(curve)}, {"summary.txt", summary}};
}

Outputs run_synergy(const Experiment& ex, const SynergyPlan& p) {
  Outputs out;
  io::KeyValue kv;
  kv.set("kind", "synergy");
  kv.set("seed", ex.seed);
  kv.set("metric", to_string(p.options.metric));
  if (p.well_a) {
    const auto r = synergy_experiment(p.manifold, p.base, *p.well_a, *p.well_b, p.target, p.sim, p.options);
    out.emplace_back("synergy.csv", synergy_csv(r));
    kv.set("yield_base", r.base.mass);
    kv.set("delta_a", r.delta_a);
    kv.set("delta_b", r.delta_b);
    kv.set("delta_ab", r.delta_ab);
    kv.set("determinate", r.determinate());
    kv.set("S", r.s.value_or(std::numeric_limits<double>::quiet_NaN()));
    kv.set("S_lo", r.s_ci.lo);
    kv.set("S_hi", r.s_ci.hi);
    if (!r.determinate()) kv.set("note", "delta_a + delta_b is inside its own interval width; S is indeterminate");
  }
  if (!p.sweep.empty()) {
    const auto curve = yield_curve(
        p.manifold, [&](double v) { return p.drift_at(v); }, p.target, p.sweep, p.sim, p.options.bootstrap);
    out.emplace_back("yield_curve.csv", yield_curve_csv(curve));
    kv.set("modes", curve.modes());
    kv.set("unimodal", curve.unimodal());
    for (std::size_t i = 0; i < curve.peaks.size(); ++i)
      kv.set("peak." + std::to_string(i), curve.drive[curve.peaks[i]]);
  }
  out.emplace_back("summary.txt", kv.str());
  return out;
}

Outputs run_scaling(const Experiment&, const ScalingPlan& p, std::uint64_t seed) {
  const auto report = run_joint_scaling(p.families, seed, p.thresholds);
  return {{"points.csv", scaling_points_csv(report)}, {"summary.txt", scaling_summary_kv(report)}};
}

}  // namespace

Outputs execute(const Experiment& ex) {
  return std::visit(
      [&](const auto& plan) -> Outputs {
        using T = std::decay_t<decltype(plan)>;
        if constexpr (std::is_same_v<T, MarkovPlan>) return run_markov(ex, plan);
        else if constexpr (std::is_same_v<T, FieldPlan>) return run_field(ex, plan);
        else if constexpr (std::is_same_v<T, SelfRefPlan>) return run_selfref(ex, plan);
        else if constexpr (std::is_same_v<T, BreakdownPlan>) return run_breakdown(ex, plan);
        else if constexpr (std::is_same_v<T, SynergyPlan>) return run_synergy(ex, plan);
        else return run_scaling(ex, plan, ex.seed);
      },
      ex.plan);
}

std::filesystem::path output_dir(const Experiment& ex) {
  if (ex.output) return *ex.output;
  const std::string leaf = to_string(ex.kind) + "-" + ex.config_hash().substr(0, 8);
  if (const char* env = std::getenv("TWOFIELD_OUT"); env && *env) return std::filesystem::path(env) / leaf;
  return std::filesystem::path("twofield-out") / leaf;
}

std::string manifest(const Experiment& ex, const Outputs& outputs, double seconds) {
  io::KeyValue kv;
  kv.set("tool", "twofield");
  kv.set("version", kVersion);
  kv.set("kind", to_string(ex.kind));
  kv.set("seed", ex.seed);
  kv.set("workers", ex.workers.count);
  kv.set("config_hash", ex.config_hash());
  kv.set("duration_s", seconds);
  kv.set("config", ex.resolved.dump());
  for (const auto& [name, content] : outputs) kv.set("checksum." + name, "fnv1a64:" + hex64(fnv1a64(content)));
  for (std::size_t i = 0; i < ex.warnings.size(); ++i) kv.set("warning." + std::to_string(i), ex.warnings[i]);
  return kv.str();
}

void write_outputs(const std::filesystem::path& dir, const Outputs& outputs, const std::string& manifest_text) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  for (const auto& [name, content] : outputs) io::write_file_atomic(dir / name, content);
  io::write_file_atomic(dir / "manifest.txt", manifest_text);
}

RunResult run(const Experiment& ex) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  r.outputs = execute(ex);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.dir = output_dir(ex);
  write_outputs(r.dir, r.outputs, manifest(ex, r.outputs, r.seconds));
  return r;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const InfeasibleError*>(&e)) return 4;
  return 1;
}

namespace {

std::string type_name(const std::exception& e) {
  // Most derived first.
  if (dynamic_cast<const ConfigListError*>(&e)) return "ConfigListError";
  if (dynamic_cast<const StructuralError*>(&e)) return "StructuralError";
  if (dynamic_cast<const InfiniteAffinityError*>(&e)) return "InfiniteAffinityError";
  if (dynamic_cast<const GeometryError*>(&e)) return "GeometryError";
  if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
  if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const InternalConsistencyError*>(&e)) return "InternalConsistencyError";
  if (dynamic_cast<const DivergenceError*>(&e)) return "DivergenceError";
  if (dynamic_cast<const CollinearRegressorsError*>(&e)) return "CollinearRegressorsError";
  if (dynamic_cast<const DegenerateDriftError*>(&e)) return "DegenerateDriftError";
  if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
  if (dynamic_cast<const InsufficientDataError*>(&e)) return "InsufficientDataError";
  if (dynamic_cast<const DegenerateInstanceError*>(&e)) return "DegenerateInstanceError";
  if (dynamic_cast<const AmbiguousThresholdError*>(&e)) return "AmbiguousThresholdError";
  if (dynamic_cast<const InfeasibleError*>(&e)) return "InfeasibleError";
  return "Error";
}

}  // namespace

std::string error_json(const std::exception& e) {
  const int code = exit_code(e);
  static const char* categories[] = {"ok", "internal", "config", "numerical", "infeasible"};
  json j;
  j["category"] = categories[code];
  j["type"] = type_name(e);
  j["message"] = e.what();
  j["exit_code"] = code;
  if (const auto* list = dynamic_cast<const ConfigListError*>(&e)) j["issues"] = list->issues();
  if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) {
    j["step"] = d->step();
    j["chain"] = d->chain();
  }
  return json{{"error", j}}.dump();
}

}  // namespace twofield::cli
