#include "twofield/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "twofield/error.hpp"
#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield {

namespace {

constexpr double kZ95 = 1.959963984540054;

bool usable(double v) { return std::isfinite(v) && v > 0.0; }

std::string censor_reason(double v) {
  if (std::isinf(v) && v > 0) return "threshold absent (+inf)";
  if (!std::isfinite(v)) return "non-finite estimate";
  return "non-positive estimate " + io::fmt(v);
}

bool differ(const ExponentFit& x, const ExponentFit& y, double multiple, double slack) {
  const double se = std::sqrt(x.gamma_se * x.gamma_se + y.gamma_se * y.gamma_se);
  return std::abs(x.gamma - y.gamma) > multiple * se + slack;
}

struct Series {
  std::vector<double> ns, ys;
  std::vector<stats::Interval> cis;
};

Series collect(const std::vector<ScalingPoint>& pts, bool alpha, std::size_t from = 0) {
  Series s;
  for (std::size_t i = from; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (alpha ? p.alpha_censored : p.kappa_censored) continue;
    const auto& e = alpha ? p.alpha : p.kappa;
    s.ns.push_back(static_cast<double>(p.n));
    s.ys.push_back(e.value);
    s.cis.push_back(e.ci);
  }
  return s;
}

}  // namespace

void SystemFamily::validate() const {
  if (ns.size() < 5) throw RangeError("family '" + id + "' needs at least 5 sizes, got " + io::fmt(ns.size()));
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (ns[i] <= ns[i - 1]) throw RangeError("family '" + id + "' sizes must be strictly increasing");
  if (ns.front() < 2) throw RangeError("family '" + id + "' sizes must be at least 2");
  if (static_cast<double>(ns.back()) < 100.0 * static_cast<double>(ns.front()))
    throw RangeError("family '" + id + "' sizes span " + io::fmt(static_cast<double>(ns.back()) / ns.front()) +
                     "x, need at least two decades");
  if (!alpha || !kappa) throw ContractError("family '" + id + "' lacks an estimator");
}

SelfRefSystem default_selfref_system(std::size_t n, const SelfRefFamilyOptions& options) {
  if (n < 2) throw RangeError("selfref generator needs N >= 2");
  if (!(options.gain > 0.0)) throw RangeError("selfref generator gain must be positive");
  const auto m = std::min(kMaxModelDim, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))));
  const auto mi = static_cast<Eigen::Index>(m);
  SelfRefSystem s;
  s.manifold = ManifoldSpec::box(std::vector<AxisBounds>(m, {-options.half_width, options.half_width}));
  s.substrate = DriftSpec{LinearDrift{-Eigen::MatrixXd::Identity(mi, mi)}, {}, {}};
  s.projection = Eigen::MatrixXd::Identity(mi, mi);
  s.feedback = Feedback{FeedbackKind::linear,
                        (options.gain * std::pow(std::log(static_cast<double>(n)), options.gain_power)) * Eigen::MatrixXd::Identity(mi, mi)};
  return s;
}

SimConfig JointScalingConfig::default_sim() {
  SimConfig c;
  c.noise = 0.5;
  c.dt = 1e-3;
  c.n_steps = 100000;
  c.n_chains = 4;
  c.thin = 10;
  c.reference_cell = 0.5;
  return c;
}

SystemFamily synthetic_family(std::string id, std::vector<std::size_t> ns, const JointScalingConfig& config) {
  require_bounded_shift(config.delta);
  config.threshold.validate();
  SystemFamily f;
  f.id = std::move(id);
  f.ns = std::move(ns);
  f.alpha = [config](std::size_t n, std::uint64_t seed) {
    const auto ont = make_ontology(n, config.delta, seed);
    auto opt = config.breakdown;
    opt.seed = seed;
    opt.workers = config.workers;
    const auto est = breakdown_rate(ont, opt);
    ScaleEstimate e{est.alpha_dagger, est.ci, {}};
    if (est.monotonicity_violations > 0)
      e.note = io::fmt(est.monotonicity_violations) + " risk monotonicity violations";
    return e;
  };
  f.kappa = [config](std::size_t n, std::uint64_t seed) {
    const auto sys = default_selfref_system(n, config.selfref);
    auto sim = config.sim;
    sim.seed = seed;
    sim.workers = config.workers;
    try {
      const auto k = kappa_threshold(sys, sim, config.threshold);
      ScaleEstimate e{k.kappa_c, k.bracket, {}};
      if (!k.finite()) e.note = "no coupling up to kappa_max passes";
      return e;
    } catch (const AmbiguousThresholdError& err) {
      return ScaleEstimate{std::numeric_limits<double>::infinity(), {}, err.what()};
    }
  };
  f.notes = {"protocol substitution: N is the primitive count of a synthetic ontology",
             "kappa generator: m = min(ceil(log2 N), 4) OU coordinates, feedback gain " +
                 io::fmt(config.selfref.gain) + " * (ln N)^" + io::fmt(config.selfref.gain_power) +
                 " (modeling choice)"};
  return f;
}

ScaleLaw power_law(double c, double gamma) {
  return [c, gamma](double n) { return c / std::pow(std::log(n), gamma); };
}

SystemFamily planted_family(std::string id, std::vector<std::size_t> ns, ScaleLaw alpha, ScaleLaw kappa,
                            double log_noise) {
  auto wrap = [log_noise](ScaleLaw law) -> ScaleEstimator {
    return [law = std::move(law), log_noise](std::size_t n, std::uint64_t seed) {
      double v = law(static_cast<double>(n));
      if (log_noise <= 0.0) return ScaleEstimate{v, {v, v}, "planted"};
      auto rng = make_rng(seed, "planted", n);
      v *= std::exp(log_noise * std::normal_distribution<double>(0.0, 1.0)(rng));
      return ScaleEstimate{v, {v * std::exp(-kZ95 * log_noise), v * std::exp(kZ95 * log_noise)}, "planted"};
    };
  };
  SystemFamily f;
  f.id = std::move(id);
  f.ns = std::move(ns);
  f.alpha = wrap(std::move(alpha));
  f.kappa = wrap(std::move(kappa));
  f.notes = {"planted scaling laws"};
  return f;
}

ExponentFit fit_exponent(const std::vector<double>& ns, const std::vector<double>& ys,
                         const std::vector<stats::Interval>& cis) {
  if (ns.size() != ys.size() || (!cis.empty() && cis.size() != ns.size()))
    throw ContractError("fit_exponent: size mismatch");
  if (ns.size() < 3) throw InsufficientDataError("exponent fit needs at least 3 points, got " + io::fmt(ns.size()));
  std::vector<double> x(ns.size()), y(ns.size()), w;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(ns[i] >= 2.0)) throw RangeError("exponent fit needs N >= 2");
    if (!usable(ys[i])) throw RangeError("exponent fit needs positive finite values, got " + io::fmt(ys[i]));
    x[i] = std::log(std::log(ns[i]));
    y[i] = std::log(ys[i]);
  }
  bool weighted = !cis.empty();
  for (const auto& ci : cis)
    if (!(ci.lo > 0.0 && std::isfinite(ci.hi) && ci.hi > ci.lo)) weighted = false;
  if (weighted) {
    for (const auto& ci : cis) {
      const double se = (std::log(ci.hi) - std::log(ci.lo)) / (2 * kZ95);
      w.push_back(1.0 / (se * se));
    }
  }
  const auto line = stats::fit_line(x, y, w);
  ExponentFit f;
  f.gamma = -line.slope;
  f.gamma_se = line.slope_se;
  f.intercept = line.intercept;
  f.r_squared = line.r_squared;
  f.n_points = ns.size();
  f.weighted = weighted;
  double c = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) c += ys[i] * std::pow(std::log(ns[i]), f.gamma);
  f.c = c / static_cast<double>(ns.size());
  return f;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fire: return "fire";
    default: return "n/a";
  }
}

Verdicts evaluate_verdicts(const std::vector<FamilyScaling>& families, const VerdictThresholds& t) {
  Verdicts v;
  if (families.empty()) return v;
  auto flag = [](bool fires) { return fires ? Verdict::fire : Verdict::pass; };
  bool a = false, b = false, d = false;
  for (const auto& f : families) {
    a = a || f.alpha_fit.r_squared < t.min_r_squared || f.kappa_fit.r_squared < t.min_r_squared;
    b = b || std::abs(f.alpha_fit.gamma - t.gamma1_target) > t.gamma1_tol;
    d = d || f.kappa_fit.gamma - t.se_multiple * f.kappa_fit.gamma_se <= t.slack;
  }
  v.a = flag(a);
  v.b = flag(b);
  v.d = flag(d);
  if (families.size() >= 2) {
    bool c = false;
    for (std::size_t i = 0; i < families.size(); ++i)
      for (std::size_t j = i + 1; j < families.size(); ++j)
        c = c || differ(families[i].kappa_fit, families[j].kappa_fit, t.se_multiple, t.slack);
    v.c = flag(c);
  }
  return v;
}

JointScalingReport run_joint_scaling(const std::vector<SystemFamily>& families, std::uint64_t seed,
                                     const VerdictThresholds& thresholds) {
  if (families.empty()) throw ContractError("joint scaling needs at least one family");
  for (const auto& f : families) f.validate();
  JointScalingReport report;
  for (const auto& fam : families) {
    FamilyScaling fs;
    fs.id = fam.id;
    fs.notes = fam.notes;
    std::size_t alpha_cens = 0, kappa_cens = 0;
    for (std::size_t n : fam.ns) {
      ScalingPoint p;
      p.n = n;
      p.alpha = fam.alpha(n, derive_seed(seed, "scaling-alpha", n));
      p.kappa = fam.kappa(n, derive_seed(seed, "scaling-kappa", n));
      p.alpha_censored = !usable(p.alpha.value);
      p.kappa_censored = !usable(p.kappa.value);
      if (p.alpha_censored) {
        ++alpha_cens;
        fs.notes.push_back("N=" + io::fmt(n) + " alpha censored: " + censor_reason(p.alpha.value));
      }
      if (p.kappa_censored) {
        ++kappa_cens;
        fs.notes.push_back("N=" + io::fmt(n) + " kappa_c censored: " + censor_reason(p.kappa.value));
      }
      fs.points.push_back(std::move(p));
    }
    const double limit = kMaxCensoredFraction * static_cast<double>(fam.ns.size());
    if (static_cast<double>(alpha_cens) > limit || static_cast<double>(kappa_cens) > limit)
      throw InfeasibleError("family '" + fam.id + "': " + io::fmt(alpha_cens) + " alpha and " + io::fmt(kappa_cens) +
                            " kappa_c estimates censored out of " + io::fmt(fam.ns.size()) + " (limit 40%)");

    const auto sa = collect(fs.points, true), sk = collect(fs.points, false);
    fs.alpha_fit = fit_exponent(sa.ns, sa.ys, sa.cis);
    fs.kappa_fit = fit_exponent(sk.ns, sk.ys, sk.cis);

    const std::size_t half = fam.ns.size() / 2;
    const auto ua = collect(fs.points, true, half), uk = collect(fs.points, false, half);
    if (ua.ns.size() >= 3) {
      fs.alpha_upper = fit_exponent(ua.ns, ua.ys, ua.cis);
      fs.range_disagreement = fs.range_disagreement ||
                              differ(fs.alpha_fit, fs.alpha_upper, thresholds.se_multiple, thresholds.slack);
    } else {
      fs.notes.push_back("upper-half alpha fit skipped: fewer than 3 points");
    }
    if (uk.ns.size() >= 3) {
      fs.kappa_upper = fit_exponent(uk.ns, uk.ys, uk.cis);
      fs.range_disagreement = fs.range_disagreement ||
                              differ(fs.kappa_fit, fs.kappa_upper, thresholds.se_multiple, thresholds.slack);
    } else {
      fs.notes.push_back("upper-half kappa_c fit skipped: fewer than 3 points");
    }
    if (fs.range_disagreement) fs.notes.push_back("full-range and upper-half exponents disagree");
    report.families.push_back(std::move(fs));
  }
  report.verdicts = evaluate_verdicts(report.families, thresholds);
  return report;
}

std::string scaling_points_csv(const JointScalingReport& report) {
  io::Csv csv({"family", "n", "alpha", "alpha_lo", "alpha_hi", "alpha_censored", "kappa_c", "kappa_lo", "kappa_hi",
               "kappa_censored"});
  for (const auto& f : report.families)
    for (const auto& p : f.points)
      csv.row(f.id, p.n, p.alpha.value, p.alpha.ci.lo, p.alpha.ci.hi, p.alpha_censored, p.kappa.value,
              p.kappa.ci.lo, p.kappa.ci.hi, p.kappa_censored);
  return csv.str();
}

std::string scaling_summary_kv(const JointScalingReport& report) {
  io::KeyValue kv;
  if (report.families.empty()) return kv.str();
  const auto& f = report.families.front();
  kv.set("gamma1", f.alpha_fit.gamma);
  kv.set("gamma1_se", f.alpha_fit.gamma_se);
  kv.set("gamma2", f.kappa_fit.gamma);
  kv.set("gamma2_se", f.kappa_fit.gamma_se);
  kv.set("c1", f.alpha_fit.c);
  kv.set("c2", f.kappa_fit.c);
  kv.set("verdict_a", to_string(report.verdicts.a));
  kv.set("verdict_b", to_string(report.verdicts.b));
  kv.set("verdict_c", to_string(report.verdicts.c));
  kv.set("verdict_d", to_string(report.verdicts.d));
  for (const auto& fam : report.families) {
    const std::string p = "family." + fam.id + ".";
    kv.set(p + "gamma1", fam.alpha_fit.gamma);
    kv.set(p + "gamma1_se", fam.alpha_fit.gamma_se);
    kv.set(p + "gamma1_upper", fam.alpha_upper.gamma);
    kv.set(p + "r_squared_alpha", fam.alpha_fit.r_squared);
    kv.set(p + "gamma2", fam.kappa_fit.gamma);
    kv.set(p + "gamma2_se", fam.kappa_fit.gamma_se);
    kv.set(p + "gamma2_upper", fam.kappa_upper.gamma);
    kv.set(p + "r_squared_kappa", fam.kappa_fit.r_squared);
    kv.set(p + "range_disagreement", fam.range_disagreement);
    for (std::size_t i = 0; i < fam.notes.size(); ++i) kv.set(p + "note" + io::fmt(i), fam.notes[i]);
  }
  return kv.str();
}

}  // namespace twofield
