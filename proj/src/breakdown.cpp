#include "twofield/breakdown.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "twofield/error.hpp"
#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield {

namespace {

constexpr double kProbabilityFloor = 1e-12;

std::vector<double> tilt(const std::vector<double>& u, double t) {
  const double top = *std::max_element(u.begin(), u.end());
  std::vector<double> p(u.size());
  double z = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) z += p[i] = std::exp(t * (u[i] - top));
  for (auto& v : p) v /= z;
  return p;
}

// Inverse-CDF sampling over a canonical ordering of the primitives (by LLR,
// then p1), so relabelled instances produce identical LLR streams.
struct Sampler {
  std::vector<std::size_t> order;
  std::vector<double> cdf1, cdf2;
  std::vector<double> llr;

  explicit Sampler(const Ontology& o) : llr(o.llr()) {
    order.resize(o.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (llr[a] != llr[b]) return llr[a] < llr[b];
      return o.p1[a] < o.p1[b];
    });
    cdf1.resize(o.n);
    cdf2.resize(o.n);
    double c1 = 0.0, c2 = 0.0;
    for (std::size_t k = 0; k < o.n; ++k) {
      cdf1[k] = c1 += o.p1[order[k]];
      cdf2[k] = c2 += o.p2[order[k]];
    }
  }

  static std::size_t pick(const std::vector<double>& cdf, double u) {
    const double target = u * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  }
  std::size_t draw(bool from_p2, double u) const { return order[pick(from_p2 ? cdf2 : cdf1, u)]; }
};

// One trial's randomness: a corruption uniform, a truth draw and an
// adversary draw per position. The stream at rate alpha takes the adversary
// draw wherever the uniform falls below alpha.
struct Trial {
  std::vector<double> corrupt;
  std::vector<std::size_t> truth;
  std::vector<std::size_t> adversary;
};

Trial draw_trial(const Sampler& s, Truth truth, AdversaryStrategy strategy, std::size_t length, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const bool truth_p2 = truth == Truth::shift;
  const bool adv_p2 = strategy == AdversaryStrategy::mimic_shift;
  Trial t;
  t.corrupt.resize(length);
  t.truth.resize(length);
  t.adversary.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    t.corrupt[i] = unif(rng);
    t.truth[i] = s.draw(truth_p2, unif(rng));
    t.adversary[i] = s.draw(adv_p2, unif(rng));
  }
  return t;
}

void realize_llr(const Trial& t, const std::vector<double>& llr, double alpha, std::vector<double>& prefix) {
  const std::size_t n = t.corrupt.size();
  prefix.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    prefix[i + 1] = prefix[i] + llr[t.corrupt[i] < alpha ? t.adversary[i] : t.truth[i]];
}

Detection decide(const std::vector<double>& prefix, const Detector& d) {
  const std::size_t n = prefix.size() - 1;
  Detection out{false, n};
  if (n < d.window * d.runs) return out;
  std::size_t run = 0;
  for (std::size_t start = 0; start + d.window <= n; start += d.window) {
    const double s = prefix[start + d.window] - prefix[start];
    run = s > d.threshold ? run + 1 : 0;
    if (run >= d.runs) return {true, start + d.window};
  }
  return out;
}

const char* trial_module(Truth truth) { return truth == Truth::null ? "breakdown-null" : "breakdown-shift"; }

AdversaryStrategy opposing(Truth truth) {
  return truth == Truth::null ? AdversaryStrategy::mimic_shift : AdversaryStrategy::mimic_null;
}

}  // namespace

std::vector<double> Ontology::llr() const {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(p2[i] / p1[i]);
  return out;
}

void Ontology::validate() const {
  if (n < 2) throw RangeError("ontology needs at least 2 primitives");
  if (p1.size() != n || p2.size() != n) throw ContractError("context vectors must have length N");
  for (std::size_t i = 0; i < n; ++i)
    if (!(p1[i] > 0.0) || !(p2[i] > 0.0)) throw RangeError("contexts must be strictly positive on every primitive");
  const double s1 = std::accumulate(p1.begin(), p1.end(), 0.0);
  const double s2 = std::accumulate(p2.begin(), p2.end(), 0.0);
  if (std::abs(s1 - 1.0) > 1e-9 || std::abs(s2 - 1.0) > 1e-9)
    throw ContractError("contexts must sum to one");
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

void require_bounded_shift(double delta) {
  if (!(delta >= kDeltaMin && delta <= kDeltaMax))
    throw RangeError("shift delta " + io::fmt(delta) + " outside [" + io::fmt(kDeltaMin) + ", " +
                     io::fmt(kDeltaMax) + "]");
}

Ontology make_ontology(std::size_t n, double delta_target, std::uint64_t seed) {
  if (n < 2) throw RangeError("ontology needs at least 2 primitives");
  if (!(delta_target >= 0.0) || !std::isfinite(delta_target)) throw RangeError("delta_target must be >= 0");

  Ontology o;
  o.n = n;
  o.p1.assign(n, 1.0 / static_cast<double>(n));

  auto rng = make_rng(seed, "ontology", n);
  std::normal_distribution<double> gauss;
  std::vector<double> u(n);
  for (auto& v : u) v = gauss(rng);
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(n);
  double norm = 0.0;
  for (auto& v : u) {
    v -= mu;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw NumericalError("degenerate tilt direction");
  for (auto& v : u) v /= norm;

  const auto kl_at = [&](double t) { return kl_divergence(tilt(u, t), o.p1); };
  const auto min_at = [&](double t) {
    const auto p = tilt(u, t);
    return *std::min_element(p.begin(), p.end());
  };

  // Largest tilt keeping every probability above the floor.
  double t_hi = 1.0;
  while (min_at(t_hi) > kProbabilityFloor && t_hi < 1e12) t_hi *= 2.0;
  double t_lo = 0.0;
  for (int it = 0; it < 200 && t_hi - t_lo > 1e-12 * t_hi; ++it) {
    const double mid = 0.5 * (t_lo + t_hi);
    (min_at(mid) > kProbabilityFloor ? t_lo : t_hi) = mid;
  }
  const double t_max = t_lo;
  const double kl_max = kl_at(t_max);
  if (delta_target > kl_max)
    throw RangeError("delta_target " + io::fmt(delta_target) + " unreachable at N = " + io::fmt(n) +
                     " (max " + io::fmt(kl_max) + " under the positivity floor)");

  double lo = 0.0, hi = t_max;
  double t = 0.0;
  if (delta_target > 0.0) {
    for (int it = 0; it < 200; ++it) {
      t = 0.5 * (lo + hi);
      const double kl = kl_at(t);
      if (std::abs(kl - delta_target) < 1e-9) break;
      (kl < delta_target ? lo : hi) = t;
    }
  }
  o.p2 = tilt(u, t);
  o.delta = kl_divergence(o.p2, o.p1);
  return o;
}

Ontology permute(const Ontology& ontology, const std::vector<std::size_t>& perm) {
  if (perm.size() != ontology.n) throw ContractError("permutation length must equal N");
  Ontology out = ontology;
  for (std::size_t i = 0; i < ontology.n; ++i) {
    out.p1[i] = ontology.p1[perm[i]];
    out.p2[i] = ontology.p2[perm[i]];
  }
  return out;
}

std::vector<std::size_t> sample_stream(const Ontology& ontology, Truth truth, const AdversaryModel& adversary,
                                       std::size_t length, std::uint64_t seed) {
  ontology.validate();
  if (!(adversary.rate >= 0.0 && adversary.rate <= 1.0)) throw RangeError("adversary rate must lie in [0, 1]");
  const Sampler s(ontology);
  auto rng = make_rng(seed, "stream", 0);
  const auto t = draw_trial(s, truth, adversary.strategy, length, rng);
  std::vector<std::size_t> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = t.corrupt[i] < adversary.rate ? t.adversary[i] : t.truth[i];
  return out;
}

void Detector::validate() const {
  if (window < 1) throw RangeError("detector window must be >= 1");
  if (runs < 1) throw RangeError("detector runs must be >= 1");
  if (!std::isfinite(threshold)) throw RangeError("detector threshold must be finite");
}

Detection detect_shift(const std::vector<std::size_t>& stream, const Ontology& ontology, const Detector& detector) {
  detector.validate();
  const auto llr = ontology.llr();
  std::vector<double> prefix(stream.size() + 1, 0.0);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (stream[i] >= ontology.n) throw RangeError("stream symbol outside the primitive set");
    prefix[i + 1] = prefix[i] + llr[stream[i]];
  }
  return decide(prefix, detector);
}

RiskEstimate risk(const Ontology& ontology, double alpha, const Detector& detector, std::size_t trials,
                  std::size_t stream_length, std::uint64_t seed) {
  ontology.validate();
  detector.validate();
  if (trials < 200) throw RangeError("risk needs at least 200 trials");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw RangeError("adversary rate must lie in [0, 1]");
  const Sampler s(ontology);
  std::vector<double> prefix;
  std::size_t errors[2] = {0, 0};
  for (Truth truth : {Truth::null, Truth::shift}) {
    for (std::size_t t = 0; t < trials; ++t) {
      auto rng = make_rng(seed, trial_module(truth), t);
      const auto trial = draw_trial(s, truth, opposing(truth), stream_length, rng);
      realize_llr(trial, s.llr, alpha, prefix);
      const bool shift = decide(prefix, detector).shift;
      if (truth == Truth::null ? shift : !shift) ++errors[truth == Truth::null ? 0 : 1];
    }
  }
  RiskEstimate r;
  r.trials = trials;
  r.false_positive = static_cast<double>(errors[0]) / static_cast<double>(trials);
  r.false_negative = static_cast<double>(errors[1]) / static_cast<double>(trials);
  r.fp_ci = stats::wilson_interval(errors[0], trials);
  r.fn_ci = stats::wilson_interval(errors[1], trials);
  return r;
}

double detection_lower_bound(double n, double delta) {
  if (!(n >= 2.0)) throw RangeError("detection_lower_bound needs N >= 2");
  if (!(delta > 0.0)) throw RangeError("detection_lower_bound needs delta > 0");
  return std::log(n) / delta;
}

std::size_t default_stream_length(std::size_t n, double delta) {
  return static_cast<std::size_t>(std::ceil(20.0 * detection_lower_bound(static_cast<double>(n), delta)));
}

std::vector<Detector> DetectorFamily::expand(std::size_t n, double delta, std::size_t stream_length) const {
  const double dstar = detection_lower_bound(static_cast<double>(n), delta);
  std::set<std::size_t> windows;
  for (double f : window_factors) {
    if (!(f > 0.0)) throw RangeError("window factors must be positive");
    windows.insert(std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(f * dstar)), 1, stream_length));
  }
  std::vector<Detector> out;
  for (std::size_t w : windows)
    for (std::size_t r : runs) {
      if (r < 1) throw RangeError("runs must be >= 1");
      if (w * r > stream_length) continue;
      for (double c : threshold_factors) out.push_back({w, c * static_cast<double>(w) * delta, r});
    }
  return out;
}

void BreakdownOptions::validate() const {
  if (trials < 200) throw RangeError("breakdown_rate needs at least 200 trials per hypothesis");
  if (!(tol > 0.0 && tol <= 0.25)) throw RangeError("alpha tolerance must lie in (0, 0.25]");
  if (bootstrap < 0) throw RangeError("bootstrap count must be >= 0");
  if (!(level > 0.0 && level < 1.0)) throw RangeError("confidence level must lie in (0, 1)");
  if (family.window_factors.empty() || family.threshold_factors.empty() || family.runs.empty())
    throw RangeError("detector family needs window factors, threshold factors and runs");
  for (double f : family.window_factors)
    if (!(f > 0.0) || !std::isfinite(f)) throw RangeError("window factors must be positive");
  for (double c : family.threshold_factors)
    if (!std::isfinite(c)) throw RangeError("threshold factors must be finite");
  for (std::size_t r : family.runs)
    if (r < 1) throw RangeError("runs must be >= 1");
}

BreakdownEstimate breakdown_rate(const Ontology& ontology, const BreakdownOptions& options) {
  ontology.validate();
  options.validate();
  if (!(ontology.delta > 0.0)) throw DegenerateInstanceError("contexts coincide; no detector can beat risk 1/2");

  const std::size_t length =
      options.stream_length ? options.stream_length : default_stream_length(ontology.n, ontology.delta);
  const auto detectors = options.family.expand(ontology.n, ontology.delta, length);
  if (detectors.empty()) throw DegenerateInstanceError("no detector in the family fits a stream of " + io::fmt(length));

  const auto steps = static_cast<std::size_t>(std::llround(1.0 / options.tol));
  std::vector<double> grid(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) grid[k] = std::min(1.0, static_cast<double>(k) * options.tol);

  const Sampler s(ontology);
  const std::size_t nd = detectors.size();
  const std::size_t na = grid.size();
  const std::size_t trials = options.trials;
  const std::size_t per_trial = na * nd;
  // errors[h][t][k * nd + d]
  std::vector<std::vector<unsigned char>> errors(2, std::vector<unsigned char>(trials * per_trial, 0));

  for (int h = 0; h < 2; ++h) {
    const Truth truth = h == 0 ? Truth::null : Truth::shift;
    parallel_for(trials, options.workers, [&](std::size_t t) {
      auto rng = make_rng(options.seed, trial_module(truth), t);
      const auto trial = draw_trial(s, truth, opposing(truth), length, rng);
      std::vector<double> prefix;
      unsigned char* slot = errors[h].data() + t * per_trial;
      for (std::size_t k = 0; k < na; ++k) {
        realize_llr(trial, s.llr, grid[k], prefix);
        for (std::size_t d = 0; d < nd; ++d) {
          const bool shift = decide(prefix, detectors[d]).shift;
          slot[k * nd + d] = truth == Truth::null ? shift : !shift;
        }
      }
    });
  }

  // Weighted error counts -> per-detector breakdown alpha; weights are trial
  // multiplicities (all ones for the point estimate).
  struct Outcome {
    double alpha = -1.0;
    std::size_t best = 0;
  };
  std::vector<double> counts(per_trial);
  const auto evaluate = [&](const std::vector<unsigned>& w0, const std::vector<unsigned>& w1) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (int h = 0; h < 2; ++h) {
      const auto& w = h == 0 ? w0 : w1;
      for (std::size_t t = 0; t < trials; ++t) {
        if (!w[t]) continue;
        const double wt = w[t];
        const unsigned char* e = errors[h].data() + t * per_trial;
        for (std::size_t j = 0; j < per_trial; ++j) counts[j] += wt * e[j];
      }
    }
    const double half = 0.5 * static_cast<double>(trials);
    Outcome out;
    for (std::size_t d = 0; d < nd; ++d) {
      if (counts[d] >= half) continue;
      double a = grid.back();
      for (std::size_t k = 1; k < na; ++k)
        if (counts[k * nd + d] >= half) {
          a = grid[k - 1];
          break;
        }
      if (a > out.alpha || (a == out.alpha && counts[d] < counts[out.best])) out = {a, d};
    }
    return out;
  };

  const std::vector<unsigned> ones(trials, 1u);
  const Outcome point = evaluate(ones, ones);
  if (point.alpha < 0.0)
    throw DegenerateInstanceError("every detector has risk >= 1/2 at alpha = 0 (N = " + io::fmt(ontology.n) +
                                  ", delta = " + io::fmt(ontology.delta) + ", stream " + io::fmt(length) + ")");

  BreakdownEstimate est;
  est.n = ontology.n;
  est.delta = ontology.delta;
  est.alpha_dagger = point.alpha;
  est.best = detectors[point.best];
  est.stream_length = length;
  est.detectors = nd;
  est.alpha_grid = grid;
  est.best_risk.resize(na);
  const auto denom = static_cast<double>(trials);
  for (std::size_t k = 0; k < na; ++k) {
    double m = 2.0;
    for (std::size_t d = 0; d < nd; ++d) m = std::min(m, counts[k * nd + d] / denom);
    est.best_risk[k] = m;
  }
  // Worst-case half-width of a summed binomial interval.
  const double slack = 2.0 * 1.96 * std::sqrt(0.25 / denom);
  for (std::size_t k = 1; k < na; ++k)
    if (est.best_risk[k] < est.best_risk[k - 1] - slack) ++est.monotonicity_violations;

  if (options.bootstrap > 0) {
    auto rng = make_rng(options.seed, "breakdown-bootstrap", ontology.n);
    std::uniform_int_distribution<std::size_t> pick(0, trials - 1);
    std::vector<unsigned> w0(trials), w1(trials);
    std::vector<double> reps;
    reps.reserve(static_cast<std::size_t>(options.bootstrap));
    for (int b = 0; b < options.bootstrap; ++b) {
      std::fill(w0.begin(), w0.end(), 0u);
      std::fill(w1.begin(), w1.end(), 0u);
      for (std::size_t t = 0; t < trials; ++t) ++w0[pick(rng)];
      for (std::size_t t = 0; t < trials; ++t) ++w1[pick(rng)];
      const auto o = evaluate(w0, w1);
      reps.push_back(std::max(0.0, o.alpha));
    }
    est.ci = stats::percentile_interval(std::move(reps), options.level);
  } else {
    est.ci = {est.alpha_dagger, est.alpha_dagger};
  }
  return est;
}

ScalingFitResult scaling_fit(const std::vector<double>& ns, const std::vector<double>& ys) {
  if (ns.size() != ys.size()) throw ContractError("scaling_fit: size mismatch");
  if (ns.size() < 5) throw InsufficientDataError("scaling_fit needs at least 5 points, got " + io::fmt(ns.size()));
  const auto [mn, mx] = std::minmax_element(ns.begin(), ns.end());
  if (!(*mn > 1.0)) throw RangeError("scaling_fit needs N > 1");
  if (*mx / *mn < 100.0) throw InsufficientDataError("scaling_fit needs N spanning at least 2 decades");
  std::vector<double> x(ns.size()), y(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(ys[i] > 0.0)) throw RangeError("scaling_fit needs positive breakdown rates");
    x[i] = std::log(std::log(ns[i]));
    y[i] = std::log(ys[i]);
  }
  const auto line = stats::fit_line(x, y);
  ScalingFitResult fit;
  fit.gamma = -line.slope;
  fit.gamma_se = line.slope_se;
  fit.intercept = line.intercept;
  fit.r_squared = line.r_squared;
  fit.n_points = ns.size();
  double c = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) c += ys[i] * std::pow(std::log(ns[i]), fit.gamma);
  fit.c = c / static_cast<double>(ns.size());
  fit.consistent = std::abs(fit.gamma - 1.0) <= 0.15;
  return fit;
}

std::string breakdown_curve_csv(const std::vector<BreakdownEstimate>& curve) {
  io::Csv csv({"N", "delta", "alpha_dagger", "ci_lo", "ci_hi", "best_w", "best_theta", "best_r"});
  for (const auto& e : curve)
    csv.row(e.n, e.delta, e.alpha_dagger, e.ci.lo, e.ci.hi, e.best.window, e.best.threshold, e.best.runs);
  return csv.str();
}

std::string scaling_fit_kv(const ScalingFitResult& fit) {
  io::KeyValue kv;
  kv.set("gamma1", fit.gamma);
  kv.set("gamma1_se", fit.gamma_se);
  kv.set("c1", fit.c);
  kv.set("n_points", fit.n_points);
  kv.set("r_squared", fit.r_squared);
  return kv.str();
}

}  // namespace twofield
