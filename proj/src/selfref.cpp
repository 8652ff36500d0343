#include "twofield/selfref.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield {

namespace {

// psi(n) for integer n >= 1: -gamma + sum_{j<n} 1/j
std::vector<double> digamma_table(std::size_t n) {
  std::vector<double> t(n + 2);
  t[1] = -0.57721566490153286061;
  for (std::size_t j = 2; j < t.size(); ++j) t[j] = t[j - 1] + 1.0 / static_cast<double>(j - 1);
  return t;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> jittered(std::span<const double> v, std::size_t dim, Rng& rng) {
  std::vector<double> out(v.begin(), v.end());
  const std::size_t n = v.size() / dim;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t a = 0; a < dim; ++a) {
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += v[i * dim + a];
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) s += (v[i * dim + a] - m) * (v[i * dim + a] - m);
    const double scale = 1e-10 * std::max(std::sqrt(s / static_cast<double>(n)), 1e-300);
    for (std::size_t i = 0; i < n; ++i) out[i * dim + a] += scale * gauss(rng);
  }
  return out;
}

}  // namespace

std::string to_string(FeedbackKind kind) { return kind == FeedbackKind::linear ? "linear" : "saturating"; }

void Feedback::apply(std::span<const double> y, std::span<double> out) const {
  for (Eigen::Index i = 0; i < gain.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < gain.cols(); ++j) s += gain(i, j) * y[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = kind == FeedbackKind::linear ? s : std::tanh(s);
  }
}

void SelfRefSystem::project(std::span<const double> x, std::span<double> y) const {
  for (Eigen::Index i = 0; i < projection.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < projection.cols(); ++j) s += projection(i, j) * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = s;
  }
}

// Stack buffers below are safe: validate() bounds the ambient dimension by 5.
void SelfRefSystem::feedback_term(std::span<const double> x, std::span<double> out) const {
  double y[8];
  project(x, std::span<double>(y, model_dim()));
  feedback.apply(std::span<const double>(y, model_dim()), out);
  for (auto& v : out) v *= kappa;
}

void SelfRefSystem::augmented_drift(std::span<const double> x, std::span<double> out) const {
  substrate.evaluate(x, out);
  if (kappa == 0.0) return;
  double g[8];
  const std::span<double> gs(g, out.size());
  feedback_term(x, gs);
  for (std::size_t a = 0; a < out.size(); ++a) out[a] -= g[a];
}

void SelfRefSystem::validate() const {
  manifold.validate();
  substrate.validate(manifold);
  const auto amb = static_cast<Eigen::Index>(manifold.ambient_dim());
  const Eigen::Index m = projection.rows();
  if (m < 1 || projection.cols() != amb)
    throw ConfigError("projection must be m x " + std::to_string(amb) + " with m >= 1");
  if (static_cast<std::size_t>(m) > manifold.dim)
    throw ConfigError("model dimension " + std::to_string(m) + " exceeds the state dimension " +
                      std::to_string(manifold.dim));
  const double off = (projection * projection.transpose() - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
  if (!(off <= 1e-10)) throw ConfigError("projection rows are not orthonormal (deviation " + io::fmt(off) + ")");
  if (feedback.gain.rows() != amb || feedback.gain.cols() != m)
    throw ConfigError("feedback gain must be " + std::to_string(amb) + " x " + std::to_string(m));
  if (!feedback.gain.allFinite()) throw ConfigError("feedback gain must be finite");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw RangeError("kappa must be finite and non-negative");
  if (tau && *tau == 0) throw RangeError("tau must be at least one stride");
}

void check_selfref_integration(const SelfRefSystem& system, const SimConfig& config) {
  system.validate();
  config.validate();
  const DriftFn fn = [&](std::span<const double> x, std::span<double> b) { system.augmented_drift(x, b); };
  check_confinement(system.manifold, fn, config.seed);
  check_stability(system.manifold, fn, config);
}

Ensemble integrate_selfref(const SelfRefSystem& system, const SimConfig& config) {
  check_selfref_integration(system, config);
  return integrate_with(
      system.manifold, [&](std::span<const double> x, std::span<double> b) { system.augmented_drift(x, b); }, config);
}

Ensemble project_ensemble(const SelfRefSystem& system, const Ensemble& ensemble) {
  Ensemble out;
  out.dim = system.model_dim();
  out.per_chain = ensemble.per_chain;
  out.first_step = ensemble.first_step;
  out.thin = ensemble.thin;
  out.chains.resize(ensemble.n_chains());
  for (std::size_t c = 0; c < ensemble.n_chains(); ++c) {
    out.chains[c].resize(out.per_chain * out.dim);
    for (std::size_t k = 0; k < ensemble.per_chain; ++k)
      system.project(ensemble.sample(c, k), std::span<double>(out.chains[c].data() + k * out.dim, out.dim));
  }
  return out;
}

// ------------------------------------------------------------------ MI

MiEstimate mutual_information(std::span<const double> xs_in, std::size_t dx, std::span<const double> ys_in,
                              std::size_t dy, const MiOptions& options) {
  if (dx == 0 || dy == 0) throw ConfigError("MI needs non-empty sample dimensions");
  if (xs_in.size() % dx != 0 || ys_in.size() % dy != 0 || xs_in.size() / dx != ys_in.size() / dy)
    throw ConfigError("MI samples must be paired");
  const std::size_t n = xs_in.size() / dx;
  if (n < 1000) throw InsufficientDataError("MI needs at least 1000 pairs, got " + std::to_string(n));
  options.validate();

  // A tiny seeded jitter breaks exact ties (duplicated or clamped values).
  Rng jrng = make_rng(options.seed, "mi-jitter", 0);
  const auto xs = jittered(xs_in, dx, jrng);
  const auto ys = jittered(ys_in, dy, jrng);
  const auto psi = digamma_table(n + 1);
  const auto k = static_cast<std::size_t>(options.k);

  // Points sorted by their first x and first y coordinate. Max-norm balls
  // only reach points whose leading coordinate lies within the radius, so
  // every search is a window scan over one of these orders.
  std::vector<std::size_t> ox(n), oy(n), rank_x(n);
  std::iota(ox.begin(), ox.end(), 0);
  std::iota(oy.begin(), oy.end(), 0);
  std::sort(ox.begin(), ox.end(), [&](std::size_t a, std::size_t b) { return xs[a * dx] < xs[b * dx]; });
  std::sort(oy.begin(), oy.end(), [&](std::size_t a, std::size_t b) { return ys[a * dy] < ys[b * dy]; });
  std::vector<double> lead_x(n), lead_y(n);
  for (std::size_t r = 0; r < n; ++r) {
    lead_x[r] = xs[ox[r] * dx];
    lead_y[r] = ys[oy[r] * dy];
    rank_x[ox[r]] = r;
  }
  auto dist_x = [&](std::size_t i, std::size_t j) {
    double a = 0.0;
    for (std::size_t u = 0; u < dx; ++u) a = std::max(a, std::abs(xs[i * dx + u] - xs[j * dx + u]));
    return a;
  };
  auto dist_y = [&](std::size_t i, std::size_t j) {
    double b = 0.0;
    for (std::size_t u = 0; u < dy; ++u) b = std::max(b, std::abs(ys[i * dy + u] - ys[j * dy + u]));
    return b;
  };
  // Points strictly closer than eps to point i in one marginal.
  auto count_within = [](const std::vector<double>& lead, const std::vector<std::size_t>& order, double centre,
                         double eps, std::size_t self, std::size_t dim, auto&& dist) {
    const auto lo = std::upper_bound(lead.begin(), lead.end(), centre - eps);
    const auto hi = std::lower_bound(lead.begin(), lead.end(), centre + eps);
    std::size_t c = 0;
    for (auto it = lo; it < hi; ++it) {
      const std::size_t j = order[static_cast<std::size_t>(it - lead.begin())];
      if (j != self && (dim == 1 || dist(self, j) < eps)) ++c;
    }
    return c;
  };

  std::vector<double> terms(n);
  std::vector<double> best;  // max-heap of the k smallest joint distances
  for (std::size_t i = 0; i < n; ++i) {
    best.clear();
    const std::size_t r0 = rank_x[i];
    const double x0 = xs[i * dx];
    auto consider = [&](std::size_t r) {
      const std::size_t j = ox[r];
      const double d = std::max(dist_x(i, j), dist_y(i, j));
      if (best.size() < k) {
        best.push_back(d);
        std::push_heap(best.begin(), best.end());
      } else if (d < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = d;
        std::push_heap(best.begin(), best.end());
      }
    };
    std::size_t left = r0, right = r0 + 1;
    while (left > 0 || right < n) {
      const double bound = best.size() < k ? std::numeric_limits<double>::infinity() : best.front();
      const double gl = left > 0 ? x0 - lead_x[left - 1] : std::numeric_limits<double>::infinity();
      const double gr = right < n ? lead_x[right] - x0 : std::numeric_limits<double>::infinity();
      if (std::min(gl, gr) >= bound) break;
      if (gl <= gr) {
        consider(--left);
      } else {
        consider(right++);
      }
    }
    const double eps = best.front();
    const std::size_t nx = count_within(lead_x, ox, x0, eps, i, dx, dist_x);
    const std::size_t ny = count_within(lead_y, oy, ys[i * dy], eps, i, dy, dist_y);
    terms[i] = psi[k] + psi[n] - psi[nx + 1] - psi[ny + 1];
  }

  MiEstimate out;
  out.pairs = n;
  out.raw = std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(n);
  out.nats = std::max(0.0, out.raw);
  out.block = static_cast<std::size_t>(std::ceil(stats::integrated_autocorrelation_time(terms)));
  Rng brng = make_rng(options.seed, "mi-bootstrap", 0);
  const auto ci = stats::block_bootstrap_mean(terms, out.block, options.resamples, brng, options.level);
  out.ci = {std::max(0.0, ci.lo), std::max(0.0, ci.hi)};
  out.near_deterministic = out.raw > options.deterministic_nats;
  return out;
}

double linfoot_fidelity(double nats) {
  if (!(nats >= 0.0)) throw ContractError("Linfoot fidelity needs non-negative mutual information");
  return -std::expm1(-2.0 * nats);
}

// ------------------------------------------------------------ efficacy

double causal_efficacy(const Ensemble& ensemble, const SelfRefSystem& system, EfficacyDenominator denominator) {
  if (ensemble.size() == 0) throw InsufficientDataError("empty ensemble");
  const std::size_t d = ensemble.dim;
  std::vector<double> g(d), b(d);
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < ensemble.n_chains(); ++c) {
    for (std::size_t k = 0; k < ensemble.per_chain; ++k) {
      const auto x = ensemble.sample(c, k);
      system.feedback_term(x, g);
      system.substrate.evaluate(x, b);
      num += norm(g);
      if (denominator == EfficacyDenominator::augmented)
        for (std::size_t a = 0; a < d; ++a) b[a] -= g[a];
      den += norm(b);
    }
  }
  const auto n = static_cast<double>(ensemble.size());
  num /= n;
  den /= n;
  if (num == 0.0) return 0.0;
  if (!(den >= 1e-12))
    throw DegenerateDriftError("mean drift magnitude " + io::fmt(den) + " is below 1e-12");
  return num / den;
}

std::size_t estimate_tau(const SelfRefSystem& system, const Ensemble& ensemble) {
  const auto proj = project_ensemble(system, ensemble);
  const std::size_t m = proj.dim;
  const std::size_t max_lag = std::max<std::size_t>(1, proj.per_chain / 4);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> series(proj.per_chain);
  for (std::size_t c = 0; c < proj.n_chains(); ++c)
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t k = 0; k < proj.per_chain; ++k) series[k] = proj.chains[c][k * m + a];
      total += static_cast<double>(stats::autocorrelation_efold_lag(series, max_lag));
      ++count;
    }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(total / static_cast<double>(count))));
}

std::pair<std::vector<double>, std::vector<double>> lagged_pairs(const SelfRefSystem& system,
                                                                 const Ensemble& ensemble, std::size_t tau,
                                                                 std::size_t max_pairs) {
  if (tau >= ensemble.per_chain) throw InsufficientDataError("lag tau exceeds the retained samples per chain");
  const std::size_t per = ensemble.per_chain - tau;
  const std::size_t total = per * ensemble.n_chains();
  const std::size_t take = std::min(total, std::max<std::size_t>(max_pairs, 1));
  const std::size_t d = ensemble.dim, m = system.model_dim();
  std::vector<double> xs, ys(take * m);
  xs.reserve(take * d);
  for (std::size_t j = 0; j < take; ++j) {
    const std::size_t idx = j * total / take;
    const std::size_t c = idx / per, k = idx % per;
    const auto future = ensemble.sample(c, k + tau);
    xs.insert(xs.end(), future.begin(), future.end());
    system.project(ensemble.sample(c, k), std::span<double>(ys.data() + j * m, m));
  }
  return {std::move(xs), std::move(ys)};
}

// ------------------------------------------------------------ threshold

void MiOptions::validate() const {
  if (k < 3 || k > 20) throw RangeError("MI neighbour count k must lie in [3, 20]");
  if (resamples < 100) throw RangeError("MI needs at least 100 bootstrap resamples");
  if (!(level > 0.0 && level < 1.0)) throw RangeError("MI confidence level must lie in (0, 1)");
  if (!(deterministic_nats > 0.0)) throw RangeError("deterministic_nats must be positive");
}

void ThresholdOptions::validate() const {
  if (!(f_min >= 0.4 && f_min <= 0.6)) throw RangeError("F_min must lie in [0.4, 0.6]");
  if (!(c_min >= 0.05 && c_min <= 0.2)) throw RangeError("C_min must lie in [0.05, 0.2]");
  if (!(kappa_max > 0.0) || !std::isfinite(kappa_max)) throw RangeError("kappa_max must be positive");
  if (!(tol > 0.0)) throw RangeError("kappa tolerance must be positive");
  if (scan_points < 2) throw RangeError("the kappa scan needs at least 2 points");
  mi.validate();
}

CouplingReport evaluate_coupling(const SelfRefSystem& system, const SimConfig& config, std::size_t tau,
                                 const ThresholdOptions& options) {
  const auto ens = integrate_selfref(system, config);
  const auto [xs, ys] = lagged_pairs(system, ens, tau, options.mi.max_pairs);
  CouplingReport r;
  r.kappa = system.kappa;
  r.tau = tau;
  r.mi = mutual_information(xs, ens.dim, ys, system.model_dim(), options.mi);
  r.fidelity = linfoot_fidelity(r.mi.nats);
  r.efficacy = causal_efficacy(ens, system, options.denominator);
  r.pass_f = r.fidelity >= options.f_min;
  r.pass_c = r.efficacy >= options.c_min;
  return r;
}

KappaThreshold kappa_threshold(const SelfRefSystem& system, const SimConfig& config, const ThresholdOptions& options) {
  options.validate();
  struct {
    std::size_t tau = 0;
  } out;
  SelfRefSystem s = system;
  s.kappa = 0.0;
  s.validate();
  if (s.tau) {
    out.tau = *s.tau;
  } else {
    out.tau = estimate_tau(s, integrate_selfref(s, config));
  }

  return kappa_threshold_with(
      [&](double kappa) {
        s.kappa = kappa;
        return evaluate_coupling(s, config, out.tau, options);
      },
      out.tau, options);
}

KappaThreshold kappa_threshold_with(const std::function<CouplingReport(double)>& evaluate, std::size_t tau,
                                    const ThresholdOptions& options) {
  options.validate();
  KappaThreshold out;
  out.tau = tau;
  std::vector<double> grid{0.0};
  const double span = 1000.0;
  for (std::size_t j = 0; j < options.scan_points; ++j) {
    const double e = static_cast<double>(j) / static_cast<double>(options.scan_points - 1) - 1.0;
    grid.push_back(options.kappa_max * std::pow(span, e));
  }
  auto eval = [&](double kappa) {
    out.trace.push_back(evaluate(kappa));
    return out.trace.back().passes();
  };

  std::vector<bool> pass;
  for (double kappa : grid) pass.push_back(eval(kappa));
  std::size_t runs = 0;
  for (std::size_t i = 0; i < pass.size(); ++i)
    if (pass[i] && (i == 0 || !pass[i - 1])) ++runs;
  if (runs == 0) {
    out.bracket = {options.kappa_max, std::numeric_limits<double>::infinity()};
    return out;
  }
  if (runs > 1)
    throw AmbiguousThresholdError("the kappa scan passes on " + std::to_string(runs) +
                                      " disjoint intervals; the threshold is ambiguous",
                                  out.trace);
  const auto first = static_cast<std::size_t>(std::find(pass.begin(), pass.end(), true) - pass.begin());
  if (first == 0) {
    out.kappa_c = 0.0;
    out.bracket = {0.0, 0.0};
    return out;
  }
  double lo = grid[first - 1], hi = grid[first];
  while (hi - lo > options.tol) {
    const double mid = 0.5 * (lo + hi);
    (eval(mid) ? hi : lo) = mid;
  }
  out.kappa_c = hi;
  out.bracket = {lo, hi};
  return out;
}

std::string coupling_trace_csv(const std::vector<CouplingReport>& trace) {
  io::Csv csv({"kappa", "I", "I_ci_lo", "I_ci_hi", "F", "C", "pass_F", "pass_C"});
  for (const auto& r : trace)
    csv.row(r.kappa, r.mi.nats, r.mi.ci.lo, r.mi.ci.hi, r.fidelity, r.efficacy, r.pass_f, r.pass_c);
  return csv.str();
}

}  // namespace twofield
