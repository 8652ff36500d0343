#include "twofield/synergy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "twofield/error.hpp"
#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield {

namespace {

double sq(double v) { return v * v; }

double metric_of(SynergyMetric m, double y) {
  if (m == SynergyMetric::yield) return y;
  return y > 0.0 ? -std::log(y) : std::numeric_limits<double>::infinity();
}

double mean_over(const std::vector<double>& per_chain, const std::vector<std::size_t>& pick) {
  double s = 0.0;
  for (auto c : pick) s += per_chain[c];
  return s / static_cast<double>(pick.size());
}

std::vector<std::size_t> identity_pick(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  return p;
}

}  // namespace

TargetRegion TargetRegion::ball(std::vector<double> center, double radius) {
  TargetRegion t;
  t.kind = RegionKind::ball;
  t.center = std::move(center);
  t.radius = radius;
  return t;
}

TargetRegion TargetRegion::box(std::vector<AxisBounds> bounds) {
  TargetRegion t;
  t.kind = RegionKind::box;
  t.bounds = std::move(bounds);
  return t;
}

bool TargetRegion::contains(std::span<const double> x) const {
  if (kind == RegionKind::ball) {
    double r2 = 0.0;
    for (std::size_t a = 0; a < center.size(); ++a) r2 += sq(x[a] - center[a]);
    return r2 <= radius * radius;
  }
  for (std::size_t a = 0; a < bounds.size(); ++a)
    if (x[a] < bounds[a].lo || x[a] > bounds[a].hi) return false;
  return true;
}

bool TargetRegion::intersects(const PerturbationWell& well) const {
  const double reach = well.support_radius();
  if (kind == RegionKind::ball) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < center.size(); ++a) d2 += sq(well.center[a] - center[a]);
    return d2 < sq(radius + reach);
  }
  double d2 = 0.0;
  for (std::size_t a = 0; a < bounds.size(); ++a) {
    const double c = well.center[a];
    if (c < bounds[a].lo) d2 += sq(bounds[a].lo - c);
    else if (c > bounds[a].hi) d2 += sq(c - bounds[a].hi);
  }
  return d2 < reach * reach;
}

void TargetRegion::validate(const ManifoldSpec& manifold) const {
  const std::size_t n = manifold.ambient_dim();
  if (kind == RegionKind::ball) {
    if (center.size() != n)
      throw GeometryError("target centre has " + io::fmt(center.size()) + " coordinates, manifold has " + io::fmt(n));
    if (!(radius > 0.0)) throw GeometryError("target radius must be positive");
    if (!manifold.contains(center)) throw GeometryError("target centre lies outside the manifold");
    if (manifold.kind == ManifoldKind::box)
      for (std::size_t a = 0; a < n; ++a)
        if (center[a] - radius < manifold.bounds[a].lo - 1e-12 || center[a] + radius > manifold.bounds[a].hi + 1e-12)
          throw GeometryError("target ball leaves the manifold along axis " + io::fmt(a));
    return;
  }
  if (bounds.size() != n)
    throw GeometryError("target box has " + io::fmt(bounds.size()) + " axes, manifold has " + io::fmt(n));
  for (std::size_t a = 0; a < n; ++a) {
    if (!(bounds[a].lo < bounds[a].hi)) throw GeometryError("target box axis " + io::fmt(a) + " has lo >= hi");
    const double lo = manifold.kind == ManifoldKind::box ? manifold.bounds[a].lo : 0.0;
    const double hi = manifold.kind == ManifoldKind::box ? manifold.bounds[a].hi : 1.0;
    if (bounds[a].lo < lo - 1e-12 || bounds[a].hi > hi + 1e-12)
      throw GeometryError("target box leaves the manifold along axis " + io::fmt(a));
  }
}

std::string to_string(SynergyMetric metric) { return metric == SynergyMetric::yield ? "yield" : "depth"; }

YieldEstimate yield_from_ensemble(const Ensemble& ensemble, const TargetRegion& target,
                                  const BootstrapOptions& options) {
  if (ensemble.size() == 0) throw InsufficientDataError("yield needs a non-empty ensemble");
  YieldEstimate y;
  y.per_chain.resize(ensemble.n_chains());
  for (std::size_t c = 0; c < ensemble.n_chains(); ++c) {
    std::size_t in = 0;
    for (std::size_t k = 0; k < ensemble.per_chain; ++k) in += target.contains(ensemble.sample(c, k));
    y.per_chain[c] = static_cast<double>(in) / static_cast<double>(ensemble.per_chain);
  }
  const auto all = identity_pick(ensemble.n_chains());
  y.mass = mean_over(y.per_chain, all);
  if (options.resamples <= 0 || ensemble.n_chains() < 2) {
    y.ci = {y.mass, y.mass};
    return y;
  }
  auto rng = make_rng(options.seed, "yield-bootstrap", 0);
  std::uniform_int_distribution<std::size_t> pick(0, ensemble.n_chains() - 1);
  std::vector<std::size_t> idx(ensemble.n_chains());
  std::vector<double> reps(static_cast<std::size_t>(options.resamples));
  for (auto& r : reps) {
    for (auto& i : idx) i = pick(rng);
    r = mean_over(y.per_chain, idx);
  }
  y.ci = stats::percentile_interval(std::move(reps), options.level);
  return y;
}

YieldEstimate yield_at_target(const ManifoldSpec& manifold, const DriftSpec& drift, const TargetRegion& target,
                              const SimConfig& config, const BootstrapOptions& options) {
  target.validate(manifold);
  return yield_from_ensemble(integrate(manifold, drift, config), target, options);
}

SynergyReport synergy_from_ensembles(const Ensemble& base, const Ensemble& a, const Ensemble& b, const Ensemble& ab,
                                     const TargetRegion& target, const SynergyOptions& options) {
  const std::size_t chains = base.n_chains();
  if (a.n_chains() != chains || b.n_chains() != chains || ab.n_chains() != chains)
    throw ContractError("synergy conditions must have the same chain count");

  SynergyReport r;
  r.metric = options.metric;
  r.base = yield_from_ensemble(base, target, options.bootstrap);
  r.a = yield_from_ensemble(a, target, options.bootstrap);
  r.b = yield_from_ensemble(b, target, options.bootstrap);
  r.ab = yield_from_ensemble(ab, target, options.bootstrap);

  struct Deltas {
    double a, b, ab;
  };
  const auto deltas = [&](const std::vector<std::size_t>& pick) {
    const double m0 = metric_of(options.metric, mean_over(r.base.per_chain, pick));
    return Deltas{metric_of(options.metric, mean_over(r.a.per_chain, pick)) - m0,
                  metric_of(options.metric, mean_over(r.b.per_chain, pick)) - m0,
                  metric_of(options.metric, mean_over(r.ab.per_chain, pick)) - m0};
  };
  const auto point = deltas(identity_pick(chains));
  r.delta_a = point.a;
  r.delta_b = point.b;
  r.delta_ab = point.ab;

  const int nb = options.bootstrap.resamples;
  if (nb <= 0 || chains < 2) {
    r.sum_ci = {point.a + point.b, point.a + point.b};
  } else {
    auto rng = make_rng(options.bootstrap.seed, "synergy-bootstrap", 0);
    std::uniform_int_distribution<std::size_t> pick(0, chains - 1);
    std::vector<std::size_t> idx(chains);
    std::vector<double> sums, ratios;
    sums.reserve(static_cast<std::size_t>(nb));
    ratios.reserve(static_cast<std::size_t>(nb));
    for (int k = 0; k < nb; ++k) {
      for (auto& i : idx) i = pick(rng);
      const auto d = deltas(idx);
      const double s = d.a + d.b;
      if (!std::isfinite(s)) continue;
      sums.push_back(s);
      if (s != 0.0 && std::isfinite(d.ab)) ratios.push_back(d.ab / s);
    }
    r.sum_ci = sums.empty() ? stats::Interval{point.a + point.b, point.a + point.b}
                            : stats::percentile_interval(std::move(sums), options.bootstrap.level);
    if (!ratios.empty()) r.s_ci = stats::percentile_interval(std::move(ratios), options.bootstrap.level);
  }
  const double sum = point.a + point.b;
  if (std::isfinite(sum) && sum != 0.0 && std::abs(sum) > r.sum_ci.width()) {
    r.s = point.ab / sum;
  } else {
    r.s.reset();
  }
  return r;
}

SynergyReport synergy_experiment(const ManifoldSpec& manifold, const DriftSpec& base, const PerturbationWell& well_a,
                                 const PerturbationWell& well_b, const TargetRegion& target, const SimConfig& config,
                                 const SynergyOptions& options) {
  const std::size_t n = base.dim();
  well_a.validate(n);
  well_b.validate(n);
  target.validate(manifold);
  if (!well_a.disjoint_from(well_b)) throw GeometryError("wells A and B have overlapping supports");
  if (target.intersects(well_a) && target.intersects(well_b))
    throw GeometryError("target region meets the supports of both wells");

  DriftSpec with_a = base, with_b = base, with_ab = base;
  with_a.wells.push_back(well_a);
  with_b.wells.push_back(well_b);
  with_ab.wells.push_back(well_a);
  with_ab.wells.push_back(well_b);

  const auto e0 = integrate(manifold, base, config);
  const auto ea = integrate(manifold, with_a, config);
  const auto eb = integrate(manifold, with_b, config);
  const auto eab = integrate(manifold, with_ab, config);
  return synergy_from_ensembles(e0, ea, eb, eab, target, options);
}

std::vector<double> moving_average3(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(v.size() - 1, i + 1);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<std::size_t> count_modes(std::span<const double> s, std::span<const double> hw) {
  std::vector<std::size_t> peaks;
  const std::size_t n = s.size();
  if (n == 0) return peaks;
  if (hw.size() != n) throw ContractError("count_modes: half-width count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || s[i] > s[i - 1];
    const bool right_ok = i + 1 == n || s[i] > s[i + 1];
    if (!left_ok || !right_ok || n == 1) continue;
    // Lowest point on each side before the curve climbs above s[i].
    std::optional<std::size_t> lmin, rmin;
    for (std::size_t j = i; j-- > 0;) {
      if (s[j] > s[i]) break;
      if (!lmin || s[j] < s[*lmin]) lmin = j;
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (s[j] > s[i]) break;
      if (!rmin || s[j] < s[*rmin]) rmin = j;
    }
    std::size_t ref;
    if (lmin && rmin) ref = s[*lmin] > s[*rmin] ? *lmin : *rmin;
    else ref = lmin ? *lmin : *rmin;
    if (s[i] - s[ref] > hw[i] + hw[ref]) peaks.push_back(i);
  }
  return peaks;
}

YieldCurve yield_curve_from(std::vector<double> drive, std::vector<YieldEstimate> yields) {
  if (drive.size() != yields.size()) throw ContractError("yield curve: drive and yield counts differ");
  YieldCurve c;
  c.drive = std::move(drive);
  c.yields = std::move(yields);
  std::vector<double> y(c.yields.size()), hw(c.yields.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = c.yields[i].mass;
    hw[i] = 0.5 * c.yields[i].ci.width();
  }
  c.smoothed = moving_average3(y);
  c.peaks = count_modes(c.smoothed, moving_average3(hw));
  return c;
}

YieldCurve yield_curve(const ManifoldSpec& manifold, const DriftFamily& family, const TargetRegion& target,
                       const std::vector<double>& drive, const SimConfig& config, const BootstrapOptions& options) {
  if (drive.size() < 7) throw RangeError("yield curve needs at least 7 sweep values, got " + io::fmt(drive.size()));
  target.validate(manifold);
  std::vector<YieldEstimate> ys;
  ys.reserve(drive.size());
  for (double v : drive) ys.push_back(yield_at_target(manifold, family(v), target, config, options));
  return yield_curve_from(drive, std::move(ys));
}

std::string synergy_csv(const SynergyReport& r) {
  io::Csv csv({"quantity", "value", "ci_lo", "ci_hi"});
  csv.row("y_base", r.base.mass, r.base.ci.lo, r.base.ci.hi);
  csv.row("y_A", r.a.mass, r.a.ci.lo, r.a.ci.hi);
  csv.row("y_B", r.b.mass, r.b.ci.lo, r.b.ci.hi);
  csv.row("y_AB", r.ab.mass, r.ab.ci.lo, r.ab.ci.hi);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  csv.row("delta_A", r.delta_a, nan, nan);
  csv.row("delta_B", r.delta_b, nan, nan);
  csv.row("delta_AB", r.delta_ab, nan, nan);
  csv.row("delta_A_plus_B", r.delta_a + r.delta_b, r.sum_ci.lo, r.sum_ci.hi);
  csv.row("S", r.s ? *r.s : nan, r.s_ci.lo, r.s_ci.hi);
  return csv.str();
}

std::string yield_curve_csv(const YieldCurve& c) {
  io::Csv csv({"drive", "yield", "ci_lo", "ci_hi", "smoothed", "peak"});
  for (std::size_t i = 0; i < c.drive.size(); ++i) {
    const bool peak = std::find(c.peaks.begin(), c.peaks.end(), i) != c.peaks.end();
    csv.row(c.drive[i], c.yields[i].mass, c.yields[i].ci.lo, c.yields[i].ci.hi, c.smoothed[i], peak);
  }
  return csv.str();
}

}  // namespace twofield
