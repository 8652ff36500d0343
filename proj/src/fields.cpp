#include "twofield/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "twofield/error.hpp"
#include "twofield/io.hpp"
#include "twofield/stats.hpp"

namespace twofield {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Jackknife standard error of a vector quantity at one cell from replicate
// values (dim entries per cell). Replicates with a non-finite entry are
// dropped; fewer than two usable replicates gives nan.
double jackknife_se(const std::vector<std::vector<double>>& reps, std::size_t cell, std::size_t dim) {
  std::vector<const double*> ok;
  for (const auto& r : reps) {
    const double* v = r.data() + cell * dim;
    bool finite = true;
    for (std::size_t a = 0; a < dim; ++a) finite = finite && std::isfinite(v[a]);
    if (finite) ok.push_back(v);
  }
  const std::size_t m = ok.size();
  if (m < 2) return kNaN;
  double ss = 0.0;
  for (std::size_t a = 0; a < dim; ++a) {
    double mean = 0.0;
    for (const double* v : ok) mean += v[a];
    mean /= static_cast<double>(m);
    for (const double* v : ok) ss += (v[a] - mean) * (v[a] - mean);
  }
  return std::sqrt(ss * static_cast<double>(m - 1) / static_cast<double>(m));
}

double norm(const double* v, std::size_t dim) {
  double s = 0.0;
  for (std::size_t a = 0; a < dim; ++a) s += v[a] * v[a];
  return std::sqrt(s);
}

// Central-difference gradient of a scalar field; nan where the cell or any
// axis neighbour is non-finite (boundary cells have no neighbour).
std::vector<double> central_gradient(const GridGeometry& grid, const std::vector<double>& f) {
  const std::size_t d = grid.dim(), n = grid.size();
  std::vector<double> g(n * d, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f[i])) continue;
    std::vector<double> v(d);
    bool ok = true;
    for (std::size_t a = 0; a < d && ok; ++a) {
      const auto lo = grid.neighbor(i, a, -1), hi = grid.neighbor(i, a, +1);
      if (!lo || !hi || !std::isfinite(f[*lo]) || !std::isfinite(f[*hi])) {
        ok = false;
        break;
      }
      v[a] = (f[*hi] - f[*lo]) / (2.0 * grid.width[a]);
    }
    if (ok) std::copy(v.begin(), v.end(), g.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return g;
}

std::vector<double> masked_log(const std::vector<double>& p, const std::vector<std::uint8_t>& supported) {
  std::vector<double> phi(p.size(), kNaN);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (supported[i] && p[i] > 0.0) phi[i] = -std::log(p[i]);
  return phi;
}

std::vector<double> compute_current(const FieldGrid& f, const std::vector<double>& p) {
  const auto& grid = f.grid;
  const std::size_t d = grid.dim(), n = grid.size();
  std::vector<double> j(n * d, kNaN);
  std::vector<double> dp(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (!f.supported[i]) continue;
    bool ok = true;
    for (std::size_t a = 0; a < d && ok; ++a) {
      const auto lo = grid.neighbor(i, a, -1), hi = grid.neighbor(i, a, +1);
      if (!lo || !hi || !f.supported[*lo] || !f.supported[*hi]) {
        ok = false;
        break;
      }
      dp[a] = (p[*hi] - p[*lo]) / (2.0 * grid.width[a]);
    }
    if (!ok) continue;
    for (std::size_t a = 0; a < d; ++a) {
      double v = f.drift[i * d + a] * p[i];
      for (std::size_t b = 0; b < d; ++b) v -= f.diffusion(a, b) * dp[b];
      j[i * d + a] = v;
    }
  }
  return j;
}

std::vector<double> compute_sigma(const FieldGrid& f, const Eigen::MatrixXd& dinv,
                                  const std::vector<double>& p, const std::vector<double>& j) {
  const std::size_t d = f.dim(), n = f.size();
  std::vector<double> s(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    if (!f.current_valid[i] || !std::isfinite(j[i * d]) || !(p[i] > 0.0)) continue;
    Eigen::Map<const Eigen::VectorXd> jv(j.data() + i * d, static_cast<Eigen::Index>(d));
    s[i] = std::max(0.0, jv.dot(dinv * jv)) / p[i];
  }
  return s;
}

std::vector<double> compute_divergence(const GridGeometry& grid, const std::vector<double>& j) {
  const std::size_t d = grid.dim(), n = grid.size();
  std::vector<double> div(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    bool ok = true;
    for (std::size_t a = 0; a < d && ok; ++a) {
      const auto lo = grid.neighbor(i, a, -1), hi = grid.neighbor(i, a, +1);
      if (!lo || !hi || !std::isfinite(j[*lo * d + a]) || !std::isfinite(j[*hi * d + a])) {
        ok = false;
        break;
      }
      v += (j[*hi * d + a] - j[*lo * d + a]) / (2.0 * grid.width[a]);
    }
    if (ok) div[i] = v;
  }
  return div;
}

Eigen::MatrixXd chart_diffusion(const ManifoldSpec& m, double noise) {
  const auto d = static_cast<Eigen::Index>(m.dim);
  Eigen::MatrixXd D = noise * Eigen::MatrixXd::Identity(d, d);
  if (m.kind == ManifoldKind::simplex)
    D -= noise / static_cast<double>(m.dim + 1) * Eigen::MatrixXd::Ones(d, d);
  return D;
}

}  // namespace

// ---------------------------------------------------------------- geometry

std::size_t GridGeometry::default_cells(std::size_t dim) {
  if (dim <= 2) return 64;
  if (dim == 3) return 24;
  return 12;
}

GridGeometry GridGeometry::make(std::vector<AxisBounds> bounds, std::vector<std::size_t> cells) {
  if (bounds.empty() || bounds.size() != cells.size())
    throw ConfigError("grid needs one cell count per axis");
  GridGeometry g;
  for (std::size_t a = 0; a < bounds.size(); ++a) {
    if (!(bounds[a].lo < bounds[a].hi)) throw GeometryError("grid axis " + std::to_string(a) + " has lo >= hi");
    if (cells[a] < 3) throw ConfigError("grid needs at least 3 cells per axis");
    g.lo.push_back(bounds[a].lo);
    g.hi.push_back(bounds[a].hi);
    g.width.push_back((bounds[a].hi - bounds[a].lo) / static_cast<double>(cells[a]));
  }
  g.cells = std::move(cells);
  return g;
}

GridGeometry GridGeometry::for_manifold(const ManifoldSpec& manifold, std::optional<std::size_t> cells_per_axis) {
  manifold.validate();
  const std::size_t c = cells_per_axis ? *cells_per_axis : default_cells(manifold.dim);
  return make(manifold.chart_bounds(), std::vector<std::size_t>(manifold.dim, c));
}

std::size_t GridGeometry::size() const {
  std::size_t n = 1;
  for (auto c : cells) n *= c;
  return n;
}

double GridGeometry::cell_volume() const {
  double v = 1.0;
  for (double w : width) v *= w;
  return v;
}

std::size_t GridGeometry::stride(std::size_t axis) const {
  std::size_t s = 1;
  for (std::size_t a = axis + 1; a < cells.size(); ++a) s *= cells[a];
  return s;
}

std::size_t GridGeometry::coordinate(std::size_t flat, std::size_t axis) const {
  return (flat / stride(axis)) % cells[axis];
}

double GridGeometry::center(std::size_t flat, std::size_t axis) const {
  return lo[axis] + (static_cast<double>(coordinate(flat, axis)) + 0.5) * width[axis];
}

std::optional<std::size_t> GridGeometry::locate(std::span<const double> point) const {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < cells.size(); ++a) {
    const double x = point[a];
    const double tol = 1e-9 * width[a];
    if (!(x >= lo[a] - tol && x <= hi[a] + tol)) return std::nullopt;
    auto k = static_cast<long long>(std::floor((x - lo[a]) / width[a]));
    k = std::clamp<long long>(k, 0, static_cast<long long>(cells[a]) - 1);
    flat = flat * cells[a] + static_cast<std::size_t>(k);
  }
  return flat;
}

std::optional<std::size_t> GridGeometry::neighbor(std::size_t flat, std::size_t axis, int dir) const {
  const std::size_t k = coordinate(flat, axis);
  if (dir < 0 && k == 0) return std::nullopt;
  if (dir > 0 && k + 1 >= cells[axis]) return std::nullopt;
  const std::size_t s = stride(axis);
  return dir < 0 ? flat - s : flat + s;
}

std::uint8_t FieldGrid::mask(std::size_t cell) const {
  std::uint8_t m = 0;
  if (!supported[cell]) m |= kMaskDensity;
  if (has_current() && !current_valid[cell]) m |= kMaskCurrent;
  if (!std::isfinite(grad_phi[cell * dim()])) m |= kMaskGradPhi;
  if (!has_sigma() || !std::isfinite(grad_sigma[cell * dim()])) m |= kMaskGradSigma;
  return m;
}

// ----------------------------------------------------------------- density

FieldGrid estimate_density(const Ensemble& ensemble, const ManifoldSpec& manifold, const GridGeometry& grid,
                           const FieldOptions& options) {
  manifold.validate();
  if (grid.dim() != manifold.dim) throw ConfigError("grid dimension does not match the manifold");
  if (ensemble.dim != manifold.ambient_dim())
    throw ConfigError("ensemble dimension does not match the manifold");
  const std::size_t total = ensemble.size();
  if (total == 0) throw InsufficientDataError("empty ensemble");

  FieldGrid f;
  f.grid = grid;
  f.manifold = manifold;
  f.support_threshold = static_cast<double>(options.support_threshold);
  const std::size_t n = grid.size(), d = grid.dim();
  const std::size_t groups = std::max<std::size_t>(options.replicate_groups, 2);

  // Samples are split into contiguous segments of the chain-major stream; with
  // n_chains a multiple of the group count every group is a set of chains.
  f.count.assign(n, 0);
  std::vector<std::vector<std::size_t>> gcount(groups, std::vector<std::size_t>(n, 0));
  std::vector<std::size_t> gtotal(groups, 0);
  std::size_t inside = 0, idx = 0;
  for (std::size_t c = 0; c < ensemble.n_chains(); ++c) {
    for (std::size_t k = 0; k < ensemble.per_chain; ++k, ++idx) {
      const auto cell = grid.locate(ensemble.sample(c, k));
      if (!cell) continue;
      const std::size_t g = idx * groups / total;
      ++f.count[*cell];
      ++gcount[g][*cell];
      ++gtotal[g];
      ++inside;
    }
  }
  if (inside == 0) throw InsufficientDataError("no sample falls inside the grid");
  f.total_samples = inside;

  const double vol = grid.cell_volume();
  f.density.resize(n);
  f.supported.assign(n, 0);
  std::size_t live = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f.density[i] = static_cast<double>(f.count[i]) / (static_cast<double>(inside) * vol);
    bool ok = static_cast<double>(f.count[i]) >= f.support_threshold && f.count[i] > 0;
    if (ok && manifold.kind == ManifoldKind::simplex) {
      double upper = 0.0;
      for (std::size_t a = 0; a < d; ++a) upper += grid.center(i, a) + 0.5 * grid.width[a];
      ok = upper <= 1.0 + 1e-12;  // cell lies wholly inside the simplex chart
    }
    f.supported[i] = ok;
    live += ok;
  }
  if (live == 0)
    throw InsufficientDataError("every cell is below the support threshold of " +
                                std::to_string(options.support_threshold) + " samples");

  f.phi = masked_log(f.density, f.supported);
  f.grad_phi = central_gradient(grid, f.phi);

  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t rest = inside - gtotal[g];
    if (rest == 0) continue;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i)
      p[i] = static_cast<double>(f.count[i] - gcount[g][i]) / (static_cast<double>(rest) * vol);
    f.replicate_grad_phi.push_back(central_gradient(grid, masked_log(p, f.supported)));
    f.replicate_density.push_back(std::move(p));
  }
  f.grad_phi_se.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.grad_phi_se[i] = jackknife_se(f.replicate_grad_phi, i, d);
  return f;
}

// ----------------------------------------------------------------- current

std::vector<double> chart_drift(const ManifoldSpec& manifold, const DriftFn& drift,
                                std::span<const double> chart_point) {
  const std::size_t d = manifold.dim, amb = manifold.ambient_dim();
  std::vector<double> x(amb), b(amb);
  std::copy(chart_point.begin(), chart_point.begin() + static_cast<std::ptrdiff_t>(d), x.begin());
  if (manifold.kind == ManifoldKind::simplex) {
    double s = 0.0;
    for (std::size_t a = 0; a < d; ++a) s += x[a];
    x[d] = std::max(0.0, 1.0 - s);
  }
  drift(x, b);
  if (manifold.kind == ManifoldKind::simplex) {
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(amb);
    for (auto& v : b) v -= mb;
  }
  b.resize(d);
  return b;
}

void stationary_current(FieldGrid& f, const DriftFn& drift, double noise) {
  if (!(noise > 0.0)) throw ConfigError("noise D must be positive");
  const std::size_t n = f.size(), d = f.dim();
  f.noise = noise;
  f.diffusion = chart_diffusion(f.manifold, noise);
  f.drift.assign(n * d, 0.0);
  std::vector<double> c(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) c[a] = f.grid.center(i, a);
    const auto b = chart_drift(f.manifold, drift, c);
    std::copy(b.begin(), b.end(), f.drift.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  f.current = compute_current(f, f.density);
  f.current_valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) f.current_valid[i] = std::isfinite(f.current[i * d]);
  f.replicate_current.clear();
  for (const auto& p : f.replicate_density) f.replicate_current.push_back(compute_current(f, p));
  f.current_se.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.current_se[i] = jackknife_se(f.replicate_current, i, d);
  f.sigma.clear();
  f.grad_sigma.clear();
}

void stationary_current(FieldGrid& f, const DriftSpec& drift, double noise) {
  stationary_current(
      f, [&](std::span<const double> x, std::span<double> b) { drift.evaluate(x, b); }, noise);
}

// ----------------------------------------------------------------- entropy

void entropy_field(FieldGrid& f) {
  if (!f.has_current()) throw ContractError("entropy_field needs the stationary current");
  const std::size_t n = f.size(), d = f.dim();
  const double vol = f.grid.cell_volume();
  const Eigen::MatrixXd dinv = f.diffusion.inverse();

  f.sigma = compute_sigma(f, dinv, f.density, f.current);
  f.sigma_total = 0.0;
  f.sigma_integral = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (std::isfinite(f.sigma[i])) {
      f.sigma_total += f.sigma[i] * f.density[i] * vol;
      f.sigma_integral += f.sigma[i] * vol;
    }
  f.grad_sigma = central_gradient(f.grid, f.sigma);

  f.replicate_sigma.clear();
  std::vector<std::vector<double>> rep_grad;
  for (std::size_t g = 0; g < f.replicate_density.size(); ++g) {
    f.replicate_sigma.push_back(compute_sigma(f, dinv, f.replicate_density[g], f.replicate_current[g]));
    rep_grad.push_back(central_gradient(f.grid, f.replicate_sigma.back()));
  }
  f.grad_sigma_se.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.grad_sigma_se[i] = jackknife_se(rep_grad, i, d);

  // Estimator noise alone contributes tr(D^-1 Cov J) * vol per cell to the
  // integrated Sigma, since Sigma * p = J^T D^-1 J.
  const std::size_t m = f.replicate_current.size();
  double level = 0.0, level_integral = 0.0;
  if (m >= 2) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!f.current_valid[i]) continue;
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      for (const auto& r : f.replicate_current)
        mean += Eigen::Map<const Eigen::VectorXd>(r.data() + i * d, static_cast<Eigen::Index>(d));
      mean /= static_cast<double>(m);
      double q = 0.0;
      for (const auto& r : f.replicate_current) {
        const Eigen::VectorXd dev =
            Eigen::Map<const Eigen::VectorXd>(r.data() + i * d, static_cast<Eigen::Index>(d)) - mean;
        q += dev.dot(dinv * dev);
      }
      const double cell = q * static_cast<double>(m - 1) / static_cast<double>(m) * vol;
      level += cell;
      level_integral += cell / f.density[i];
    }
  }
  f.sigma_noise_level = level;
  f.sigma_integral_noise_level = level_integral;
  f.sigma_noise_floor = 3.0 * level;
}

StationarityDiagnostic stationarity_diagnostic(const FieldGrid& f) {
  if (!f.has_current()) throw ContractError("stationarity diagnostic needs the stationary current");
  const std::size_t n = f.size();
  const auto div = compute_divergence(f.grid, f.current);
  std::vector<std::vector<double>> reps;
  for (const auto& j : f.replicate_current) reps.push_back(compute_divergence(f.grid, j));
  StationarityDiagnostic out;
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(div[i])) continue;
    const double se = jackknife_se(reps, i, 1);
    if (!std::isfinite(se)) continue;
    const double m = f.mass(i);
    out.mean_abs_divergence += m * std::abs(div[i]);
    out.divergence_se += m * se;
    w += m;
    ++out.cells;
  }
  if (w > 0.0) {
    out.mean_abs_divergence /= w;
    out.divergence_se /= w;
  }
  return out;
}

// ------------------------------------------------------------- collinearity

CollinearityResult collinearity_map(const FieldGrid& f, const CollinearityOptions& options) {
  if (!f.has_sigma()) throw ContractError("collinearity_map needs the entropy field");
  if (!(options.eps_angle >= 0.0 && options.eps_angle <= 1.0))
    throw RangeError("eps_angle must lie in [0, 1]");
  if (!(options.eps_grad_fraction >= 0.0)) throw RangeError("eps_grad_fraction must be non-negative");
  const std::size_t n = f.size(), d = f.dim();

  CollinearityResult out;
  out.eps_angle = options.eps_angle;
  out.sin2theta.assign(n, kNaN);
  out.included.assign(n, 0);

  std::vector<std::size_t> both;
  std::vector<double> mphi, msig, w;
  for (std::size_t i = 0; i < n; ++i) {
    const double* u = f.grad_phi.data() + i * d;
    const double* v = f.grad_sigma.data() + i * d;
    if (!std::isfinite(u[0]) || !std::isfinite(v[0])) continue;
    both.push_back(i);
    mphi.push_back(norm(u, d));
    msig.push_back(norm(v, d));
    w.push_back(f.mass(i));
  }
  double support_mass = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (f.supported[i]) support_mass += f.mass(i);
  if (both.empty() || support_mass <= 0.0) return out;

  out.eps_grad_phi = options.eps_grad_fraction * stats::weighted_median(mphi, w);
  out.eps_grad_sigma = options.eps_grad_fraction * stats::weighted_median(msig, w);

  double noncollinear = 0.0;
  for (std::size_t k = 0; k < both.size(); ++k) {
    const std::size_t i = both[k];
    if (!(mphi[k] > out.eps_grad_phi) || !(msig[k] > out.eps_grad_sigma)) continue;
    if (options.significance_z > 0.0) {
      const double sp = f.grad_phi_se[i], ss = f.grad_sigma_se[i];
      if (std::isfinite(sp) && !(mphi[k] > options.significance_z * sp)) continue;
      if (std::isfinite(ss) && !(msig[k] > options.significance_z * ss)) continue;
    }
    double s2 = 0.0;
    if (d > 1) {
      // Lagrange identity: |u|^2 |v|^2 - (u.v)^2 = sum_{a<b} (u_a v_b - u_b v_a)^2
      const double* u = f.grad_phi.data() + i * d;
      const double* v = f.grad_sigma.data() + i * d;
      double cross = 0.0;
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a + 1; b < d; ++b) {
          const double c = u[a] * v[b] - u[b] * v[a];
          cross += c * c;
        }
      s2 = std::clamp(cross / (mphi[k] * mphi[k] * msig[k] * msig[k]), 0.0, 1.0);
    }
    out.sin2theta[i] = s2;
    out.included[i] = 1;
    ++out.included_cells;
    out.included_mass += w[k];
    if (s2 > options.eps_angle) noncollinear += w[k];
  }
  if (out.included_cells > 0) out.fraction = noncollinear / support_mass;
  return out;
}

// ------------------------------------------------------------ decomposition

DriftDecomposition decompose_drift(const FieldGrid& f, std::span<const double> b) {
  if (!f.has_sigma()) throw ContractError("decompose_drift needs the entropy field");
  const std::size_t n = f.size(), d = f.dim();
  if (b.size() != n * d) throw ConfigError("drift field must hold dim values per cell");

  Eigen::Matrix2d gram = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < n; ++i) {
    const double* gs = f.grad_sigma.data() + i * d;
    const double* gp = f.grad_phi.data() + i * d;
    if (!std::isfinite(gs[0]) || !std::isfinite(gp[0]) || !std::isfinite(b[i * d])) continue;
    const double w = f.mass(i);
    for (std::size_t a = 0; a < d; ++a) {
      const double u = -gs[a], v = -gp[a], y = b[i * d + a];
      gram(0, 0) += w * u * u;
      gram(0, 1) += w * u * v;
      gram(1, 1) += w * v * v;
      rhs(0) += w * u * y;
      rhs(1) += w * v * y;
    }
    used.push_back(i);
  }
  gram(1, 0) = gram(0, 1);
  if (used.empty()) throw InsufficientDataError("no cell carries both gradient fields");

  DriftDecomposition out;
  out.cells = used.size();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(gram);
  const double lmin = eig.eigenvalues()(0), lmax = eig.eigenvalues()(1);
  out.gram_condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(out.gram_condition <= 1e12))
    throw CollinearRegressorsError("grad Sigma and grad Phi_I are collinear on the fit set (condition " +
                                   io::fmt(out.gram_condition) + ")");
  const Eigen::Vector2d coef = gram.ldlt().solve(rhs);
  out.alpha = coef(0);
  out.beta = coef(1);

  out.residual.assign(n * d, kNaN);
  double num = 0.0, den = 0.0;
  for (std::size_t i : used) {
    const double w = f.mass(i);
    double r2 = 0.0, b2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double r = b[i * d + a] + out.alpha * f.grad_sigma[i * d + a] + out.beta * f.grad_phi[i * d + a];
      out.residual[i * d + a] = r;
      r2 += r * r;
      b2 += b[i * d + a] * b[i * d + a];
    }
    num += w * std::sqrt(r2);
    den += w * std::sqrt(b2);
  }
  out.residual_fraction = den > 0.0 ? std::min(1.0, num / den) : 0.0;
  return out;
}

DriftDecomposition decompose_drift(const FieldGrid& f, const DriftSpec& drift) {
  const std::size_t n = f.size(), d = f.dim();
  const DriftFn fn = [&](std::span<const double> x, std::span<double> b) { drift.evaluate(x, b); };
  std::vector<double> field(n * d);
  std::vector<double> c(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) c[a] = f.grid.center(i, a);
    const auto b = chart_drift(f.manifold, fn, c);
    std::copy(b.begin(), b.end(), field.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return decompose_drift(f, field);
}

double fit_phi_curvature(const FieldGrid& f, std::span<const double> origin) {
  const std::size_t d = f.dim();
  // Weighted least squares phi = c0 + c2 r^2 with cell-mass weights.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f.phi[i])) continue;
    double r2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double dx = f.grid.center(i, a) - origin[a];
      r2 += dx * dx;
    }
    const double w = f.mass(i);
    sw += w;
    sx += w * r2;
    sy += w * f.phi[i];
    sxx += w * r2 * r2;
    sxy += w * r2 * f.phi[i];
  }
  const double den = sw * sxx - sx * sx;
  if (!(den > 0.0)) throw InsufficientDataError("too few supported cells to fit a curvature");
  return (sw * sxy - sx * sy) / den;
}

std::string fieldgrid_csv(const FieldGrid& f, const CollinearityResult* col) {
  const std::size_t d = f.dim(), n = f.size();
  std::vector<std::string> header{"cell_index"};
  for (std::size_t a = 0; a < d; ++a) header.push_back("center_" + std::to_string(a));
  header.insert(header.end(), {"p_hat", "phi", "sigma"});
  for (std::size_t a = 0; a < d; ++a) header.push_back("j_" + std::to_string(a));
  for (std::size_t a = 0; a < d; ++a) header.push_back("gradphi_" + std::to_string(a));
  for (std::size_t a = 0; a < d; ++a) header.push_back("gradsigma_" + std::to_string(a));
  header.insert(header.end(), {"sin2theta", "mask"});
  io::Csv csv(header);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row{io::fmt(i)};
    for (std::size_t a = 0; a < d; ++a) row.push_back(io::fmt(f.grid.center(i, a)));
    row.push_back(io::fmt(f.density[i]));
    row.push_back(io::fmt(f.phi[i]));
    row.push_back(io::fmt(f.has_sigma() ? f.sigma[i] : kNaN));
    for (std::size_t a = 0; a < d; ++a) row.push_back(io::fmt(f.has_current() ? f.current[i * d + a] : kNaN));
    for (std::size_t a = 0; a < d; ++a) row.push_back(io::fmt(f.grad_phi[i * d + a]));
    for (std::size_t a = 0; a < d; ++a) row.push_back(io::fmt(f.has_sigma() ? f.grad_sigma[i * d + a] : kNaN));
    std::uint8_t m = f.mask(i);
    double s2 = kNaN;
    if (col) {
      s2 = col->sin2theta[i];
      if (!col->included[i]) m |= kMaskExcluded;
    }
    row.push_back(io::fmt(s2));
    row.push_back(io::fmt(static_cast<int>(m)));
    csv.add(std::move(row));
  }
  return csv.str();
}

}  // namespace twofield
