#pragma once

// Synergy and yield-curve systems shared by the unit tests and the
// acceptance suite, with their quadrature / finite-volume oracles.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "fp_oracle.hpp"
#include "langevin_fixtures.hpp"
#include "twofield/synergy.hpp"

namespace twofield::testing {

// V = |x|^2 / 2 with an optional rotation omega about the origin.
inline DriftSpec harmonic(double omega) {
  PolynomialPotential v;
  v.terms = {{0.5, {2, 0}}, {0.5, {0, 2}}};
  return DriftSpec{RotationalDrift{v, omega, {0.0, 0.0}, 0, 1}, {}, {}};
}

struct SynergyGeometry {
  PerturbationWell a, b;
  TargetRegion target;
};

// Wells and target on the circle r = 0.7, 120 degrees apart; supports are
// disjoint from each other and from the target.
inline SynergyGeometry ring_geometry(double delta, double width = 0.2) {
  const double r = 0.7;
  const double third = 2.0 * std::numbers::pi / 3.0;
  SynergyGeometry g;
  g.a = {{r, 0.0}, width, delta};
  g.b = {{r * std::cos(third), r * std::sin(third)}, width, delta};
  g.target = TargetRegion::ball({r * std::cos(2 * third), r * std::sin(2 * third)}, 0.4);
  return g;
}

inline ManifoldSpec synergy_box() { return square(2.5, 2); }

inline SimConfig synergy_sim(double horizon, std::size_t chains, std::uint64_t seed = 1) {
  SimConfig cfg;
  cfg.noise = 0.25;
  cfg.dt = 1e-3;
  cfg.n_steps = static_cast<std::size_t>(horizon / cfg.dt);
  cfg.n_chains = chains;
  cfg.thin = 10;
  cfg.seed = seed;
  cfg.reference_cell = 0.1;
  return cfg;
}

struct OracleSynergy {
  double y0 = 0.0, da = 0.0, db = 0.0, dab = 0.0;
  double s() const { return dab / (da + db); }
};

// Finite-volume stationary yields of the four conditions.
inline OracleSynergy fp_synergy(const DriftSpec& base, const SynergyGeometry& g, double noise, std::size_t cells = 100) {
  double y[4];
  for (int c = 0; c < 4; ++c) {
    DriftSpec s = base;
    if (c & 1) s.wells.push_back(g.a);
    if (c & 2) s.wells.push_back(g.b);
    const auto fp = fp_stationary({-2.5, -2.5}, {2.5, 2.5}, cells,
                                  [&](std::span<const double> x, std::span<double> o) { s.evaluate(x, o); }, noise);
    y[c] = fp.mass_where([&](std::span<const double> x) { return g.target.contains(x); });
  }
  return {y[0], y[1] - y[0], y[2] - y[0], y[3] - y[0]};
}

// Anisotropic linear system b = [[-1, w], [-w, -4]] x: the stationary law
// is Gaussian and its principal axes tilt with the rotation strength w.
inline DriftSpec anisotropic_rotation(double omega) {
  Eigen::MatrixXd a(2, 2);
  a << -1.0, omega, -omega, -4.0;
  return linear_drift(a);
}

inline TargetRegion tilt_target() { return TargetRegion::ball({0.5, -0.3}, 0.2); }

// Gaussian mass of a ball by midpoint quadrature.
inline double gaussian_ball_mass(const Eigen::Matrix2d& cov, const TargetRegion& ball, int n = 600) {
  const Eigen::Matrix2d p = cov.inverse();
  const double norm = 1.0 / (2 * std::numbers::pi * std::sqrt(cov.determinant()));
  const double r = ball.radius, h = 2 * r / n;
  double m = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = ball.center[0] - r + (i + 0.5) * h;
      const double y = ball.center[1] - r + (j + 0.5) * h;
      const double dx = x - ball.center[0], dy = y - ball.center[1];
      if (dx * dx + dy * dy > r * r) continue;
      m += std::exp(-0.5 * (p(0, 0) * x * x + 2 * p(0, 1) * x * y + p(1, 1) * y * y));
    }
  return m * norm * h * h;
}

inline double anisotropic_yield_oracle(double omega, double noise) {
  Eigen::Matrix2d a;
  a << -1.0, omega, -omega, -4.0;
  return gaussian_ball_mass(lyapunov_covariance(a, noise), tilt_target());
}

// V = (x^2 - 1)^2 + lambda x on [-1.8, 1.8].
inline DriftSpec tilted_double_well(double lambda) {
  auto d = double_well(1);
  d.tilt = {lambda};
  return d;
}

// Boltzmann mass of [a, b] under exp(-V / D) on [lo, hi], midpoint rule.
inline double boltzmann_mass(const std::function<double(double)>& v, double noise, double lo, double hi, double a,
                             double b, int n = 200000) {
  double in = 0.0, all = 0.0;
  const double h = (hi - lo) / n;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 0.5) * h;
    const double w = std::exp(-v(x) / noise);
    all += w;
    if (x >= a && x <= b) in += w;
  }
  return in / all;
}

inline double tilted_right_mass(double lambda, double noise) {
  return boltzmann_mass([&](double x) { return (x * x - 1) * (x * x - 1) + lambda * x; }, noise, -1.8, 1.8, 0.0,
                        1.8);
}

}  // namespace twofield::testing
