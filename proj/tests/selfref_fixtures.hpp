#pragma once

#include "langevin_fixtures.hpp"
#include "twofield/selfref.hpp"

namespace twofield::testing {

// 1-D OU substrate b = -x with identity projection and g(y) = gain * y (or
// tanh(gain * y)), so the augmented drift is -x - kappa g(x).
inline SelfRefSystem ou_selfref(double kappa, FeedbackKind kind = FeedbackKind::linear, double gain = 1.0) {
  SelfRefSystem s;
  s.manifold = square(4.0, 1);
  s.substrate = linear_drift(-Eigen::MatrixXd::Identity(1, 1));
  s.projection = Eigen::MatrixXd::Identity(1, 1);
  s.feedback = Feedback{kind, Eigen::MatrixXd::Constant(1, 1, gain)};
  s.kappa = kappa;
  return s;
}

inline SimConfig selfref_sim(std::uint64_t seed = 3) {
  SimConfig c;
  c.noise = 0.5;
  c.dt = 5e-4;
  c.n_steps = 400000;
  c.n_chains = 8;
  c.thin = 20;  // one stride = 0.01 time units
  c.seed = seed;
  return c;
}

// Correlated standard bivariate Gaussian pairs.
inline std::pair<std::vector<double>, std::vector<double>> gaussian_pairs(double rho, std::size_t n,
                                                                           std::uint64_t seed) {
  Rng rng = make_rng(seed, "gaussian-pairs", 0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = g(rng), b = g(rng);
    x[i] = a;
    y[i] = rho * a + std::sqrt(1 - rho * rho) * b;
  }
  return {x, y};
}

}  // namespace twofield::testing
