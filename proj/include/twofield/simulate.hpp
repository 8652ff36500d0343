#pragma once

// Euler-Maruyama integration of dX = b(X) dt + sqrt(2 D) dW on a box with
// reflecting walls or on the probability simplex.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "twofield/drift.hpp"
#include "twofield/error.hpp"
#include "twofield/manifold.hpp"
#include "twofield/parallel.hpp"
#include "twofield/random.hpp"

namespace twofield {

struct SimConfig {
  double noise = 0.5;  // D
  double dt = 1e-3;
  std::size_t n_steps = 100000;  // per chain
  std::size_t n_chains = 8;
  std::optional<std::size_t> burn_in;  // default: 20% of n_steps
  std::size_t thin = 10;
  std::uint64_t seed = 1;
  Workers workers = Workers::single();
  // Cell size used by the stability heuristic; defaults to the smallest
  // cell of the default analysis grid for the manifold.
  std::optional<double> reference_cell;

  std::size_t burn_in_steps() const { return burn_in ? *burn_in : n_steps / 5; }
  std::size_t retained_per_chain() const {
    return thin == 0 ? 0 : (n_steps - burn_in_steps()) / thin;
  }
  void validate() const;
};

// Retained samples of every chain, row-major per chain.
struct Ensemble {
  std::size_t dim = 0;  // ambient coordinates per sample
  std::size_t per_chain = 0;
  std::size_t first_step = 0;  // step index of the first retained sample
  std::size_t thin = 1;
  std::vector<std::vector<double>> chains;

  std::size_t n_chains() const { return chains.size(); }
  std::size_t size() const { return chains.size() * per_chain; }
  std::span<const double> sample(std::size_t chain, std::size_t k) const {
    return {chains[chain].data() + k * dim, dim};
  }
  std::size_t step_of(std::size_t k) const { return first_step + k * thin; }
};

// Throws ConfigError unless dt * max|b| < 0.1 * cell size.
void check_stability(const ManifoldSpec& manifold, const DriftFn& drift, const SimConfig& config);

// Default reference cell size (smallest default-grid cell on the chart).
double default_reference_cell(const ManifoldSpec& manifold);

namespace detail {

inline void reflect_into_box(const ManifoldSpec& m, std::span<double> x) {
  for (std::size_t a = 0; a < m.dim; ++a) {
    const double lo = m.bounds[a].lo, hi = m.bounds[a].hi;
    for (int guard = 0; guard < 8 && (x[a] < lo || x[a] > hi); ++guard) {
      if (x[a] > hi) x[a] = 2 * hi - x[a];
      if (x[a] < lo) x[a] = 2 * lo - x[a];
    }
    if (x[a] < lo || x[a] > hi) x[a] = std::nan("");  // escaped by many box widths
  }
}

// Tangent projection has already been applied; clamp and renormalise.
inline void clamp_to_simplex(std::span<double> x) {
  double s = 0.0;
  for (auto& v : x) {
    if (v < 1e-12) v = 1e-12;
    s += v;
  }
  for (auto& v : x) v /= s;
}

}  // namespace detail

// Integrates n_chains independent chains. Chain c draws its initial point and
// noise from derive_seed(seed, "langevin", c), so the result does not depend
// on the worker count.
template <typename Drift>
Ensemble integrate_with(const ManifoldSpec& manifold, const Drift& drift, const SimConfig& config) {
  manifold.validate();
  config.validate();
  const std::size_t d = manifold.ambient_dim();
  const std::size_t burn = config.burn_in_steps();

  Ensemble ens;
  ens.dim = d;
  ens.per_chain = config.retained_per_chain();
  ens.thin = config.thin;
  ens.first_step = burn + config.thin - 1;
  ens.chains.resize(config.n_chains);

  const double amp = std::sqrt(2.0 * config.noise * config.dt);
  const bool simplex = manifold.kind == ManifoldKind::simplex;

  parallel_for(config.n_chains, config.workers, [&](std::size_t c) {
    Rng rng = make_rng(config.seed, "langevin", c);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(d), b(d), xi(d);
    manifold.sample_uniform(rng, x);
    auto& out = ens.chains[c];
    out.reserve(ens.per_chain * d);
    for (std::size_t step = 0; step < config.n_steps; ++step) {
      drift(std::span<const double>(x), std::span<double>(b));
      for (std::size_t a = 0; a < d; ++a) xi[a] = gauss(rng);
      if (simplex) {
        double mb = 0.0, mxi = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
          mb += b[a];
          mxi += xi[a];
        }
        mb /= static_cast<double>(d);
        mxi /= static_cast<double>(d);
        for (std::size_t a = 0; a < d; ++a) x[a] += (b[a] - mb) * config.dt + amp * (xi[a] - mxi);
        detail::clamp_to_simplex(x);
      } else {
        for (std::size_t a = 0; a < d; ++a) x[a] += b[a] * config.dt + amp * xi[a];
        detail::reflect_into_box(manifold, x);
      }
      for (std::size_t a = 0; a < d; ++a) {
        if (!std::isfinite(x[a]))
          throw DivergenceError(static_cast<long long>(step), static_cast<int>(c),
                                "non-finite state in chain " + std::to_string(c) + " at step " +
                                    std::to_string(step));
      }
      if (step >= burn && (step - burn) % config.thin == config.thin - 1 &&
          out.size() < ens.per_chain * d)
        out.insert(out.end(), x.begin(), x.end());
    }
  });
  return ens;
}

// Every check integrate() performs before stepping: dimensions, confinement,
// stability.
void check_integration(const ManifoldSpec& manifold, const DriftSpec& drift, const SimConfig& config);

// Validates the drift against the manifold and integrates it.
Ensemble integrate(const ManifoldSpec& manifold, const DriftSpec& drift, const SimConfig& config);

std::string trajectory_csv(const Ensemble& ensemble);

}  // namespace twofield
