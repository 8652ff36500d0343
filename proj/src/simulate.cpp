#include "twofield/simulate.hpp"

#include <algorithm>

#include "twofield/fields.hpp"
#include "twofield/io.hpp"

namespace twofield {

void SimConfig::validate() const {
  if (!(noise > 0.0)) throw ConfigError("noise D must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (n_chains < 1) throw ConfigError("need at least one chain");
  if (thin < 1) throw ConfigError("thinning stride must be at least 1");
  if (burn_in_steps() >= n_steps)
    throw ConfigError("burn_in (" + std::to_string(burn_in_steps()) + ") must be below n_steps (" +
                      std::to_string(n_steps) + ")");
  if (retained_per_chain() == 0) throw ConfigError("configuration retains no samples");
}

double default_reference_cell(const ManifoldSpec& manifold) {
  const auto grid = GridGeometry::for_manifold(manifold);
  return *std::min_element(grid.width.begin(), grid.width.end());
}

void check_stability(const ManifoldSpec& manifold, const DriftFn& drift, const SimConfig& config) {
  const double cell = config.reference_cell ? *config.reference_cell : default_reference_cell(manifold);
  const double bmax = max_drift_magnitude(manifold, drift, config.seed);
  if (!(config.dt * bmax < 0.1 * cell))
    throw ConfigError("unstable time step: dt * max|b| = " + io::fmt(config.dt * bmax) +
                      " must be below 0.1 * cell size = " + io::fmt(0.1 * cell) + " (max|b| = " +
                      io::fmt(bmax) + ")");
}

void check_integration(const ManifoldSpec& manifold, const DriftSpec& drift, const SimConfig& config) {
  manifold.validate();
  config.validate();
  drift.validate(manifold);
  const DriftFn fn = [&](std::span<const double> x, std::span<double> b) { drift.evaluate(x, b); };
  check_confinement(manifold, fn, config.seed);
  check_stability(manifold, fn, config);
}

Ensemble integrate(const ManifoldSpec& manifold, const DriftSpec& drift, const SimConfig& config) {
  check_integration(manifold, drift, config);
  return integrate_with(manifold, [&](std::span<const double> x, std::span<double> b) { drift.evaluate(x, b); },
                        config);
}

std::string trajectory_csv(const Ensemble& ensemble) {
  std::vector<std::string> header{"chain", "step"};
  for (std::size_t a = 0; a < ensemble.dim; ++a) header.push_back("x" + std::to_string(a));
  io::Csv csv(header);
  for (std::size_t c = 0; c < ensemble.n_chains(); ++c) {
    for (std::size_t k = 0; k < ensemble.per_chain; ++k) {
      std::vector<std::string> row{io::fmt(c), io::fmt(ensemble.step_of(k))};
      for (double v : ensemble.sample(c, k)) row.push_back(io::fmt(v));
      csv.add(std::move(row));
    }
  }
  return csv.str();
}

}  // namespace twofield
