#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "twofield/random.hpp"

namespace twofield {

enum class ManifoldKind { box, simplex };

std::string to_string(ManifoldKind kind);

struct AxisBounds {
  double lo = 0.0;
  double hi = 1.0;
};

// Euclidean box, or the probability simplex with `dim` intrinsic dimensions
// embedded in dim + 1 coordinates (x_i >= 0, sum x_i = 1).
struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::box;
  std::size_t dim = 1;
  std::vector<AxisBounds> bounds;  // box only

  static ManifoldSpec box(std::vector<AxisBounds> bounds);
  static ManifoldSpec simplex(std::size_t dim);

  // Coordinates carried by the integrator.
  std::size_t ambient_dim() const { return kind == ManifoldKind::simplex ? dim + 1 : dim; }

  // Grids live on a chart: the box itself, or the first `dim` simplex
  // coordinates inside [0, 1]^dim.
  std::vector<AxisBounds> chart_bounds() const;

  // Throws ConfigError on violated invariants.
  void validate() const;

  bool contains(std::span<const double> x, double slack = 1e-9) const;
  void sample_uniform(Rng& rng, std::span<double> out) const;
};

}  // namespace twofield
