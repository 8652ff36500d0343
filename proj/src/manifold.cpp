#include "twofield/manifold.hpp"

#include <cmath>
#include <numeric>

#include "twofield/error.hpp"

namespace twofield {

std::string to_string(ManifoldKind kind) {
  return kind == ManifoldKind::box ? "box" : "simplex";
}

ManifoldSpec ManifoldSpec::box(std::vector<AxisBounds> bounds) {
  ManifoldSpec m;
  m.kind = ManifoldKind::box;
  m.dim = bounds.size();
  m.bounds = std::move(bounds);
  m.validate();
  return m;
}

ManifoldSpec ManifoldSpec::simplex(std::size_t dim) {
  ManifoldSpec m;
  m.kind = ManifoldKind::simplex;
  m.dim = dim;
  m.validate();
  return m;
}

std::vector<AxisBounds> ManifoldSpec::chart_bounds() const {
  if (kind == ManifoldKind::box) return bounds;
  return std::vector<AxisBounds>(dim, AxisBounds{0.0, 1.0});
}

void ManifoldSpec::validate() const {
  if (dim < 1 || dim > 4)
    throw ConfigError("manifold dimension must be in [1, 4], got " + std::to_string(dim));
  if (kind == ManifoldKind::box) {
    if (bounds.size() != dim)
      throw ConfigError("box manifold needs one [lo, hi] pair per axis");
    for (std::size_t a = 0; a < dim; ++a)
      if (!(bounds[a].lo < bounds[a].hi) || !std::isfinite(bounds[a].lo) ||
          !std::isfinite(bounds[a].hi))
        throw ConfigError("box axis " + std::to_string(a) + " needs finite lo < hi");
  } else if (!bounds.empty()) {
    throw ConfigError("simplex manifold does not take euclidean bounds");
  }
}

bool ManifoldSpec::contains(std::span<const double> x, double slack) const {
  if (x.size() != ambient_dim()) return false;
  if (kind == ManifoldKind::box) {
    for (std::size_t a = 0; a < dim; ++a)
      if (x[a] < bounds[a].lo - slack || x[a] > bounds[a].hi + slack) return false;
    return true;
  }
  double s = 0.0;
  for (double v : x) {
    if (v < -slack) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= slack * static_cast<double>(x.size()) + 1e-12;
}

void ManifoldSpec::sample_uniform(Rng& rng, std::span<double> out) const {
  if (kind == ManifoldKind::box) {
    for (std::size_t a = 0; a < dim; ++a)
      out[a] = std::uniform_real_distribution<double>(bounds[a].lo, bounds[a].hi)(rng);
    return;
  }
  // Dirichlet(1, ..., 1) via normalised exponentials.
  std::exponential_distribution<double> e(1.0);
  double s = 0.0;
  for (auto& v : out) s += (v = e(rng));
  for (auto& v : out) v /= s;
}

}  // namespace twofield
