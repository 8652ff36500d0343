#pragma once

// Closed-form drift families for overdamped Langevin dynamics.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "twofield/manifold.hpp"

namespace twofield {

struct PolynomialTerm {
  double coeff = 0.0;
  std::vector<unsigned> powers;  // one exponent per coordinate
};

// V(x) = sum_k coeff_k prod_a x_a^{p_ka}
struct PolynomialPotential {
  std::vector<PolynomialTerm> terms;
};

struct GaussianWell {
  std::vector<double> center;
  double width = 1.0;
  double depth = 1.0;
};

// V(x) = confinement |x|^2 / 2 - sum_k depth_k exp(-|x - c_k|^2 / (2 w_k^2))
struct GaussianMixturePotential {
  std::vector<GaussianWell> wells;
  double confinement = 0.0;
};

using Potential = std::variant<PolynomialPotential, GaussianMixturePotential>;

double potential_value(const Potential& v, std::span<const double> x);
// Adds grad V(x) into g.
void add_potential_gradient(const Potential& v, std::span<const double> x, std::span<double> g);
std::size_t potential_dim(const Potential& v);

// b = -grad V
struct GradientDrift {
  Potential potential;
};

// b = A x
struct LinearDrift {
  Eigen::MatrixXd matrix;
};

// b = -grad V + omega * S (x - center), S the quarter turn in the
// (axis_i, axis_j) plane. The rotation part is divergence free.
struct RotationalDrift {
  Potential potential;
  double omega = 0.0;
  std::vector<double> center;
  std::size_t axis_i = 0;
  std::size_t axis_j = 1;
};

// Mean-field drift of a reaction network on the simplex:
// b_i = sum_j (k_ji x_j - k_ij x_i).
struct ReactionNetworkDrift {
  Eigen::MatrixXd rates;
};

// Localised well delta V(x) = -depth * bump(|x - center|) with a Gaussian
// bump of the given width, truncated at 3 * width. The truncation is C^1, so
// the well's drift contribution stays Lipschitz.
struct PerturbationWell {
  std::vector<double> center;
  double width = 0.1;
  double depth = 0.1;

  double support_radius() const { return 3.0 * width; }
  double potential(std::span<const double> x) const;
  // Adds -grad(delta V)(x) into out.
  void add_drift(std::span<const double> x, std::span<double> out) const;
  bool disjoint_from(const PerturbationWell& other) const;
  void validate(std::size_t dim) const;
};

using DriftBase = std::variant<GradientDrift, LinearDrift, RotationalDrift, ReactionNetworkDrift>;

// Base family plus optional linear tilt (V += tilt . x) and localised wells.
struct DriftSpec {
  DriftBase base;
  std::vector<double> tilt;
  std::vector<PerturbationWell> wells;

  std::size_t dim() const;
  void evaluate(std::span<const double> x, std::span<double> out) const;
  bool is_gradient() const;
  // Total potential for gradient families; nullopt otherwise.
  std::optional<double> potential(std::span<const double> x) const;
  void validate(const ManifoldSpec& manifold) const;
};

using DriftFn = std::function<void(std::span<const double>, std::span<double>)>;

// Samples points on every box face (or simplex facet) and rejects drifts
// that point outward there. Throws ConfigError naming the face.
void check_confinement(const ManifoldSpec& manifold, const DriftFn& drift, std::uint64_t seed,
                       std::size_t points_per_face = 256);

// Largest |b| over uniformly sampled manifold points.
double max_drift_magnitude(const ManifoldSpec& manifold, const DriftFn& drift, std::uint64_t seed,
                           std::size_t points = 4096);

}  // namespace twofield
