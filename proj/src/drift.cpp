#include "twofield/drift.hpp"

#include <cmath>
#include <sstream>

#include "twofield/error.hpp"
#include "twofield/random.hpp"

namespace twofield {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double ipow(double x, unsigned p) {
  double r = 1.0;
  while (p) {
    if (p & 1U) r *= x;
    x *= x;
    p >>= 1U;
  }
  return r;
}

double squared_distance(std::span<const double> x, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t a = 0; a < c.size(); ++a) s += (x[a] - c[a]) * (x[a] - c[a]);
  return s;
}

}  // namespace

double potential_value(const Potential& v, std::span<const double> x) {
  return std::visit(
      overloaded{
          [&](const PolynomialPotential& p) {
            double s = 0.0;
            for (const auto& t : p.terms) {
              double m = t.coeff;
              for (std::size_t a = 0; a < t.powers.size(); ++a) m *= ipow(x[a], t.powers[a]);
              s += m;
            }
            return s;
          },
          [&](const GaussianMixturePotential& g) {
            double s = 0.0;
            for (double xa : x) s += 0.5 * g.confinement * xa * xa;
            for (const auto& w : g.wells)
              s -= w.depth * std::exp(-squared_distance(x, w.center) / (2 * w.width * w.width));
            return s;
          }},
      v);
}

void add_potential_gradient(const Potential& v, std::span<const double> x, std::span<double> g) {
  std::visit(overloaded{[&](const PolynomialPotential& p) {
                          for (const auto& t : p.terms) {
                            for (std::size_t a = 0; a < t.powers.size(); ++a) {
                              if (t.powers[a] == 0) continue;
                              double m = t.coeff * t.powers[a] * ipow(x[a], t.powers[a] - 1);
                              for (std::size_t b = 0; b < t.powers.size(); ++b)
                                if (b != a) m *= ipow(x[b], t.powers[b]);
                              g[a] += m;
                            }
                          }
                        },
                        [&](const GaussianMixturePotential& mix) {
                          for (std::size_t a = 0; a < x.size(); ++a) g[a] += mix.confinement * x[a];
                          for (const auto& w : mix.wells) {
                            const double s2 = w.width * w.width;
                            const double e = w.depth * std::exp(-squared_distance(x, w.center) / (2 * s2));
                            for (std::size_t a = 0; a < w.center.size(); ++a)
                              g[a] += e * (x[a] - w.center[a]) / s2;
                          }
                        }},
             v);
}

std::size_t potential_dim(const Potential& v) {
  return std::visit(overloaded{[](const PolynomialPotential& p) -> std::size_t {
                                 std::size_t d = 0;
                                 for (const auto& t : p.terms) d = std::max(d, t.powers.size());
                                 return d;
                               },
                               [](const GaussianMixturePotential& g) -> std::size_t {
                                 std::size_t d = 0;
                                 for (const auto& w : g.wells) d = std::max(d, w.center.size());
                                 return d;
                               }},
                    v);
}

double PerturbationWell::potential(std::span<const double> x) const {
  const double r2 = squared_distance(x, center);
  const double big_r = support_radius();
  if (r2 >= big_r * big_r) return 0.0;
  const double s2 = 2 * width * width;
  const double tail = std::exp(-big_r * big_r / s2);
  return -depth * (std::exp(-r2 / s2) - tail * (1.0 + (big_r * big_r - r2) / s2));
}

void PerturbationWell::add_drift(std::span<const double> x, std::span<double> out) const {
  const double r2 = squared_distance(x, center);
  const double big_r = support_radius();
  if (r2 >= big_r * big_r) return;
  const double s2 = 2 * width * width;
  // d bump / d r^2
  const double slope = (-std::exp(-r2 / s2) + std::exp(-big_r * big_r / s2)) / s2;
  for (std::size_t a = 0; a < center.size(); ++a) out[a] += depth * 2.0 * (x[a] - center[a]) * slope;
}

bool PerturbationWell::disjoint_from(const PerturbationWell& other) const {
  const double reach = support_radius() + other.support_radius();
  return squared_distance(center, other.center) > reach * reach;
}

void PerturbationWell::validate(std::size_t dim) const {
  if (center.size() != dim)
    throw ConfigError("perturbation well centre has " + std::to_string(center.size()) +
                      " coordinates, drift has " + std::to_string(dim));
  if (!(width > 0.0)) throw ConfigError("perturbation well width must be positive");
  if (!(depth > 0.0)) throw ConfigError("perturbation well depth must be positive");
}

std::size_t DriftSpec::dim() const {
  return std::visit(
      overloaded{[](const GradientDrift& g) { return potential_dim(g.potential); },
                 [](const LinearDrift& l) { return static_cast<std::size_t>(l.matrix.rows()); },
                 [](const RotationalDrift& r) { return std::max(potential_dim(r.potential), r.center.size()); },
                 [](const ReactionNetworkDrift& r) { return static_cast<std::size_t>(r.rates.rows()); }},
      base);
}

void DriftSpec::evaluate(std::span<const double> x, std::span<double> out) const {
  for (auto& v : out) v = 0.0;
  std::visit(overloaded{[&](const GradientDrift& g) {
                          add_potential_gradient(g.potential, x, out);
                          for (auto& v : out) v = -v;
                        },
                        [&](const LinearDrift& l) {
                          const auto n = l.matrix.rows();
                          for (Eigen::Index i = 0; i < n; ++i) {
                            double s = 0.0;
                            for (Eigen::Index j = 0; j < n; ++j) s += l.matrix(i, j) * x[static_cast<std::size_t>(j)];
                            out[static_cast<std::size_t>(i)] = s;
                          }
                        },
                        [&](const RotationalDrift& r) {
                          add_potential_gradient(r.potential, x, out);
                          for (auto& v : out) v = -v;
                          out[r.axis_i] -= r.omega * (x[r.axis_j] - r.center[r.axis_j]);
                          out[r.axis_j] += r.omega * (x[r.axis_i] - r.center[r.axis_i]);
                        },
                        [&](const ReactionNetworkDrift& rn) {
                          const auto n = rn.rates.rows();
                          for (Eigen::Index i = 0; i < n; ++i) {
                            double s = 0.0;
                            for (Eigen::Index j = 0; j < n; ++j) {
                              if (i == j) continue;
                              s += rn.rates(j, i) * x[static_cast<std::size_t>(j)] -
                                   rn.rates(i, j) * x[static_cast<std::size_t>(i)];
                            }
                            out[static_cast<std::size_t>(i)] = s;
                          }
                        }},
             base);
  for (std::size_t a = 0; a < tilt.size(); ++a) out[a] -= tilt[a];
  for (const auto& w : wells) w.add_drift(x, out);
}

bool DriftSpec::is_gradient() const {
  return std::holds_alternative<GradientDrift>(base);
}

std::optional<double> DriftSpec::potential(std::span<const double> x) const {
  if (!is_gradient()) return std::nullopt;
  double v = potential_value(std::get<GradientDrift>(base).potential, x);
  for (std::size_t a = 0; a < tilt.size(); ++a) v += tilt[a] * x[a];
  for (const auto& w : wells) v += w.potential(x);
  return v;
}

void DriftSpec::validate(const ManifoldSpec& manifold) const {
  const std::size_t d = manifold.ambient_dim();
  std::visit(overloaded{[&](const GradientDrift& g) {
                          if (potential_dim(g.potential) > d)
                            throw ConfigError("potential uses more coordinates than the manifold has");
                        },
                        [&](const LinearDrift& l) {
                          if (static_cast<std::size_t>(l.matrix.rows()) != d || l.matrix.cols() != l.matrix.rows())
                            throw ConfigError("linear drift matrix must be " + std::to_string(d) + "x" +
                                              std::to_string(d));
                        },
                        [&](const RotationalDrift& r) {
                          if (potential_dim(r.potential) > d || r.center.size() != d)
                            throw ConfigError("rotational drift centre must have " + std::to_string(d) +
                                              " coordinates");
                          if (r.axis_i >= d || r.axis_j >= d || r.axis_i == r.axis_j)
                            throw ConfigError("rotational drift needs two distinct plane axes below " +
                                              std::to_string(d));
                        },
                        [&](const ReactionNetworkDrift& rn) {
                          if (manifold.kind != ManifoldKind::simplex)
                            throw ConfigError("reaction-network drift requires a simplex manifold");
                          if (static_cast<std::size_t>(rn.rates.rows()) != d || rn.rates.cols() != rn.rates.rows())
                            throw ConfigError("reaction-network rate matrix must be " + std::to_string(d) + "x" +
                                              std::to_string(d));
                          if ((rn.rates.array() < 0.0).any())
                            throw ConfigError("reaction-network rates must be non-negative");
                        }},
             base);
  if (!tilt.empty() && tilt.size() != d)
    throw ConfigError("tilt must have " + std::to_string(d) + " components");
  for (std::size_t k = 0; k < wells.size(); ++k) wells[k].validate(d);
}

void check_confinement(const ManifoldSpec& manifold, const DriftFn& drift, std::uint64_t seed,
                       std::size_t points_per_face) {
  Rng rng(derive_seed(seed, "confinement", 0));
  const std::size_t d = manifold.ambient_dim();
  std::vector<double> x(d), b(d);
  auto fail = [&](const std::string& face) {
    std::ostringstream ss;
    ss << "drift points outward on " << face << " at (";
    for (std::size_t a = 0; a < d; ++a) ss << (a ? ", " : "") << x[a];
    ss << "); the dynamics is not confining";
    throw ConfigError(ss.str());
  };
  if (manifold.kind == ManifoldKind::box) {
    for (std::size_t axis = 0; axis < d; ++axis) {
      for (int side = 0; side < 2; ++side) {
        for (std::size_t k = 0; k < points_per_face; ++k) {
          manifold.sample_uniform(rng, x);
          x[axis] = side ? manifold.bounds[axis].hi : manifold.bounds[axis].lo;
          drift(x, b);
          // Inward means towards the box centre. A face-normal test would
          // reject every rotating flow near the corners of a square box.
          double outward = 0.0, norm = 0.0, r = 0.0;
          for (std::size_t a = 0; a < d; ++a) {
            const double dx = x[a] - 0.5 * (manifold.bounds[a].lo + manifold.bounds[a].hi);
            outward += b[a] * dx;
            r += dx * dx;
            norm += b[a] * b[a];
          }
          outward /= std::sqrt(r);
          if (outward > 1e-9 * (1.0 + std::sqrt(norm)))
            fail("face " + std::string(side ? "hi" : "lo") + " of axis " + std::to_string(axis));
        }
      }
    }
    return;
  }
  // Simplex facet x_i = 0: the drift must not push x_i negative.
  for (std::size_t facet = 0; facet < d; ++facet) {
    for (std::size_t k = 0; k < points_per_face; ++k) {
      manifold.sample_uniform(rng, x);
      const double removed = x[facet];
      x[facet] = 0.0;
      for (std::size_t a = 0; a < d; ++a)
        if (a != facet) x[a] /= (1.0 - removed);
      drift(x, b);
      double mean = 0.0;
      for (double v : b) mean += v;
      mean /= static_cast<double>(d);
      if (b[facet] - mean < -1e-9) fail("simplex facet x" + std::to_string(facet) + " = 0");
    }
  }
}

double max_drift_magnitude(const ManifoldSpec& manifold, const DriftFn& drift, std::uint64_t seed,
                           std::size_t points) {
  Rng rng(derive_seed(seed, "stability", 0));
  const std::size_t d = manifold.ambient_dim();
  std::vector<double> x(d), b(d);
  double worst = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    manifold.sample_uniform(rng, x);
    drift(x, b);
    double n = 0.0;
    for (double v : b) n += v * v;
    worst = std::max(worst, std::sqrt(n));
  }
  return worst;
}

}  // namespace twofield
