#pragma once

// Regular-grid reconstruction of the stationary density p*, the information
// quasi-potential Phi_I = -ln p*, the stationary current J*, the local
// entropy production Sigma = J*^T D^-1 J* / p*, their gradients, the
// collinearity map between grad Sigma and grad Phi_I, and the two-gradient
// drift decomposition b = -alpha grad Sigma - beta grad Phi_I + b_perp.
//
// Noise estimates come from a leave-one-group-out jackknife over groups of
// chains, so every field carries a standard error alongside its value.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twofield/drift.hpp"
#include "twofield/manifold.hpp"
#include "twofield/simulate.hpp"

namespace twofield {

struct GridGeometry {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> width;
  std::vector<std::size_t> cells;

  static std::size_t default_cells(std::size_t dim);
  static GridGeometry for_manifold(const ManifoldSpec& manifold,
                                   std::optional<std::size_t> cells_per_axis = std::nullopt);
  static GridGeometry make(std::vector<AxisBounds> bounds, std::vector<std::size_t> cells);

  std::size_t dim() const { return cells.size(); }
  std::size_t size() const;
  double cell_volume() const;
  std::size_t stride(std::size_t axis) const;
  std::size_t coordinate(std::size_t flat, std::size_t axis) const;
  double center(std::size_t flat, std::size_t axis) const;
  std::optional<std::size_t> locate(std::span<const double> point) const;
  std::optional<std::size_t> neighbor(std::size_t flat, std::size_t axis, int dir) const;
};

// Bits of the per-cell mask column.
enum MaskBit : std::uint8_t {
  kMaskDensity = 1,     // occupancy below the support threshold
  kMaskCurrent = 2,     // current / Sigma undefined (stencil touches a masked cell)
  kMaskGradPhi = 4,
  kMaskGradSigma = 8,
  kMaskExcluded = 16,   // gradients too small for the collinearity map
};

struct FieldOptions {
  std::size_t support_threshold = 10;  // samples per cell
  std::size_t replicate_groups = 10;   // chain groups for the jackknife
};

struct FieldGrid {
  GridGeometry grid;
  ManifoldSpec manifold;
  double support_threshold = 10;
  std::size_t total_samples = 0;

  std::vector<std::size_t> count;
  std::vector<double> density;  // p-hat (probability per unit chart volume)
  std::vector<std::uint8_t> supported;
  std::vector<double> phi;      // nan where unsupported
  std::vector<double> grad_phi;  // dim per cell, nan where invalid
  std::vector<double> grad_phi_se;

  // stationary_current
  double noise = 0.0;
  Eigen::MatrixXd diffusion;  // effective diffusion matrix on the chart
  std::vector<double> drift;  // chart drift at cell centres, dim per cell
  std::vector<double> current;
  std::vector<double> current_se;  // sqrt(tr Cov J) per cell
  std::vector<std::uint8_t> current_valid;

  // entropy_field
  std::vector<double> sigma;
  std::vector<double> grad_sigma;
  std::vector<double> grad_sigma_se;
  // sum_cells Sigma * p-hat * vol, the reported Sigma-bar.
  double sigma_total = 0.0;
  double sigma_noise_level = 0.0;  // expected sigma_total from estimator noise alone
  double sigma_noise_floor = 0.0;  // 3 * noise level
  // sum_cells Sigma * vol, the integral of |J|^2 / (D p) over the chart.
  // For diffusions this is the total entropy production rate.
  double sigma_integral = 0.0;
  double sigma_integral_noise_level = 0.0;

  // jackknife replicates (leave one chain group out)
  std::vector<std::vector<double>> replicate_density;
  std::vector<std::vector<double>> replicate_grad_phi;
  std::vector<std::vector<double>> replicate_current;
  std::vector<std::vector<double>> replicate_sigma;

  std::size_t dim() const { return grid.dim(); }
  std::size_t size() const { return grid.size(); }
  double mass(std::size_t cell) const { return density[cell] * grid.cell_volume(); }
  bool has_current() const { return !current.empty(); }
  bool has_sigma() const { return !sigma.empty(); }
  std::uint8_t mask(std::size_t cell) const;
};

FieldGrid estimate_density(const Ensemble& ensemble, const ManifoldSpec& manifold,
                           const GridGeometry& grid, const FieldOptions& options = {});

// Chart drift at a chart point: the ambient drift (tangent-projected on the
// simplex) restricted to the chart coordinates.
std::vector<double> chart_drift(const ManifoldSpec& manifold, const DriftFn& drift,
                                std::span<const double> chart_point);

void stationary_current(FieldGrid& field, const DriftFn& drift, double noise);
void stationary_current(FieldGrid& field, const DriftSpec& drift, double noise);

void entropy_field(FieldGrid& field);

struct StationarityDiagnostic {
  double mean_abs_divergence = 0.0;  // mass-weighted over interior cells
  double divergence_se = 0.0;        // mass-weighted jackknife SE of div J
  std::size_t cells = 0;
  bool stationary() const { return mean_abs_divergence < 3.0 * divergence_se; }
};

StationarityDiagnostic stationarity_diagnostic(const FieldGrid& field);

struct CollinearityOptions {
  double eps_grad_fraction = 0.05;  // of the mass-weighted median |grad|
  double eps_angle = 0.1;
  // Cells whose gradient magnitude is within z jackknife standard errors of
  // zero are excluded as well. Zero disables the test.
  double significance_z = 3.0;
};

struct CollinearityResult {
  std::vector<double> sin2theta;  // nan where not included
  std::vector<std::uint8_t> included;
  std::optional<double> fraction;  // nullopt when no cell is included
  double included_mass = 0.0;
  double eps_grad_phi = 0.0;
  double eps_grad_sigma = 0.0;
  double eps_angle = 0.1;
  std::size_t included_cells = 0;
  bool degenerate() const { return !fraction.has_value(); }
};

CollinearityResult collinearity_map(const FieldGrid& field, const CollinearityOptions& options = {});

struct DriftDecomposition {
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> residual;  // dim per cell, nan outside the fit set
  double residual_fraction = 0.0;
  double gram_condition = 0.0;
  std::size_t cells = 0;
};

// Weighted least squares of the drift onto {-grad Sigma, -grad Phi_I} with
// weights mu-hat. `drift_field` holds dim values per cell.
DriftDecomposition decompose_drift(const FieldGrid& field, std::span<const double> drift_field);
DriftDecomposition decompose_drift(const FieldGrid& field, const DriftSpec& drift);

// Quadratic fit Phi_I ~ c0 + c2 * |x - x0|^2 over supported cells; returns
// c2 (the coefficient of the squared distance).
double fit_phi_curvature(const FieldGrid& field, std::span<const double> origin);

std::string fieldgrid_csv(const FieldGrid& field, const CollinearityResult* collinearity = nullptr);

}  // namespace twofield
