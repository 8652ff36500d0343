#pragma once

// Self-referentially coupled Langevin dynamics dX = (b(X) - kappa g(pi X)) dt
// + sqrt(2D) dW, the k-nearest-neighbour mutual information between the
// future state and the current projection, Linfoot fidelity, causal efficacy,
// and the coupling threshold kappa_c.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twofield/drift.hpp"
#include "twofield/error.hpp"
#include "twofield/manifold.hpp"
#include "twofield/simulate.hpp"
#include "twofield/stats.hpp"

namespace twofield {

enum class FeedbackKind { linear, saturating };

std::string to_string(FeedbackKind kind);

// g(y) = G y or tanh(G y) componentwise. G maps model space (m) to the
// state tangent space (ambient dimension).
struct Feedback {
  FeedbackKind kind = FeedbackKind::linear;
  Eigen::MatrixXd gain;

  void apply(std::span<const double> y, std::span<double> out) const;
};

// The noise amplitude lives in SimConfig.
struct SelfRefSystem {
  ManifoldSpec manifold;
  DriftSpec substrate;
  Eigen::MatrixXd projection;  // m x ambient, orthonormal rows
  Feedback feedback;
  double kappa = 0.0;
  // Prediction lag in retained-sample strides; estimated when absent.
  std::optional<std::size_t> tau;

  std::size_t model_dim() const { return static_cast<std::size_t>(projection.rows()); }
  void project(std::span<const double> x, std::span<double> y) const;
  // b(x) - kappa g(pi x)
  void augmented_drift(std::span<const double> x, std::span<double> out) const;
  // kappa g(pi x)
  void feedback_term(std::span<const double> x, std::span<double> out) const;
  void validate() const;
};

// Checks integrate_selfref() performs before stepping.
void check_selfref_integration(const SelfRefSystem& system, const SimConfig& config);

Ensemble integrate_selfref(const SelfRefSystem& system, const SimConfig& config);

// Applies pi to every retained sample.
Ensemble project_ensemble(const SelfRefSystem& system, const Ensemble& ensemble);

struct MiOptions {
  int k = 5;
  int resamples = 200;
  double level = 0.95;
  std::size_t max_pairs = 10000;
  double deterministic_nats = 2.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MiEstimate {
  double nats = 0.0;  // clamped below at 0
  double raw = 0.0;   // before clamping
  stats::Interval ci;
  std::size_t pairs = 0;
  std::size_t block = 1;
  bool near_deterministic = false;
};

// Kraskov-Stoegbauer-Grassberger estimator (algorithm 1, max-norm). xs holds
// n rows of dx values, ys n rows of dy values. The confidence interval is a
// moving-block bootstrap over the per-sample estimator terms, with block
// length at least their integrated autocorrelation time.
MiEstimate mutual_information(std::span<const double> xs, std::size_t dx, std::span<const double> ys,
                              std::size_t dy, const MiOptions& options = {});

double linfoot_fidelity(double nats);

enum class EfficacyDenominator { augmented, substrate };

// mean |kappa g(pi x)| / mean |b(x) - kappa g(pi x)| over retained samples
// (or mean |b(x)| for the substrate variant).
double causal_efficacy(const Ensemble& ensemble, const SelfRefSystem& system,
                       EfficacyDenominator denominator = EfficacyDenominator::augmented);

// e-fold autocorrelation lag of the projected process, in strides, averaged
// over model coordinates and chains.
std::size_t estimate_tau(const SelfRefSystem& system, const Ensemble& ensemble);

// Pairs (X_{t+tau}, pi X_t) from every chain, evenly subsampled to at most
// max_pairs. Returns {xs, ys}.
std::pair<std::vector<double>, std::vector<double>> lagged_pairs(const SelfRefSystem& system,
                                                                 const Ensemble& ensemble, std::size_t tau,
                                                                 std::size_t max_pairs);

struct CouplingReport {
  double kappa = 0.0;
  std::size_t tau = 0;
  MiEstimate mi;
  double fidelity = 0.0;
  double efficacy = 0.0;
  bool pass_f = false;
  bool pass_c = false;
  bool passes() const { return pass_f && pass_c; }
};

struct ThresholdOptions {
  double f_min = 0.5;
  double c_min = 0.1;
  double kappa_max = 4.0;
  double tol = 1e-3;
  std::size_t scan_points = 12;  // geometric grid in (0, kappa_max], plus kappa = 0
  MiOptions mi;
  EfficacyDenominator denominator = EfficacyDenominator::augmented;

  void validate() const;
};

CouplingReport evaluate_coupling(const SelfRefSystem& system, const SimConfig& config, std::size_t tau,
                                 const ThresholdOptions& options);

struct KappaThreshold {
  double kappa_c = std::numeric_limits<double>::infinity();
  stats::Interval bracket{0.0, 0.0};
  std::size_t tau = 0;
  std::vector<CouplingReport> trace;  // scan points first, then bisection steps
  bool finite() const { return kappa_c < std::numeric_limits<double>::infinity(); }
};

class AmbiguousThresholdError : public InfeasibleError {
 public:
  AmbiguousThresholdError(const std::string& what, std::vector<CouplingReport> trace)
      : InfeasibleError(what), trace_(std::move(trace)) {}
  const std::vector<CouplingReport>& trace() const { return trace_; }

 private:
  std::vector<CouplingReport> trace_;
};

// Geometric scan followed by bisection on the first failing-to-passing
// transition. The family is `system` with kappa varied; every kappa reuses
// the master seed, so the scan compares common random numbers. Tau is taken
// from the system or estimated once at kappa = 0 and held fixed.
KappaThreshold kappa_threshold(const SelfRefSystem& system, const SimConfig& config,
                               const ThresholdOptions& options = {});

// Same search over an arbitrary per-kappa evaluator.
KappaThreshold kappa_threshold_with(const std::function<CouplingReport(double)>& evaluate, std::size_t tau,
                                    const ThresholdOptions& options);

std::string coupling_trace_csv(const std::vector<CouplingReport>& trace);

}  // namespace twofield
