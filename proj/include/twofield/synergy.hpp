#pragma once

// Single-field no-go signatures: stationary yield at a target region, the
// superlinearity factor S of two disjoint-support wells, and yield curves
// under a driving sweep with a unimodality verdict.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twofield/drift.hpp"
#include "twofield/manifold.hpp"
#include "twofield/simulate.hpp"
#include "twofield/stats.hpp"

namespace twofield {

enum class RegionKind { ball, box };

// Target region on the integrator's ambient coordinates.
struct TargetRegion {
  RegionKind kind = RegionKind::ball;
  std::vector<double> center;  // ball
  double radius = 0.0;         // ball
  std::vector<AxisBounds> bounds;  // box

  static TargetRegion ball(std::vector<double> center, double radius);
  static TargetRegion box(std::vector<AxisBounds> bounds);

  bool contains(std::span<const double> x) const;
  bool intersects(const PerturbationWell& well) const;
  // Throws GeometryError unless the region lies inside the manifold.
  void validate(const ManifoldSpec& manifold) const;
};

enum class SynergyMetric { yield, depth };  // depth = -ln(yield)

std::string to_string(SynergyMetric metric);

struct YieldEstimate {
  double mass = 0.0;
  stats::Interval ci;
  std::vector<double> per_chain;
};

struct BootstrapOptions {
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 1;
};

// Fraction of retained samples inside the target, with a chain-level
// bootstrap interval.
YieldEstimate yield_from_ensemble(const Ensemble& ensemble, const TargetRegion& target,
                                  const BootstrapOptions& options = {});

YieldEstimate yield_at_target(const ManifoldSpec& manifold, const DriftSpec& drift, const TargetRegion& target,
                              const SimConfig& config, const BootstrapOptions& options = {});

struct SynergyOptions {
  SynergyMetric metric = SynergyMetric::yield;
  BootstrapOptions bootstrap;
};

struct SynergyReport {
  YieldEstimate base, a, b, ab;
  double delta_a = 0.0, delta_b = 0.0, delta_ab = 0.0;
  stats::Interval sum_ci;  // bootstrap interval of delta_a + delta_b
  std::optional<double> s;  // absent when delta_a + delta_b is within its own interval width
  stats::Interval s_ci;
  SynergyMetric metric = SynergyMetric::yield;
  bool determinate() const { return s.has_value(); }
};

// Runs base, +A, +B and +A+B with identical per-chain seeds. Deltas are
// paired per chain and the bootstrap resamples chains jointly across the four
// conditions. Wells must have disjoint supports and the target may meet at
// most one of them.
SynergyReport synergy_experiment(const ManifoldSpec& manifold, const DriftSpec& base, const PerturbationWell& well_a,
                                 const PerturbationWell& well_b, const TargetRegion& target, const SimConfig& config,
                                 const SynergyOptions& options = {});

// Same report from four ensembles already simulated with paired seeds.
SynergyReport synergy_from_ensembles(const Ensemble& base, const Ensemble& a, const Ensemble& b, const Ensemble& ab,
                                     const TargetRegion& target, const SynergyOptions& options = {});

struct YieldCurve {
  std::vector<double> drive;
  std::vector<YieldEstimate> yields;
  std::vector<double> smoothed;  // moving average, window 3 (2 at the ends)
  std::vector<std::size_t> peaks;
  std::size_t modes() const { return peaks.size(); }
  bool unimodal() const { return peaks.size() <= 1; }
};

// Peaks of the smoothed curve: strict local maxima, ends included, whose
// prominence exceeds the summed interval half-widths at the peak and at the
// deeper of the two flanking minima.
std::vector<std::size_t> count_modes(std::span<const double> smoothed, std::span<const double> half_widths);

std::vector<double> moving_average3(std::span<const double> v);

using DriftFamily = std::function<DriftSpec(double)>;

// Needs at least 7 sweep values. Each sweep point reuses the master seed.
YieldCurve yield_curve(const ManifoldSpec& manifold, const DriftFamily& family, const TargetRegion& target,
                       const std::vector<double>& drive, const SimConfig& config, const BootstrapOptions& options = {});

// Mode analysis of externally computed yields (used for dense oracles too).
YieldCurve yield_curve_from(std::vector<double> drive, std::vector<YieldEstimate> yields);

std::string synergy_csv(const SynergyReport& report);
std::string yield_curve_csv(const YieldCurve& curve);

}  // namespace twofield
