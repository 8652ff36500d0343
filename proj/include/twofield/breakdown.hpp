#pragma once

// Context-shift detection over a finite primitive set under i.i.d.
// adversarial contamination: synthetic contexts, contaminated streams,
// windowed likelihood-ratio detectors with temporal consistency, summed
// error risk, the breakdown rate alpha-dagger and its scaling in log N.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "twofield/parallel.hpp"
#include "twofield/stats.hpp"

namespace twofield {

struct Ontology {
  std::size_t n = 0;
  std::vector<double> p1;
  std::vector<double> p2;
  double delta = 0.0;  // KL(p2 || p1), nats

  std::vector<double> llr() const;  // ln(p2 / p1) per primitive
  void validate() const;
};

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

inline constexpr double kDeltaMin = 0.05;
inline constexpr double kDeltaMax = 5.0;

// p1 uniform, p2 an exponential tilt of p1 along a seeded random direction
// with KL(p2 || p1) = delta_target within 1e-4. Every probability stays above
// 1e-12; targets beyond the KL reachable under that floor are a RangeError.
Ontology make_ontology(std::size_t n, double delta_target, std::uint64_t seed);

// Throws RangeError unless delta lies in [kDeltaMin, kDeltaMax].
void require_bounded_shift(double delta);

Ontology permute(const Ontology& ontology, const std::vector<std::size_t>& perm);

enum class Truth { null, shift };
enum class AdversaryStrategy { mimic_shift, mimic_null };

struct AdversaryModel {
  double rate = 0.0;
  AdversaryStrategy strategy = AdversaryStrategy::mimic_shift;
};

// Each position is drawn from the truth context and independently replaced
// by a draw from the mimicked context with probability rate.
std::vector<std::size_t> sample_stream(const Ontology& ontology, Truth truth, const AdversaryModel& adversary,
                                       std::size_t length, std::uint64_t seed);

struct Detector {
  std::size_t window = 1;
  double threshold = 0.0;
  std::size_t runs = 1;  // consecutive windows that must exceed the threshold
  void validate() const;
};

struct Detection {
  bool shift = false;
  std::size_t index = 0;  // position after the deciding window, or the stream length
};

// Tumbling windows of length w; shift at the first r consecutive windows
// whose summed LLR exceeds the threshold.
Detection detect_shift(const std::vector<std::size_t>& stream, const Ontology& ontology, const Detector& detector);

struct RiskEstimate {
  double false_positive = 0.0;
  double false_negative = 0.0;
  stats::Interval fp_ci;
  stats::Interval fn_ci;
  std::size_t trials = 0;
  double sum() const { return false_positive + false_negative; }
  // Sum of the two Wilson intervals.
  stats::Interval sum_ci() const { return {fp_ci.lo + fn_ci.lo, fp_ci.hi + fn_ci.hi}; }
};

// FP under (null truth, mimic-shift adversary), FN under (shift truth,
// mimic-null adversary), each over `trials` seeded streams.
RiskEstimate risk(const Ontology& ontology, double alpha, const Detector& detector, std::size_t trials,
                  std::size_t stream_length, std::uint64_t seed);

double detection_lower_bound(double n, double delta);
std::size_t default_stream_length(std::size_t n, double delta);

struct DetectorFamily {
  std::vector<double> window_factors{0.5, 1.0, 2.0, 4.0};  // multiples of log N / delta
  std::vector<double> threshold_factors{-0.5, -0.25, 0.0, 0.25, 0.5, 0.75};  // multiples of w * delta
  std::vector<std::size_t> runs{1, 2, 3};

  // Concrete detectors for an instance; windows are rounded up, clipped to
  // the stream and deduplicated; pairs with w * r beyond the stream are dropped.
  std::vector<Detector> expand(std::size_t n, double delta, std::size_t stream_length) const;
};

struct BreakdownOptions {
  DetectorFamily family;
  std::size_t trials = 400;
  double tol = 0.01;  // alpha resolution
  std::size_t stream_length = 0;  // 0: 20 * log N / delta
  int bootstrap = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  Workers workers = Workers::single();

  void validate() const;
};

struct BreakdownEstimate {
  std::size_t n = 0;
  double delta = 0.0;
  double alpha_dagger = 0.0;
  stats::Interval ci;
  Detector best;
  std::size_t stream_length = 0;
  std::size_t detectors = 0;
  // Alpha grid points where the best risk drops by more than its own
  // interval width as alpha grows.
  std::size_t monotonicity_violations = 0;
  std::vector<double> alpha_grid;
  std::vector<double> best_risk;  // min over the family at each grid alpha
};

// Largest alpha on a tol-spaced grid below the first alpha where every
// detector in the family reaches risk >= 1/2. Trial streams share their
// randomness across alpha, so the risk curves are coupled.
BreakdownEstimate breakdown_rate(const Ontology& ontology, const BreakdownOptions& options = {});

struct ScalingFitResult {
  double gamma = 0.0;
  double gamma_se = 0.0;
  double intercept = 0.0;
  double c = 0.0;
  double r_squared = 0.0;
  std::size_t n_points = 0;
  bool consistent = false;  // |gamma - 1| <= 0.15
};

// OLS of log y on log log N; gamma is minus the slope, c = mean y (log N)^gamma.
ScalingFitResult scaling_fit(const std::vector<double>& ns, const std::vector<double>& ys);

std::string breakdown_curve_csv(const std::vector<BreakdownEstimate>& curve);
std::string scaling_fit_kv(const ScalingFitResult& fit);

}  // namespace twofield
