#pragma once

// Joint size scaling of the breakdown rate alpha(N) and the coupling
// threshold kappa_c(N) over families of synthetic systems, the log-log-log
// exponent fits and the four falsification verdicts.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "twofield/breakdown.hpp"
#include "twofield/parallel.hpp"
#include "twofield/selfref.hpp"
#include "twofield/simulate.hpp"
#include "twofield/stats.hpp"

namespace twofield {

// One per-N measurement. value = +inf marks an absent threshold.
struct ScaleEstimate {
  double value = 0.0;
  stats::Interval ci;
  std::string note;
};

using ScaleEstimator = std::function<ScaleEstimate(std::size_t n, std::uint64_t seed)>;

struct SystemFamily {
  std::string id;
  std::vector<std::size_t> ns;
  ScaleEstimator alpha;  // alpha(N)
  ScaleEstimator kappa;  // kappa_c(N)
  std::vector<std::string> notes;

  // N list strictly increasing, at least 5 values, spanning two decades.
  void validate() const;
};

// Default self-referential generator: an m-dimensional OU substrate with
// m = ceil(log2 N) clipped to the largest manifold dimension, identity
// projection and linear feedback whose gain is gain * (ln N)^gain_power.
struct SelfRefFamilyOptions {
  double gain = 1.0;
  double gain_power = -1.0;
  double half_width = 4.0;
};

constexpr std::size_t kMaxModelDim = 4;

SelfRefSystem default_selfref_system(std::size_t n, const SelfRefFamilyOptions& options = {});

struct JointScalingConfig {
  double delta = 0.5;
  BreakdownOptions breakdown;
  ThresholdOptions threshold;
  SimConfig sim = default_sim();
  SelfRefFamilyOptions selfref;
  std::uint64_t seed = 1;
  Workers workers = Workers::single();

  static SimConfig default_sim();
};

// alpha from breakdown_rate on make_ontology(N, delta), kappa_c from
// kappa_threshold on default_selfref_system(N).
SystemFamily synthetic_family(std::string id, std::vector<std::size_t> ns, const JointScalingConfig& config);

using ScaleLaw = std::function<double(double n)>;

// c / (ln N)^gamma
ScaleLaw power_law(double c, double gamma);

// Noise-free planted laws: estimates are exact with zero-width intervals.
// A positive log_noise multiplies each value by exp(log_noise * z), z
// standard normal drawn from the per-N seed, and reports the matching 95%
// interval.
SystemFamily planted_family(std::string id, std::vector<std::size_t> ns, ScaleLaw alpha, ScaleLaw kappa,
                            double log_noise = 0.0);

struct ExponentFit {
  double gamma = 0.0;  // minus the slope of ln y on ln ln N
  double gamma_se = 0.0;
  double intercept = 0.0;
  double c = 0.0;  // mean of y (ln N)^gamma
  double r_squared = 0.0;
  std::size_t n_points = 0;
  bool weighted = false;
};

// Least squares of ln y on ln ln N, weighted by the inverse variance of ln y
// read off the 95% intervals when every interval has positive width.
// Needs at least three points.
ExponentFit fit_exponent(const std::vector<double>& ns, const std::vector<double>& ys,
                         const std::vector<stats::Interval>& cis = {});

struct ScalingPoint {
  std::size_t n = 0;
  ScaleEstimate alpha, kappa;
  bool alpha_censored = false;
  bool kappa_censored = false;
};

struct FamilyScaling {
  std::string id;
  std::vector<ScalingPoint> points;
  ExponentFit alpha_fit, kappa_fit;              // full N range
  ExponentFit alpha_upper, kappa_upper;          // upper half of the N list
  bool range_disagreement = false;               // full and upper-half exponents differ by > 2 joint SE
  std::vector<std::string> notes;
};

enum class Verdict { pass, fire, not_applicable };

std::string to_string(Verdict v);

struct Verdicts {
  Verdict a = Verdict::not_applicable;  // log-log linearity of both products
  Verdict b = Verdict::not_applicable;  // gamma1 within 1 +- 0.15
  Verdict c = Verdict::not_applicable;  // gamma2 consistent across families
  Verdict d = Verdict::not_applicable;  // gamma2 positive
};

struct VerdictThresholds {
  double min_r_squared = 0.9;
  double gamma1_target = 1.0;
  double gamma1_tol = 0.15;
  double se_multiple = 2.0;
  double slack = 1e-9;  // absolute allowance for rounding in noise-free fits
};

// Pure flag logic. (a), (b) and (d) fire when any family violates them; (c)
// needs two or more families and compares every pair of gamma2 estimates.
// (d) fires unless gamma2 exceeds se_multiple standard errors.
Verdicts evaluate_verdicts(const std::vector<FamilyScaling>& families, const VerdictThresholds& thresholds = {});

struct JointScalingReport {
  std::vector<FamilyScaling> families;
  Verdicts verdicts;
};

constexpr double kMaxCensoredFraction = 0.4;

// Per-N estimates run sequentially; each estimator gets the configured
// worker budget through its own closure. Infinite or non-positive estimates
// are censored; more than 40% censored in either series is infeasible.
JointScalingReport run_joint_scaling(const std::vector<SystemFamily>& families, std::uint64_t seed,
                                     const VerdictThresholds& thresholds = {});

std::string scaling_points_csv(const JointScalingReport& report);
std::string scaling_summary_kv(const JointScalingReport& report);

}  // namespace twofield
