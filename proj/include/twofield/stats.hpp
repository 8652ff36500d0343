#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "twofield/random.hpp"

namespace twofield::stats {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // unbiased
double standard_error(std::span<const double> v);

// Linear interpolated quantile, q in [0, 1]. Copies and sorts.
double quantile(std::vector<double> v, double q);
Interval percentile_interval(std::vector<double> v, double level = 0.95);

// Mass-weighted median of values.
double weighted_median(std::span<const double> values, std::span<const double> weights);

// Integrated autocorrelation time (in samples) with Sokal's automatic
// window, c = 5. Returns 1 for white noise.
double integrated_autocorrelation_time(std::span<const double> series);

// Lag at which the normalised autocorrelation first drops below 1/e.
std::size_t autocorrelation_efold_lag(std::span<const double> series, std::size_t max_lag);

// Moving-block bootstrap of the mean. Blocks wrap around the series end.
Interval block_bootstrap_mean(std::span<const double> values, std::size_t block,
                              int resamples, Rng& rng, double level = 0.95);

// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

// Weighted least squares y = intercept + slope * x. Empty weights means
// ordinary least squares. Standard errors use the residual variance scaled
// to the weights, so uniform weights reproduce the OLS errors.
LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> weights = {});

// Least squares for y = c1 x + c2 x^2 (no intercept). Returns {c1, c2}.
std::vector<double> fit_linear_quadratic(std::span<const double> x, std::span<const double> y);

}  // namespace twofield::stats
