#include "twofield/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "twofield/error.hpp"

namespace twofield::stats {

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

Interval percentile_interval(std::vector<double> v, double level) {
  const double tail = 0.5 * (1.0 - level);
  std::sort(v.begin(), v.end());
  return {quantile(v, tail), quantile(v, 1.0 - tail)};
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) return 0.0;
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double acc = 0.0;
  for (std::size_t i : order) {
    acc += weights[i];
    if (acc >= 0.5 * total) return values[i];
  }
  return values[order.back()];
}

namespace {

std::vector<double> autocovariance(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  const double m = mean(x);
  max_lag = std::min(max_lag, n - 1);
  std::vector<double> c(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += (x[i] - m) * (x[i + k] - m);
    c[k] = s / static_cast<double>(n);
  }
  return c;
}

}  // namespace

double integrated_autocorrelation_time(std::span<const double> series) {
  if (series.size() < 4) return 1.0;
  const std::size_t max_lag = std::min<std::size_t>(series.size() / 2, 2000);
  const auto c = autocovariance(series, max_lag);
  if (c[0] <= 0.0) return 1.0;
  double tau = 1.0;
  for (std::size_t k = 1; k < c.size(); ++k) {
    tau += 2.0 * c[k] / c[0];
    if (static_cast<double>(k) >= 5.0 * tau) break;
  }
  return std::max(1.0, tau);
}

std::size_t autocorrelation_efold_lag(std::span<const double> series, std::size_t max_lag) {
  if (series.size() < 4) return 1;
  const auto c = autocovariance(series, max_lag);
  if (c[0] <= 0.0) return 1;
  for (std::size_t k = 1; k < c.size(); ++k) {
    if (c[k] / c[0] < std::exp(-1.0)) return k;
  }
  return c.size() - 1;
}

Interval block_bootstrap_mean(std::span<const double> values, std::size_t block,
                              int resamples, Rng& rng, double level) {
  const std::size_t n = values.size();
  if (n == 0) return {};
  block = std::clamp<std::size_t>(block, 1, n);
  const std::size_t nblocks = (n + block - 1) / block;
  std::uniform_int_distribution<std::size_t> start(0, n - 1);
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < nblocks && count < n; ++k) {
      const std::size_t s0 = start(rng);
      for (std::size_t j = 0; j < block && count < n; ++j, ++count) s += values[(s0 + j) % n];
    }
    means.push_back(s / static_cast<double>(count));
  }
  return percentile_interval(std::move(means), level);
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> weights) {
  const std::size_t n = x.size();
  if (n != y.size() || (!weights.empty() && weights.size() != n))
    throw ConfigError("fit_line: size mismatch");
  if (n < 2) throw InsufficientDataError("fit_line needs at least two points");
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w(i);
    sx += w(i) * x[i];
    sy += w(i) * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w(i) * (x[i] - mx) * (x[i] - mx);
    sxy += w(i) * (x[i] - mx) * (y[i] - my);
    syy += w(i) * (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw InsufficientDataError("fit_line: x values are all equal");
  LineFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    sse += w(i) * r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (n > 2) {
    const double s2 = sse / static_cast<double>(n - 2);
    fit.slope_se = std::sqrt(s2 / sxx);
    fit.intercept_se = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
  }
  return fit;
}

std::vector<double> fit_linear_quadratic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InsufficientDataError("fit_linear_quadratic needs at least two points");
  Eigen::MatrixXd a(x.size(), 2);
  Eigen::VectorXd b(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    a(static_cast<Eigen::Index>(i), 0) = x[i];
    a(static_cast<Eigen::Index>(i), 1) = x[i] * x[i];
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
  return {c(0), c(1)};
}

}  // namespace twofield::stats
