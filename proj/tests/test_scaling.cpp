#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "twofield/error.hpp"
#include "twofield/scaling.hpp"

using namespace twofield;

namespace {

const std::vector<std::size_t> kSizes{16, 64, 256, 1024, 4096};

ScaleLaw constant(double v) {
  return [v](double) { return v; };
}

FamilyScaling fitted(double g1, double g2, double r2 = 1.0, double se1 = 0.0, double se2 = 0.0) {
  FamilyScaling f;
  f.alpha_fit.gamma = g1;
  f.alpha_fit.gamma_se = se1;
  f.alpha_fit.r_squared = r2;
  f.kappa_fit.gamma = g2;
  f.kappa_fit.gamma_se = se2;
  f.kappa_fit.r_squared = r2;
  return f;
}

// Weighted least squares through the normal equations, as an independent
// check on fit_exponent.
std::pair<double, double> wls(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& w) {
  Eigen::MatrixXd a(x.size(), 2);
  Eigen::VectorXd b(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = std::sqrt(w[i]);
    a(i, 0) = s;
    a(i, 1) = s * x[i];
    b[i] = s * y[i];
  }
  const Eigen::Vector2d beta = a.colPivHouseholderQr().solve(b);
  return {beta[0], beta[1]};
}

}  // namespace

TEST_CASE("family sizes must be increasing and span two decades") {
  auto f = planted_family("p", kSizes, power_law(1, 1), power_law(2, 0.5));
  CHECK_NOTHROW(f.validate());
  f.ns = {16, 64, 256, 1024};
  CHECK_THROWS_AS(f.validate(), RangeError);
  f.ns = {16, 64, 64, 1024, 4096};
  CHECK_THROWS_AS(f.validate(), RangeError);
  f.ns = {100, 200, 400, 800, 1600};
  CHECK_THROWS_AS(f.validate(), RangeError);
  f.ns = {1, 10, 100, 1000, 10000};
  CHECK_THROWS_AS(f.validate(), RangeError);
  f.ns = kSizes;
  f.kappa = nullptr;
  CHECK_THROWS_AS(f.validate(), ContractError);
}

TEST_CASE("noise-free planted laws are recovered exactly") {
  const auto r = run_joint_scaling({planted_family("p", kSizes, power_law(1, 1.0), power_law(2, 0.5))}, 1);
  const auto& f = r.families[0];
  CHECK(f.alpha_fit.gamma == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.kappa_fit.gamma == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(f.alpha_fit.c == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.kappa_fit.c == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(f.alpha_fit.r_squared == doctest::Approx(1.0));
  CHECK_FALSE(f.alpha_fit.weighted);
  CHECK_FALSE(f.range_disagreement);
  CHECK(r.verdicts.a == Verdict::pass);
  CHECK(r.verdicts.b == Verdict::pass);
  CHECK(r.verdicts.c == Verdict::not_applicable);
  CHECK(r.verdicts.d == Verdict::pass);
}

TEST_CASE("planted exponents across a grid") {
  for (double g1 : {0.5, 1.0, 1.3})
    for (double g2 : {0.25, 0.5, 1.0}) {
      const auto r = run_joint_scaling({planted_family("p", kSizes, power_law(0.7, g1), power_law(3, g2))}, 4);
      CHECK(std::abs(r.families[0].alpha_fit.gamma - g1) < 1e-9);
      CHECK(std::abs(r.families[0].kappa_fit.gamma - g2) < 1e-9);
    }
}

TEST_CASE("noisy planted laws use weighted fits and stay near the truth") {
  const std::vector<std::size_t> ns{16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = run_joint_scaling({planted_family("p", ns, power_law(1, 1.0), power_law(2, 0.5), 0.02)}, seed);
    const auto& f = r.families[0];
    CHECK(f.kappa_fit.weighted);
    CHECK(f.kappa_fit.gamma_se > 0.0);
    inside += std::abs(f.kappa_fit.gamma - 0.5) < 2 * f.kappa_fit.gamma_se;
    CHECK(std::abs(f.alpha_fit.gamma - 1.0) < 0.15);
  }
  CHECK(inside >= 16);
}

TEST_CASE("weighted fit agrees with the normal equations") {
  const std::vector<double> ns{10, 40, 300, 2000, 9000};
  const std::vector<double> ys{0.5, 0.33, 0.2, 0.16, 0.11};
  const std::vector<stats::Interval> cis{{0.45, 0.55}, {0.3, 0.36}, {0.15, 0.25}, {0.155, 0.165}, {0.1, 0.12}};
  std::vector<double> x, y, w;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    x.push_back(std::log(std::log(ns[i])));
    y.push_back(std::log(ys[i]));
    const double se = (std::log(cis[i].hi) - std::log(cis[i].lo)) / (2 * 1.959963984540054);
    w.push_back(1 / (se * se));
  }
  const auto [b0, b1] = wls(x, y, w);
  const auto f = fit_exponent(ns, ys, cis);
  CHECK(f.weighted);
  CHECK(f.gamma == doctest::Approx(-b1).epsilon(1e-10));
  CHECK(f.intercept == doctest::Approx(b0).epsilon(1e-10));

  auto degenerate = cis;
  degenerate[2] = {0.2, 0.2};
  CHECK_FALSE(fit_exponent(ns, ys, degenerate).weighted);
  CHECK_THROWS_AS(fit_exponent({10, 100}, {0.1, 0.2}), InsufficientDataError);
  CHECK_THROWS_AS(fit_exponent({10, 100, 1000}, {0.1, 0.0, 0.2}), RangeError);
}

TEST_CASE("clause a fires on oscillating scaling") {
  auto wobble = [](double n) { return (1 + 0.6 * std::sin(2.0 * std::log(n))) / std::log(n); };
  const auto r = run_joint_scaling({planted_family("w", kSizes, wobble, power_law(2, 0.5))}, 1);
  CAPTURE(r.families[0].alpha_fit.r_squared);
  CHECK(r.verdicts.a == Verdict::fire);
  CHECK(r.verdicts.d == Verdict::pass);
}

TEST_CASE("clause b fires when gamma1 is far from one") {
  const auto r = run_joint_scaling({planted_family("h", kSizes, power_law(1, 0.5), power_law(2, 0.5))}, 1);
  CHECK(r.families[0].alpha_fit.gamma == doctest::Approx(0.5));
  CHECK(r.verdicts.b == Verdict::fire);
  CHECK(r.verdicts.a == Verdict::pass);
  const auto edge = run_joint_scaling({planted_family("e", kSizes, power_law(1, 1.14), power_law(2, 0.5))}, 1);
  CHECK(edge.verdicts.b == Verdict::pass);
}

TEST_CASE("clause c compares gamma2 across families") {
  const auto same = run_joint_scaling({planted_family("x", kSizes, power_law(1, 1), power_law(2, 0.5)),
                                       planted_family("y", kSizes, power_law(0.4, 1), power_law(7, 0.5))},
                                      1);
  CHECK(same.verdicts.c == Verdict::pass);
  const auto split = run_joint_scaling({planted_family("x", kSizes, power_law(1, 1), power_law(2, 0.5)),
                                        planted_family("y", kSizes, power_law(1, 1), power_law(2, 0.8))},
                                       1);
  CHECK(split.verdicts.c == Verdict::fire);
}

TEST_CASE("clause d fires on flat or growing thresholds") {
  const auto flat = run_joint_scaling({planted_family("f", kSizes, power_law(1, 1), constant(0.3))}, 1);
  CHECK(std::abs(flat.families[0].kappa_fit.gamma) < 1e-9);
  CHECK(flat.verdicts.d == Verdict::fire);
  CHECK(flat.verdicts.a == Verdict::pass);
  const auto grow = run_joint_scaling({planted_family("g", kSizes, power_law(1, 1), power_law(1, -1))}, 1);
  CHECK(grow.families[0].kappa_fit.gamma == doctest::Approx(-1.0));
  CHECK(grow.verdicts.d == Verdict::fire);
}

TEST_CASE("verdict logic on hand-built fits") {
  CHECK(evaluate_verdicts({}).a == Verdict::not_applicable);
  auto v = evaluate_verdicts({fitted(1.1, 0.4, 0.95, 0.05, 0.1)});
  CHECK(v.a == Verdict::pass);
  CHECK(v.b == Verdict::pass);
  CHECK(v.c == Verdict::not_applicable);
  CHECK(v.d == Verdict::pass);
  // gamma2 within two standard errors of zero is not positive.
  CHECK(evaluate_verdicts({fitted(1.0, 0.15, 0.95, 0.05, 0.1)}).d == Verdict::fire);
  CHECK(evaluate_verdicts({fitted(1.0, 0.5, 0.89)}).a == Verdict::fire);
  CHECK(evaluate_verdicts({fitted(0.84, 0.5)}).b == Verdict::fire);
  CHECK(evaluate_verdicts({fitted(1.16, 0.5)}).b == Verdict::fire);
  // 0.4 vs 0.6 with SE 0.05 each: |diff| 0.2 > 2 * 0.0707.
  CHECK(evaluate_verdicts({fitted(1, 0.4, 1, 0, 0.05), fitted(1, 0.6, 1, 0, 0.05)}).c == Verdict::fire);
  CHECK(evaluate_verdicts({fitted(1, 0.4, 1, 0, 0.1), fitted(1, 0.6, 1, 0, 0.1)}).c == Verdict::pass);
  // Any failing family fires the shared clauses.
  CHECK(evaluate_verdicts({fitted(1, 0.5), fitted(0.5, 0.5)}).b == Verdict::fire);
}

TEST_CASE("absent thresholds are censored up to 40 percent") {
  const double inf = std::numeric_limits<double>::infinity();
  auto one_missing = [inf](double n) { return n < 20 ? inf : 2 / std::sqrt(std::log(n)); };
  const auto r = run_joint_scaling({planted_family("c", kSizes, power_law(1, 1), one_missing)}, 1);
  const auto& f = r.families[0];
  CHECK(f.points[0].kappa_censored);
  CHECK(f.kappa_fit.n_points == 4);
  CHECK(f.kappa_fit.gamma == doctest::Approx(0.5));
  bool noted = false;
  for (const auto& s : f.notes) noted = noted || s.find("N=16 kappa_c censored") != std::string::npos;
  CHECK(noted);

  auto two_missing = [inf](double n) { return n < 100 ? inf : 2 / std::sqrt(std::log(n)); };
  CHECK_NOTHROW(run_joint_scaling({planted_family("c", kSizes, power_law(1, 1), two_missing)}, 1));
  auto three_missing = [inf](double n) { return n < 300 ? inf : 2 / std::sqrt(std::log(n)); };
  CHECK_THROWS_AS(run_joint_scaling({planted_family("c", kSizes, power_law(1, 1), three_missing)}, 1),
                  InfeasibleError);
  auto zero_alpha = [](double n) { return n > 2000 ? 0.0 : 1 / std::log(n); };
  const auto z = run_joint_scaling({planted_family("z", kSizes, zero_alpha, power_law(2, 0.5))}, 1);
  CHECK(z.families[0].points[4].alpha_censored);
  CHECK(z.families[0].alpha_fit.gamma == doctest::Approx(1.0));
}

TEST_CASE("curved laws flag disagreement between full and upper-half fits") {
  const std::vector<std::size_t> ns{16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
  auto bend = [](double n) { return std::log(n) < 4 ? 1 / std::log(n) : 0.25 * std::pow(4 / std::log(n), 2.0); };
  const auto r = run_joint_scaling({planted_family("b", ns, bend, power_law(2, 0.5), 0.005)}, 3);
  const auto& f = r.families[0];
  CHECK(f.alpha_upper.gamma == doctest::Approx(2.0).epsilon(0.05));
  CHECK(f.range_disagreement);
  const auto straight = run_joint_scaling({planted_family("s", ns, power_law(1, 1), power_law(2, 0.5), 0.005)}, 3);
  CHECK_FALSE(straight.families[0].range_disagreement);
}

TEST_CASE("report is a deterministic function of family and seed") {
  const auto fam = planted_family("p", kSizes, power_law(1, 1), power_law(2, 0.5), 0.05);
  const auto a = scaling_points_csv(run_joint_scaling({fam}, 9));
  const auto b = scaling_points_csv(run_joint_scaling({fam}, 9));
  const auto c = scaling_points_csv(run_joint_scaling({fam}, 10));
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("default self-referential generator") {
  const auto s16 = default_selfref_system(16);
  CHECK(s16.model_dim() == 4);
  CHECK(default_selfref_system(8).model_dim() == 3);
  CHECK(default_selfref_system(4096).model_dim() == kMaxModelDim);
  CHECK(s16.feedback.gain(0, 0) == doctest::Approx(1 / std::log(16.0)));
  CHECK(s16.feedback.gain(0, 1) == 0.0);
  SelfRefFamilyOptions o;
  o.gain_power = 0.5;
  o.gain = 2;
  CHECK(default_selfref_system(100, o).feedback.gain(1, 1) == doctest::Approx(2 * std::sqrt(std::log(100.0))));
  CHECK_THROWS_AS(default_selfref_system(1), RangeError);
  CHECK_NOTHROW(s16.validate());
}

TEST_CASE("synthetic family wires the breakdown and coupling estimators") {
  JointScalingConfig cfg;
  cfg.breakdown.trials = 200;
  cfg.breakdown.bootstrap = 50;
  cfg.sim.n_steps = 20000;
  cfg.threshold.mi.max_pairs = 2000;
  cfg.threshold.mi.resamples = 100;
  cfg.threshold.tol = 5e-3;
  const auto fam = synthetic_family("s", kSizes, cfg);
  CHECK_NOTHROW(fam.validate());

  auto opt = cfg.breakdown;
  opt.seed = 77;
  const auto direct = breakdown_rate(make_ontology(64, 0.5, 77), opt);
  const auto via = fam.alpha(64, 77);
  CHECK(via.value == direct.alpha_dagger);
  CHECK(via.ci.lo == direct.ci.lo);

  // With identity projection, C(kappa) = kappa G / (1 + kappa G) for G the
  // feedback gain, so C crosses c_min at kappa = c_min / ((1 - c_min) G).
  const double g = 1 / std::log(64.0);
  const double expect = cfg.threshold.c_min / ((1 - cfg.threshold.c_min) * g);
  const auto k = fam.kappa(64, 5);
  CAPTURE(k.value);
  CHECK(std::abs(k.value - expect) < cfg.threshold.tol + 0.01 * expect);

  JointScalingConfig bad = cfg;
  bad.delta = 0.01;
  CHECK_THROWS_AS(synthetic_family("s", kSizes, bad), RangeError);
}

TEST_CASE("csv and summary layout") {
  const auto r = run_joint_scaling({planted_family("p", kSizes, power_law(1, 1), power_law(2, 0.5))}, 1);
  const auto csv = scaling_points_csv(r);
  CHECK(csv.rfind("family,n,alpha,alpha_lo,alpha_hi,alpha_censored,kappa_c,kappa_lo,kappa_hi,kappa_censored\n", 0) ==
        0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  const auto kv = scaling_summary_kv(r);
  for (const char* key : {"gamma1=", "gamma1_se=", "gamma2=", "gamma2_se=", "c1=", "c2=", "verdict_a=pass",
                          "verdict_b=pass", "verdict_c=n/a", "verdict_d=pass"})
    CHECK(kv.find(key) != std::string::npos);
}
