#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "generators.hpp"
#include "twofield/error.hpp"
#include "twofield/markov.hpp"

using namespace twofield;
using namespace twofield::markov;
using twofield::testing::driven_ring;
using twofield::testing::potential_rates;
using twofield::testing::random_rates;

namespace {

// Time-weighted occupation of a simulated jump chain.
std::vector<double> jump_chain_occupation(const RateMatrix& q, std::size_t jumps, Rng& rng) {
  const std::size_t n = q.size();
  std::vector<double> time(n, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t s = 0;
  for (std::size_t k = 0; k < jumps; ++k) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += q(s, j);
    time[s] += std::exponential_distribution<double>(total)(rng);
    double r = u(rng) * total;
    std::size_t next = 0;
    for (; next < n; ++next) {
      r -= q(s, next);
      if (r < 0.0) break;
    }
    s = std::min(next, n - 1);
  }
  double t = 0.0;
  for (double x : time) t += x;
  for (double& x : time) x /= t;
  return time;
}

RateMatrix two_state(double k01, double k10) {
  RateMatrix q(2);
  q.set(0, 1, k01);
  q.set(1, 0, k10);
  return q;
}

}  // namespace

TEST_CASE("stationary distribution of two-state chains") {
  auto p = stationary_distribution(two_state(1, 1));
  CHECK(p.probs[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p.probs[1] == doctest::Approx(0.5).epsilon(1e-14));

  p = stationary_distribution(two_state(2, 1));
  CHECK(p.probs[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(p.probs[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(p.quasi_potential()[0] == doctest::Approx(std::log(3.0)));
}

TEST_CASE("stationary distribution matches a simulated jump chain") {
  Rng rng(11);
  const auto q = random_rates(5, 4, rng);
  const auto p = stationary_distribution(q);
  const auto occ = jump_chain_occupation(q, 1'000'000, rng);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(p.probs[i] - occ[i]) < 1e-2);
    CHECK(p.probs[i] > 0.0);
    sum += p.probs[i];
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
  CHECK(global_balance_residual(q, p) < 1e-12);
}

TEST_CASE("stationary distribution rejects disconnected graphs") {
  RateMatrix q(4);
  q.set(0, 1, 1);
  q.set(1, 0, 1);
  q.set(2, 3, 1);
  q.set(3, 2, 1);
  CHECK_THROWS_AS(stationary_distribution(q), StructuralError);
  try {
    stationary_distribution(q);
  } catch (const StructuralError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("{0,1}") != std::string::npos);
    CHECK(msg.find("{2,3}") != std::string::npos);
  }
  // One-way edge into a sink: weakly but not strongly connected.
  RateMatrix sink(2);
  sink.set(0, 1, 1.0);
  CHECK_THROWS_AS(stationary_distribution(sink), StructuralError);
}

TEST_CASE("rate matrix construction validates entries") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 1) = -1.0;
  CHECK_THROWS_AS(RateMatrix{m}, ConfigError);
  m(0, 1) = 1.0;
  m(0, 0) = 0.5;
  CHECK_THROWS_AS(RateMatrix{m}, ConfigError);
  CHECK_THROWS_AS(RateMatrix{1}, ConfigError);
}

TEST_CASE("cycle basis sizes") {
  SUBCASE("3-state ring") {
    const auto b = cycle_basis(driven_ring(3, 2, 1));
    REQUIRE(b.cycles.size() == 1);
    CHECK(b.cycles[0].states.size() == 3);
  }
  SUBCASE("complete graph on 4 states") {
    RateMatrix q(4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j) q.set(i, j, 1.0);
    const auto b = cycle_basis(q);
    CHECK(b.cycles.size() == 3);
    CHECK(b.edge_count() == 6);
  }
  SUBCASE("chain has no cycles") {
    RateMatrix q(5);
    for (std::size_t i = 0; i + 1 < 5; ++i) {
      q.set(i, i + 1, 1.0);
      q.set(i + 1, i, 2.0);
    }
    const auto b = cycle_basis(q);
    CHECK(b.cycles.empty());
    CHECK(b.tree_edges.size() == 4);
  }
}

TEST_CASE("fundamental cycles: one chord each, closed walks over support edges") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 20;
    const auto q = random_rates(n, trial % 7, rng);
    const auto edges = support_edges(q);
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
      SpanningTreeOptions opt;
      if (seed) opt.shuffle_seed = seed;
      const auto b = cycle_basis(q, opt);
      CHECK(b.cycles.size() == edges.size() - n + 1);
      for (const auto& c : b.cycles) {
        std::size_t chord_hits = 0;
        for (std::size_t l = 0; l < c.states.size(); ++l) {
          const auto a = c.states[l], z = c.states[(l + 1) % c.states.size()];
          const Edge e{std::min(a, z), std::max(a, z)};
          CHECK(std::find(edges.begin(), edges.end(), e) != edges.end());
          chord_hits += std::count(b.chords.begin(), b.chords.end(), e);
        }
        CHECK(chord_hits == 1);
        CHECK(c.states[0] == c.chord.i);
        CHECK(c.states[1] == c.chord.j);
      }
    }
  }
}

TEST_CASE("cycle affinity examples") {
  const auto ring = driven_ring(3, 2, 1);
  const std::vector<std::size_t> c3{0, 1, 2};
  CHECK(cycle_affinity(ring, c3) == doctest::Approx(3 * std::log(2.0)).epsilon(1e-14));

  Rng rng(3);
  std::vector<double> v;
  const auto eq = potential_rates(6, 5, rng, &v);
  for (const auto& c : cycle_basis(eq).cycles) CHECK(std::abs(cycle_affinity(eq, c.states)) < 1e-12);

  // forward rates (2,1,3,1), backward rates (1,1,1,2) around 0->1->2->3->0
  RateMatrix q(4);
  const double fwd[] = {2, 1, 3, 1}, bwd[] = {1, 1, 1, 2};
  for (std::size_t l = 0; l < 4; ++l) {
    q.set(l, (l + 1) % 4, fwd[l]);
    q.set((l + 1) % 4, l, bwd[l]);
  }
  const std::vector<std::size_t> c4{0, 1, 2, 3};
  CHECK(cycle_affinity(q, c4) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("cycle affinity: rotation invariance and reversal antisymmetry") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto q = random_rates(8, 6, rng);
    for (const auto& c : cycle_basis(q).cycles) {
      const double a = cycle_affinity(q, c.states);
      auto rotated = c.states;
      std::rotate(rotated.begin(), rotated.begin() + 1, rotated.end());
      CHECK(cycle_affinity(q, rotated) == doctest::Approx(a).epsilon(1e-12));
      auto reversed = c.states;
      std::reverse(reversed.begin(), reversed.end());
      CHECK(cycle_affinity(q, reversed) == doctest::Approx(-a).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero reverse rate is an infinite-affinity error") {
  RateMatrix q = driven_ring(3, 2, 1);
  q.set(2, 1, 0.0);
  const std::vector<std::size_t> c3{0, 1, 2};
  CHECK_THROWS_AS(cycle_affinity(q, c3), InfiniteAffinityError);
  CHECK_THROWS_AS(cycle_basis(q), InfiniteAffinityError);
  RateMatrix q2(3);
  q2.set(0, 1, 1);
  q2.set(1, 0, 1);
  const std::vector<std::size_t> bad{0, 1, 2};
  CHECK_THROWS_AS(cycle_affinity(q2, bad), InfiniteAffinityError);
}

TEST_CASE("entropy production examples") {
  Rng rng(8);
  const auto eq = potential_rates(4, 3, rng);
  const auto r_eq = entropy_production(eq, stationary_distribution(eq));
  CHECK(std::abs(r_eq.total()) < 1e-10);

  const auto ring = driven_ring(3, 2, 1);
  const auto r_ring = entropy_production(ring, stationary_distribution(ring));
  CHECK(std::abs(r_ring.sigma_edge_form - std::log(2.0)) < 1e-10);
  CHECK(std::abs(r_ring.sigma_cycle_form - std::log(2.0)) < 1e-10);
  REQUIRE(r_ring.cycles.size() == 1);
  CHECK(std::abs(r_ring.cycles[0].current) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const auto drv = random_rates(5, 4, rng);
  const auto r_drv = entropy_production(drv, stationary_distribution(drv));
  CHECK(std::abs(r_drv.sigma_edge_form - r_drv.sigma_cycle_form) <=
        1e-9 * std::abs(r_drv.sigma_edge_form));
  CHECK(r_drv.total() > 0.0);
}

TEST_CASE("edge and cycle forms agree up to n = 50") {
  Rng rng(99);
  for (std::size_t n : {2u, 3u, 7u, 15u, 30u, 50u}) {
    for (int t = 0; t < 5; ++t) {
      const auto q = random_rates(n, n, rng);
      const auto r = entropy_production(q, stationary_distribution(q));
      CHECK(std::abs(r.sigma_edge_form - r.sigma_cycle_form) <=
            1e-9 * std::max(std::abs(r.sigma_edge_form), 1e-300) + 1e-14);
      CHECK(r.total() >= 0.0);
    }
  }
}

TEST_CASE("a non-stationary distribution is rejected by the cycle decomposition") {
  const auto q = driven_ring(4, 2, 1);
  StationaryDist wrong{{0.4, 0.3, 0.2, 0.1}};
  CHECK_THROWS_AS(entropy_production(q, wrong), InternalConsistencyError);
}

TEST_CASE("entropy production is zero exactly when detailed balance holds") {
  Rng rng(1234);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 3 + t % 10;
    const bool driven = t % 2 == 1;
    const auto q = driven ? random_rates(n, 3, rng) : potential_rates(n, 3, rng);
    const auto r = entropy_production(q, stationary_distribution(q));
    const auto db = detailed_balance_check(q);
    CHECK(r.total() >= 0.0);
    CHECK(db.holds == !driven);
    CHECK((r.total() < 1e-10) == db.holds);
  }
}

TEST_CASE("uniform rate scaling scales entropy production and keeps affinities") {
  Rng rng(77);
  const auto q = random_rates(6, 4, rng);
  const double lambda = 3.7;
  const auto qs = q.scaled(lambda);
  const auto r = entropy_production(q, stationary_distribution(q));
  const auto rs = entropy_production(qs, stationary_distribution(qs));
  CHECK(rs.total() == doctest::Approx(lambda * r.total()).epsilon(1e-10));
  REQUIRE(r.cycles.size() == rs.cycles.size());
  for (std::size_t c = 0; c < r.cycles.size(); ++c)
    CHECK(rs.cycles[c].affinity == doctest::Approx(r.cycles[c].affinity).epsilon(1e-12));
}

TEST_CASE("detailed balance check examples") {
  Rng rng(4);
  CHECK(detailed_balance_check(potential_rates(6, 4, rng)).holds);

  const auto ring = driven_ring(3, 2, 1);
  const auto db = detailed_balance_check(ring);
  CHECK_FALSE(db.holds);
  REQUIRE(db.worst_cycle.has_value());
  CHECK(db.worst_states.size() == 3);
  CHECK(db.worst_abs_affinity == doctest::Approx(3 * std::log(2.0)));

  auto perturbed = potential_rates(6, 4, rng);
  const auto e = support_edges(perturbed).front();
  perturbed.set(e.i, e.j, perturbed(e.i, e.j) * (1.0 + 1e-14));
  const auto dp = detailed_balance_check(perturbed, 1e-9);
  CHECK(dp.holds);
  CHECK(dp.worst_abs_affinity < 1e-13);
}

TEST_CASE("detailed balance verdict does not depend on the spanning tree") {
  Rng rng(17);
  for (int t = 0; t < 30; ++t) {
    const bool driven = t % 2 == 0;
    const auto q = driven ? random_rates(9, 5, rng) : potential_rates(9, 5, rng);
    const bool reference = detailed_balance_check(q).holds;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      SpanningTreeOptions opt;
      opt.root = seed % q.size();
      opt.shuffle_seed = seed * 7919;
      CHECK(detailed_balance_check(q, kDefaultAffinityTolerance, opt).holds == reference);
    }
  }
}

TEST_CASE("edge list parsing and csv export") {
  const std::string text =
      "# driven ring\n"
      "0 1 2   # forward\n"
      "1 2 2\n"
      "2 0 2\n"
      "\n"
      "1 0 1\n2 1 1\n0 2 1\n";
  const auto q = parse_edge_list(text);
  CHECK(q.size() == 3);
  CHECK(q(0, 1) == 2.0);
  CHECK(q(0, 2) == 1.0);
  const auto report = entropy_production(q, stationary_distribution(q));
  const auto csv = cycle_report_csv(report);
  CHECK(csv.rfind("cycle_id,chord_i,chord_j,affinity,current,contribution\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

  CHECK_THROWS_AS(parse_edge_list(std::string("0 1\n")), ConfigError);
  CHECK_THROWS_AS(parse_edge_list(std::string("0 0 1\n")), ConfigError);
  CHECK_THROWS_AS(parse_edge_list(std::string("0 1 -2\n")), ConfigError);
  CHECK_THROWS_AS(parse_edge_list(std::string("0 1 1\n0 1 2\n")), ConfigError);
}
