#pragma once

// Finite-state Markov networks: stationary distributions, fundamental cycle
// bases, cycle affinities and Schnakenberg entropy production.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace twofield::markov {

// Transition rates k(i, j) from state i to state j (1/time). The constructor
// enforces shape, non-negativity and a zero diagonal; connectivity and edge
// reversibility are checked by the operations that need them.
class RateMatrix {
 public:
  explicit RateMatrix(std::size_t n);
  explicit RateMatrix(Eigen::MatrixXd rates);

  std::size_t size() const { return static_cast<std::size_t>(rates_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return rates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  void set(std::size_t i, std::size_t j, double k);
  const Eigen::MatrixXd& rates() const { return rates_; }

  RateMatrix scaled(double lambda) const;

  // Strongly connected components of the directed graph of positive rates.
  std::vector<std::vector<std::size_t>> strongly_connected_components() const;

  // Throws StructuralError naming the components.
  void require_strongly_connected() const;
  // Throws InfiniteAffinityError naming the first one-way edge.
  void require_reversible() const;

 private:
  Eigen::MatrixXd rates_;
};

struct StationaryDist {
  std::vector<double> probs;

  // Discrete information quasi-potential -ln p_i.
  std::vector<double> quasi_potential() const;
};

StationaryDist stationary_distribution(const RateMatrix& q);

// Largest |sum_j (p_j k_ji - p_i k_ij)| over states.
double global_balance_residual(const RateMatrix& q, const StationaryDist& p);

struct Edge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  bool operator==(const Edge&) const = default;
};

// Closed walk states[0] -> states[1] -> ... -> states.back() -> states[0].
// A fundamental cycle starts with its chord, traversed i -> j.
struct Cycle {
  std::vector<std::size_t> states;
  Edge chord;
};

struct CycleBasis {
  std::vector<Edge> tree_edges;
  std::vector<Edge> chords;
  std::vector<Cycle> cycles;  // cycles[c] closes chords[c]
  std::size_t state_count = 0;
  std::size_t edge_count() const { return tree_edges.size() + chords.size(); }
};

struct SpanningTreeOptions {
  std::size_t root = 0;
  // When set, neighbours are visited in a seeded random order, which yields
  // a different breadth-first tree (and basis) per seed.
  std::optional<std::uint64_t> shuffle_seed;
};

// Support graph edges {i, j} with k_ij > 0 or k_ji > 0, sorted.
std::vector<Edge> support_edges(const RateMatrix& q);

CycleBasis cycle_basis(const RateMatrix& q, const SpanningTreeOptions& options = {});

// ln prod k(s_l, s_{l+1}) / k(s_{l+1}, s_l) around the closed walk.
double cycle_affinity(const RateMatrix& q, std::span<const std::size_t> cycle_states);

struct CycleEntry {
  Edge chord;
  double affinity = 0.0;
  double current = 0.0;
  double contribution = 0.0;  // current * affinity
};

struct CycleReport {
  std::vector<CycleEntry> cycles;
  double sigma_edge_form = 0.0;
  double sigma_cycle_form = 0.0;
  double total() const { return sigma_edge_form; }
};

// Computes the total entropy production from the edge sum and from the
// cycle sum J_c A(c); throws InternalConsistencyError if the two differ by
// more than rel_tol relative.
CycleReport entropy_production(const RateMatrix& q, const StationaryDist& p,
                               double rel_tol = 1e-9,
                               const SpanningTreeOptions& options = {});

struct DetailedBalanceResult {
  bool holds = true;
  std::optional<std::size_t> worst_cycle;  // index into the basis
  double worst_abs_affinity = 0.0;
  std::vector<std::size_t> worst_states;
};

inline constexpr double kDefaultAffinityTolerance = 1e-9;

DetailedBalanceResult detailed_balance_check(const RateMatrix& q,
                                             double tol = kDefaultAffinityTolerance,
                                             const SpanningTreeOptions& options = {});

// Edge list: one `i j k_ij` per line, zero-based, '#' starts a comment.
RateMatrix parse_edge_list(std::istream& in);
RateMatrix parse_edge_list(const std::string& text);

std::string cycle_report_csv(const CycleReport& report);

}  // namespace twofield::markov
