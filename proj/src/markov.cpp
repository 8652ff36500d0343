#include "twofield/markov.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include "twofield/error.hpp"
#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield::markov {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

std::string describe_components(const std::vector<std::vector<std::size_t>>& comps) {
  std::ostringstream ss;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (c) ss << ' ';
    ss << '{';
    for (std::size_t k = 0; k < comps[c].size(); ++k) ss << (k ? "," : "") << comps[c][k];
    ss << '}';
  }
  return ss.str();
}

std::vector<std::vector<std::size_t>> adjacency(const RateMatrix& q) {
  const std::size_t n = q.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : support_edges(q)) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  return adj;
}

}  // namespace

RateMatrix::RateMatrix(std::size_t n) : rates_(Eigen::MatrixXd::Zero(idx(n), idx(n))) {
  if (n < 2) throw ConfigError("rate matrix needs at least 2 states");
}

RateMatrix::RateMatrix(Eigen::MatrixXd rates) : rates_(std::move(rates)) {
  if (rates_.rows() != rates_.cols()) throw ConfigError("rate matrix must be square");
  if (rates_.rows() < 2) throw ConfigError("rate matrix needs at least 2 states");
  for (Index i = 0; i < rates_.rows(); ++i) {
    for (Index j = 0; j < rates_.cols(); ++j) {
      const double k = rates_(i, j);
      if (!std::isfinite(k) || k < 0.0)
        throw ConfigError("rate k(" + std::to_string(i) + "," + std::to_string(j) +
                          ") must be finite and non-negative");
    }
    if (rates_(i, i) != 0.0)
      throw ConfigError("diagonal rate k(" + std::to_string(i) + "," + std::to_string(i) +
                        ") must be zero");
  }
}

void RateMatrix::set(std::size_t i, std::size_t j, double k) {
  if (i >= size() || j >= size()) throw ConfigError("state index out of range");
  if (i == j && k != 0.0) throw ConfigError("diagonal rates must be zero");
  if (!std::isfinite(k) || k < 0.0) throw ConfigError("rates must be finite and non-negative");
  rates_(idx(i), idx(j)) = k;
}

RateMatrix RateMatrix::scaled(double lambda) const {
  if (!(lambda > 0.0)) throw ConfigError("rate scale factor must be positive");
  return RateMatrix(Eigen::MatrixXd(rates_ * lambda));
}

std::vector<std::vector<std::size_t>> RateMatrix::strongly_connected_components() const {
  // Tarjan's algorithm; n stays in the hundreds so recursion depth is fine.
  const std::size_t n = size();
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  int counter = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w = 0; w < n; ++w) {
      if (w == v || (*this)(v, w) <= 0.0) continue;
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      comps.push_back(std::move(comp));
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] < 0) visit(v);
  std::sort(comps.begin(), comps.end());
  return comps;
}

void RateMatrix::require_strongly_connected() const {
  const auto comps = strongly_connected_components();
  if (comps.size() > 1)
    throw StructuralError("rate graph is not strongly connected; components: " +
                          describe_components(comps));
}

void RateMatrix::require_reversible() const {
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < size(); ++j)
      if ((*this)(i, j) > 0.0 && (*this)(j, i) <= 0.0)
        throw InfiniteAffinityError("edge " + std::to_string(i) + "->" + std::to_string(j) +
                                    " has zero reverse rate; affinities would be infinite");
}

std::vector<double> StationaryDist::quasi_potential() const {
  std::vector<double> phi(probs.size());
  std::transform(probs.begin(), probs.end(), phi.begin(), [](double p) { return -std::log(p); });
  return phi;
}

StationaryDist stationary_distribution(const RateMatrix& q) {
  q.require_strongly_connected();
  const Index n = idx(q.size());
  // Global balance Q^T p = 0 with the last equation replaced by sum p = 1.
  Eigen::MatrixXd a = q.rates().transpose();
  for (Index i = 0; i < n; ++i) a(i, i) = -q.rates().row(i).sum();
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd p = a.fullPivLu().solve(rhs);

  StationaryDist dist;
  dist.probs.assign(p.data(), p.data() + n);
  for (Index i = 0; i < n; ++i) {
    if (!(p(i) > 0.0))
      throw NumericalError("stationary solve produced non-positive probability at state " +
                           std::to_string(i));
  }
  const double total = std::accumulate(dist.probs.begin(), dist.probs.end(), 0.0);
  for (double& v : dist.probs) v /= total;
  return dist;
}

double global_balance_residual(const RateMatrix& q, const StationaryDist& p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double flow = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) flow += p.probs[j] * q(j, i) - p.probs[i] * q(i, j);
    worst = std::max(worst, std::abs(flow));
  }
  return worst;
}

std::vector<Edge> support_edges(const RateMatrix& q) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = i + 1; j < q.size(); ++j)
      if (q(i, j) > 0.0 || q(j, i) > 0.0) edges.push_back({i, j});
  return edges;
}

CycleBasis cycle_basis(const RateMatrix& q, const SpanningTreeOptions& options) {
  q.require_reversible();
  const std::size_t n = q.size();
  if (options.root >= n) throw ConfigError("spanning tree root out of range");
  auto adj = adjacency(q);
  if (options.shuffle_seed) {
    Rng rng(*options.shuffle_seed);
    for (auto& nb : adj) std::shuffle(nb.begin(), nb.end(), rng);
  }

  constexpr auto none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(n, none), depth(n, 0);
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> frontier;
  frontier.push(options.root);
  seen[options.root] = true;
  CycleBasis basis;
  basis.state_count = n;
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop();
    for (std::size_t w : adj[v]) {
      if (seen[w]) continue;
      seen[w] = true;
      parent[w] = v;
      depth[w] = depth[v] + 1;
      basis.tree_edges.push_back({std::min(v, w), std::max(v, w)});
      frontier.push(w);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    std::vector<std::size_t> unreached;
    for (std::size_t v = 0; v < n; ++v)
      if (!seen[v]) unreached.push_back(v);
    throw StructuralError("support graph is not connected; unreachable from state " +
                          std::to_string(options.root) + ": " +
                          describe_components({unreached}));
  }

  auto is_tree = [&](const Edge& e) { return parent[e.i] == e.j || parent[e.j] == e.i; };
  for (const auto& e : support_edges(q)) {
    if (is_tree(e)) continue;
    basis.chords.push_back(e);
    // Walk both endpoints up to their lowest common ancestor.
    std::vector<std::size_t> up_u{e.i}, up_v{e.j};
    std::size_t a = e.i, b = e.j;
    while (a != b) {
      if (depth[a] >= depth[b]) {
        a = parent[a];
        up_u.push_back(a);
      } else {
        b = parent[b];
        up_v.push_back(b);
      }
    }
    // up_u ends and up_v ends at the common ancestor.
    Cycle cycle;
    cycle.chord = e;
    cycle.states.push_back(e.i);
    for (std::size_t k = 0; k < up_v.size(); ++k) {
      if (up_v[k] == e.i) break;  // ancestor is the chord start itself
      cycle.states.push_back(up_v[k]);
    }
    for (std::size_t k = up_u.size() - 1; k >= 1; --k) {
      if (up_u[k] == up_v.back()) continue;  // common ancestor already added
      cycle.states.push_back(up_u[k]);
    }
    basis.cycles.push_back(std::move(cycle));
  }
  return basis;
}

double cycle_affinity(const RateMatrix& q, std::span<const std::size_t> states) {
  if (states.size() < 2) throw ConfigError("a cycle needs at least two states");
  double a = 0.0;
  for (std::size_t l = 0; l < states.size(); ++l) {
    const std::size_t from = states[l];
    const std::size_t to = states[(l + 1) % states.size()];
    if (from >= q.size() || to >= q.size()) throw ConfigError("cycle state out of range");
    const double fwd = q(from, to), bwd = q(to, from);
    if (fwd <= 0.0 || bwd <= 0.0)
      throw InfiniteAffinityError("cycle edge " + std::to_string(from) + "<->" +
                                  std::to_string(to) + " lacks a positive rate in both directions");
    a += std::log(fwd) - std::log(bwd);
  }
  return a;
}

CycleReport entropy_production(const RateMatrix& q, const StationaryDist& p, double rel_tol,
                               const SpanningTreeOptions& options) {
  if (p.probs.size() != q.size()) throw ConfigError("distribution size does not match rate matrix");
  const auto basis = cycle_basis(q, options);
  const auto edges = support_edges(q);

  std::map<std::pair<std::size_t, std::size_t>, Index> edge_row;
  for (std::size_t e = 0; e < edges.size(); ++e) edge_row[{edges[e].i, edges[e].j}] = idx(e);

  CycleReport report;
  Eigen::VectorXd current(idx(edges.size()));
  double traffic = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    const double fwd = p.probs[i] * q(i, j), bwd = p.probs[j] * q(j, i);
    current(idx(e)) = fwd - bwd;
    traffic += fwd + bwd;
    report.sigma_edge_form += (fwd - bwd) * std::log(fwd / bwd);
  }

  // Edge currents of a stationary state lie in the cycle space: solve
  // M J = j for the cycle currents, M(e, c) = orientation of edge e in c.
  const Index ncycles = idx(basis.cycles.size());
  Eigen::VectorXd cycle_current = Eigen::VectorXd::Zero(ncycles);
  if (ncycles > 0) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(idx(edges.size()), ncycles);
    for (Index c = 0; c < ncycles; ++c) {
      const auto& st = basis.cycles[static_cast<std::size_t>(c)].states;
      for (std::size_t l = 0; l < st.size(); ++l) {
        const std::size_t a = st[l], b = st[(l + 1) % st.size()];
        m(edge_row.at({std::min(a, b), std::max(a, b)}), c) += a < b ? 1.0 : -1.0;
      }
    }
    cycle_current = m.colPivHouseholderQr().solve(current);
    const double resid = (m * cycle_current - current).cwiseAbs().maxCoeff();
    if (resid > 1e-9 * std::max(traffic, 1e-300))
      throw InternalConsistencyError("edge currents are not spanned by the cycle basis (residual " +
                                     io::fmt(resid) + "); distribution is not stationary");
  }

  for (Index c = 0; c < ncycles; ++c) {
    const auto& cyc = basis.cycles[static_cast<std::size_t>(c)];
    CycleEntry entry;
    entry.chord = cyc.chord;
    entry.affinity = cycle_affinity(q, cyc.states);
    entry.current = cycle_current(c);
    entry.contribution = entry.current * entry.affinity;
    report.sigma_cycle_form += entry.contribution;
    report.cycles.push_back(entry);
  }

  const double scale = std::max(std::abs(report.sigma_edge_form), std::abs(report.sigma_cycle_form));
  const double floor = 1e-13 * traffic;
  if (std::abs(report.sigma_edge_form - report.sigma_cycle_form) > rel_tol * scale + floor)
    throw InternalConsistencyError("edge-form entropy production " + io::fmt(report.sigma_edge_form) +
                                   " disagrees with cycle form " + io::fmt(report.sigma_cycle_form));
  return report;
}

DetailedBalanceResult detailed_balance_check(const RateMatrix& q, double tol,
                                             const SpanningTreeOptions& options) {
  const auto basis = cycle_basis(q, options);
  DetailedBalanceResult result;
  for (std::size_t c = 0; c < basis.cycles.size(); ++c) {
    const double a = std::abs(cycle_affinity(q, basis.cycles[c].states));
    if (!result.worst_cycle || a > result.worst_abs_affinity) {
      result.worst_cycle = c;
      result.worst_abs_affinity = a;
      result.worst_states = basis.cycles[c].states;
    }
  }
  result.holds = result.worst_abs_affinity < tol;
  return result;
}

RateMatrix parse_edge_list(std::istream& in) {
  struct Entry {
    std::size_t i, j;
    double k;
  };
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0, n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    long long i = 0, j = 0;
    double k = 0.0;
    if (!(ls >> i)) continue;  // blank line
    if (!(ls >> j >> k))
      throw ConfigError("edge list line " + std::to_string(lineno) + ": expected `i j k_ij`");
    std::string extra;
    if (ls >> extra)
      throw ConfigError("edge list line " + std::to_string(lineno) + ": trailing text '" + extra + "'");
    if (i < 0 || j < 0)
      throw ConfigError("edge list line " + std::to_string(lineno) + ": negative state index");
    if (i == j) throw ConfigError("edge list line " + std::to_string(lineno) + ": self loop");
    if (!std::isfinite(k) || k < 0.0)
      throw ConfigError("edge list line " + std::to_string(lineno) + ": rate must be non-negative");
    entries.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), k});
    n = std::max({n, static_cast<std::size_t>(i) + 1, static_cast<std::size_t>(j) + 1});
  }
  if (n < 2) throw ConfigError("edge list defines fewer than 2 states");
  RateMatrix q(n);
  std::vector<bool> seen(n * n, false);
  for (const auto& e : entries) {
    if (seen[e.i * n + e.j])
      throw ConfigError("duplicate edge " + std::to_string(e.i) + " " + std::to_string(e.j));
    seen[e.i * n + e.j] = true;
    q.set(e.i, e.j, e.k);
  }
  return q;
}

RateMatrix parse_edge_list(const std::string& text) {
  std::istringstream in(text);
  return parse_edge_list(in);
}

std::string cycle_report_csv(const CycleReport& report) {
  io::Csv csv({"cycle_id", "chord_i", "chord_j", "affinity", "current", "contribution"});
  for (std::size_t c = 0; c < report.cycles.size(); ++c) {
    const auto& e = report.cycles[c];
    csv.row(c, e.chord.i, e.chord.j, e.affinity, e.current, e.contribution);
  }
  return csv.str();
}

}  // namespace twofield::markov
