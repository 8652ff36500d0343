#include "config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "twofield/io.hpp"
#include "twofield/random.hpp"

namespace twofield::cli {

namespace {

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

class Issues {
 public:
  void error(const std::string& path, const std::string& msg) {
    errors.push_back(path.empty() ? msg : path + ": " + msg);
  }
  template <typename F>
  void guard(const std::string& path, F&& f) {
    try {
      f();
    } catch (const ConfigListError& e) {
      errors.insert(errors.end(), e.issues().begin(), e.issues().end());
    } catch (const ConfigError& e) {
      error(path, e.what());
    }
  }
  std::size_t count() const { return errors.size(); }

  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

// Typed access to one JSON object. Every key read is echoed into the
// resolved tree (defaults included); keys never read are reported by finish().
class Reader {
 public:
  Reader(const json* in, json* out, std::string path, Issues& issues)
      : in_(in), out_(out), path_(std::move(path)), issues_(&issues) {
    if (in_ && !in_->is_object()) {
      issues_->error(path_, "expected an object");
      in_ = nullptr;
    }
    if (!out_->is_object()) *out_ = json::object();
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  Issues& issues() { return *issues_; }
  bool has(const std::string& k) const { return in_ && in_->contains(k); }

  const json* raw(const std::string& k) {
    if (!has(k)) return nullptr;
    seen_.insert(k);
    return &in_->at(k);
  }

  void missing(const std::string& k) { issues_->error(at(k), "required key is missing"); }

  std::optional<double> opt_num(const std::string& k) {
    const json* j = raw(k);
    if (!j) return std::nullopt;
    if (!j->is_number()) {
      issues_->error(at(k), "expected a number");
      return std::nullopt;
    }
    const double v = j->get<double>();
    (*out_)[k] = v;
    return v;
  }
  double num(const std::string& k, double def) {
    const auto v = opt_num(k);
    if (!v) (*out_)[k] = def;
    return v.value_or(def);
  }
  double req_num(const std::string& k) {
    if (!has(k)) missing(k);
    return opt_num(k).value_or(0.0);
  }

  std::optional<std::uint64_t> opt_u64(const std::string& k) {
    const json* j = raw(k);
    if (!j) return std::nullopt;
    if (!j->is_number_unsigned()) {
      issues_->error(at(k), "expected a non-negative integer");
      return std::nullopt;
    }
    const auto v = j->get<std::uint64_t>();
    (*out_)[k] = v;
    return v;
  }
  std::optional<std::size_t> opt_count(const std::string& k) {
    const auto v = opt_u64(k);
    if (!v) return std::nullopt;
    return static_cast<std::size_t>(*v);
  }
  std::size_t count(const std::string& k, std::size_t def) {
    const auto v = opt_count(k);
    if (!v) (*out_)[k] = def;
    return v.value_or(def);
  }
  int integer(const std::string& k, int def) {
    const json* j = raw(k);
    int v = def;
    if (j && j->is_number_integer() && j->get<long long>() >= -1000000 && j->get<long long>() <= 1000000)
      v = j->get<int>();
    else if (j)
      issues_->error(at(k), "expected an integer");
    (*out_)[k] = v;
    return v;
  }
  bool flag(const std::string& k, bool def) {
    const json* j = raw(k);
    bool v = def;
    if (j && j->is_boolean()) v = j->get<bool>();
    else if (j) issues_->error(at(k), "expected true or false");
    (*out_)[k] = v;
    return v;
  }
  std::optional<std::string> opt_str(const std::string& k) {
    const json* j = raw(k);
    if (!j) return std::nullopt;
    if (!j->is_string()) {
      issues_->error(at(k), "expected a string");
      return std::nullopt;
    }
    (*out_)[k] = j->get<std::string>();
    return j->get<std::string>();
  }
  std::string str(const std::string& k, const std::string& def) {
    const auto v = opt_str(k);
    if (!v) (*out_)[k] = def;
    return v.value_or(def);
  }

  std::optional<std::vector<double>> opt_numbers(const std::string& k) {
    const json* j = raw(k);
    if (!j) return std::nullopt;
    if (!j->is_array()) {
      issues_->error(at(k), "expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> v;
    for (const auto& e : *j) {
      if (!e.is_number()) {
        issues_->error(at(k), "expected an array of numbers");
        return std::nullopt;
      }
      v.push_back(e.get<double>());
    }
    (*out_)[k] = v;
    return v;
  }
  std::vector<double> numbers(const std::string& k, std::vector<double> def) {
    auto v = opt_numbers(k);
    if (!v) (*out_)[k] = def;
    return v.value_or(std::move(def));
  }
  std::vector<double> req_numbers(const std::string& k) {
    if (!has(k)) missing(k);
    return opt_numbers(k).value_or(std::vector<double>{});
  }

  std::optional<std::vector<std::size_t>> opt_counts(const std::string& k) {
    const json* j = raw(k);
    if (!j) return std::nullopt;
    std::vector<std::size_t> v;
    if (j->is_number_unsigned()) {
      v.push_back(j->get<std::size_t>());
    } else if (j->is_array()) {
      for (const auto& e : *j) {
        if (!e.is_number_unsigned()) {
          issues_->error(at(k), "expected non-negative integers");
          return std::nullopt;
        }
        v.push_back(e.get<std::size_t>());
      }
    } else {
      issues_->error(at(k), "expected a non-negative integer or an array of them");
      return std::nullopt;
    }
    (*out_)[k] = v;
    return v;
  }
  std::vector<std::size_t> counts(const std::string& k, std::vector<std::size_t> def) {
    auto v = opt_counts(k);
    if (!v) (*out_)[k] = def;
    return v.value_or(std::move(def));
  }

  std::optional<Eigen::MatrixXd> opt_matrix(const std::string& k) {
    const json* j = raw(k);
    if (!j) return std::nullopt;
    const std::string bad = "expected a rectangular array of number rows";
    if (!j->is_array() || j->empty() || !(*j)[0].is_array() || (*j)[0].empty()) {
      issues_->error(at(k), bad);
      return std::nullopt;
    }
    const auto rows = static_cast<Eigen::Index>(j->size());
    const auto cols = static_cast<Eigen::Index>((*j)[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = (*j)[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
        issues_->error(at(k), bad);
        return std::nullopt;
      }
      for (Eigen::Index c = 0; c < cols; ++c) {
        const auto& e = row[static_cast<std::size_t>(c)];
        if (!e.is_number()) {
          issues_->error(at(k), bad);
          return std::nullopt;
        }
        m(r, c) = e.get<double>();
      }
    }
    (*out_)[k] = *j;
    return m;
  }
  Eigen::MatrixXd req_matrix(const std::string& k) {
    if (!has(k)) missing(k);
    return opt_matrix(k).value_or(Eigen::MatrixXd());
  }

  std::vector<AxisBounds> req_bounds(const std::string& k) {
    if (!has(k)) {
      missing(k);
      return {};
    }
    const json* j = raw(k);
    std::vector<AxisBounds> b;
    bool ok = j->is_array() && !j->empty();
    if (ok)
      for (const auto& e : *j) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
          ok = false;
          break;
        }
        b.push_back({e[0].get<double>(), e[1].get<double>()});
      }
    if (!ok) {
      issues_->error(at(k), "expected an array of [lo, hi] pairs");
      return {};
    }
    (*out_)[k] = *j;
    return b;
  }

  Reader sub(const std::string& k) {
    const json* j = raw(k);
    return Reader(j, &(*out_)[k], at(k), *issues_);
  }

  std::vector<Reader> list(const std::string& k, bool required = true) {
    const json* j = raw(k);
    std::vector<Reader> out;
    if (!j) {
      if (required) missing(k);
      return out;
    }
    if (!j->is_array()) {
      issues_->error(at(k), "expected an array of objects");
      return out;
    }
    (*out_)[k] = json::array();
    auto& arr = (*out_)[k];
    for (std::size_t i = 0; i < j->size(); ++i) arr.push_back(json::object());
    for (std::size_t i = 0; i < j->size(); ++i) out.emplace_back(&(*j)[i], &arr[i], at(k) + "." + std::to_string(i), *issues_);
    return out;
  }

  // Keeps a raw JSON value in the resolved tree without interpreting it.
  void keep(const std::string& k) {
    if (const json* j = raw(k)) (*out_)[k] = *j;
  }

  void finish() {
    if (!in_) return;
    for (const auto& [k, v] : in_->items())
      if (!seen_.count(k)) issues_->error(at(k), "unknown key");
  }

 private:
  const json* in_;
  json* out_;
  std::string path_;
  Issues* issues_;
  std::set<std::string> seen_;
};

// ------------------------------------------------------------ shared parts

ManifoldSpec parse_manifold(Reader r) {
  auto& is = r.issues();
  const std::string kind = r.str("kind", "box");
  ManifoldSpec m;
  if (kind == "simplex") {
    if (r.has("bounds")) {
      r.raw("bounds");
      is.error(r.at("bounds"), "a simplex manifold takes no euclidean bounds section (bounds belong to kind 'box')");
    }
    const auto dim = r.opt_count("dim");
    if (!dim) r.missing("dim");
    else is.guard(r.path(), [&] { m = ManifoldSpec::simplex(*dim); });
  } else if (kind == "box") {
    const auto bounds = r.req_bounds("bounds");
    const auto dim = r.opt_count("dim");
    if (dim && *dim != bounds.size())
      is.error(r.at("dim"), "dim " + std::to_string(*dim) + " does not match " + std::to_string(bounds.size()) +
                                " bounds pairs");
    if (!bounds.empty()) is.guard(r.path(), [&] { m = ManifoldSpec::box(bounds); });
  } else {
    is.error(r.at("kind"), "unknown manifold kind '" + kind + "' (expected box or simplex)");
  }
  r.finish();
  return m;
}

std::vector<double> parse_center(Reader& r, const std::string& k) { return r.req_numbers(k); }

Potential parse_potential(Reader r) {
  auto& is = r.issues();
  const std::string kind = r.str("kind", "polynomial");
  Potential v = PolynomialPotential{};
  if (kind == "polynomial") {
    PolynomialPotential p;
    for (auto& t : r.list("terms")) {
      PolynomialTerm term;
      term.coeff = t.req_num("coeff");
      for (std::size_t e : t.counts("powers", {})) term.powers.push_back(static_cast<unsigned>(e));
      if (term.powers.empty()) is.error(t.at("powers"), "each term needs one exponent per coordinate");
      t.finish();
      p.terms.push_back(std::move(term));
    }
    v = p;
  } else if (kind == "gaussian_mixture") {
    GaussianMixturePotential g;
    g.confinement = r.num("confinement", 0.0);
    for (auto& w : r.list("wells")) {
      GaussianWell well;
      well.center = parse_center(w, "center");
      well.width = w.num("width", 1.0);
      well.depth = w.num("depth", 1.0);
      w.finish();
      g.wells.push_back(std::move(well));
    }
    v = g;
  } else {
    is.error(r.at("kind"), "unknown potential kind '" + kind + "' (expected polynomial or gaussian_mixture)");
  }
  r.finish();
  return v;
}

PerturbationWell parse_well(Reader r) {
  PerturbationWell w;
  w.center = parse_center(r, "center");
  w.width = r.num("width", 0.1);
  w.depth = r.num("depth", 0.1);
  r.finish();
  return w;
}

DriftSpec parse_drift(Reader r) {
  auto& is = r.issues();
  const std::string kind = r.str("kind", "gradient");
  DriftSpec d;
  if (kind == "gradient") {
    if (!r.has("potential")) r.missing("potential");
    d.base = GradientDrift{parse_potential(r.sub("potential"))};
  } else if (kind == "linear") {
    d.base = LinearDrift{r.req_matrix("matrix")};
  } else if (kind == "rotational") {
    if (!r.has("potential")) r.missing("potential");
    RotationalDrift rot;
    rot.potential = parse_potential(r.sub("potential"));
    rot.omega = r.num("omega", 0.0);
    std::size_t dim = 0;
    is.guard(r.path(), [&] { dim = potential_dim(rot.potential); });
    rot.center = r.numbers("center", std::vector<double>(dim, 0.0));
    const auto axes = r.counts("axes", {0, 1});
    if (axes.size() != 2) is.error(r.at("axes"), "expected two axis indices");
    else {
      rot.axis_i = axes[0];
      rot.axis_j = axes[1];
    }
    d.base = rot;
  } else if (kind == "reaction") {
    d.base = ReactionNetworkDrift{r.req_matrix("rates")};
  } else {
    is.error(r.at("kind"), "unknown drift kind '" + kind + "' (expected gradient, linear, rotational or reaction)");
  }
  d.tilt = r.numbers("tilt", {});
  for (auto& w : r.list("wells", false)) d.wells.push_back(parse_well(w));
  r.finish();
  return d;
}

SimConfig parse_sim(Reader r, SimConfig c, std::uint64_t seed, Workers workers) {
  auto& is = r.issues();
  c.noise = r.num("noise", c.noise);
  c.dt = r.num("dt", c.dt);
  c.n_steps = r.count("n_steps", c.n_steps);
  c.n_chains = r.count("n_chains", c.n_chains);
  if (auto b = r.opt_count("burn_in")) c.burn_in = *b;
  c.thin = r.count("thin", c.thin);
  if (auto rc = r.opt_num("reference_cell")) {
    c.reference_cell = *rc;
    if (!(*rc > 0.0)) is.error(r.at("reference_cell"), "must be positive");
  } else if (c.reference_cell) {
    r.num("reference_cell", *c.reference_cell);
  }
  c.seed = seed;
  c.workers = workers;
  r.finish();
  is.guard(r.path(), [&] { c.validate(); });
  return c;
}

TargetRegion parse_target(Reader r) {
  auto& is = r.issues();
  const std::string kind = r.str("kind", "ball");
  TargetRegion t;
  if (kind == "ball") {
    t = TargetRegion::ball(parse_center(r, "center"), r.req_num("radius"));
  } else if (kind == "box") {
    t = TargetRegion::box(r.req_bounds("bounds"));
  } else {
    is.error(r.at("kind"), "unknown target kind '" + kind + "' (expected ball or box)");
  }
  r.finish();
  return t;
}

MiOptions parse_mi(Reader r, std::uint64_t seed) {
  MiOptions m;
  m.k = r.integer("k", m.k);
  m.resamples = r.integer("resamples", m.resamples);
  m.max_pairs = r.count("max_pairs", m.max_pairs);
  m.level = r.num("level", m.level);
  m.deterministic_nats = r.num("deterministic_nats", m.deterministic_nats);
  m.seed = seed;
  r.finish();
  return m;
}

ThresholdOptions parse_threshold(Reader r, std::uint64_t seed) {
  auto& is = r.issues();
  ThresholdOptions t;
  t.f_min = r.num("f_min", t.f_min);
  t.c_min = r.num("c_min", t.c_min);
  t.kappa_max = r.num("kappa_max", t.kappa_max);
  t.tol = r.num("tol", t.tol);
  t.scan_points = r.count("scan_points", t.scan_points);
  const std::string den = r.str("denominator", "augmented");
  if (den == "substrate") t.denominator = EfficacyDenominator::substrate;
  else if (den != "augmented") is.error(r.at("denominator"), "expected augmented or substrate");
  t.mi = parse_mi(r.sub("mi"), seed);
  r.finish();
  is.guard(r.path(), [&] { t.validate(); });
  return t;
}

BreakdownOptions parse_breakdown_options(Reader& r, std::uint64_t seed, Workers workers) {
  BreakdownOptions o;
  o.trials = r.count("trials", o.trials);
  o.tol = r.num("tol", o.tol);
  o.stream_length = r.count("stream_length", o.stream_length);
  o.bootstrap = r.integer("bootstrap", o.bootstrap);
  o.level = r.num("level", o.level);
  auto det = r.sub("detectors");
  o.family.window_factors = det.numbers("window_factors", o.family.window_factors);
  o.family.threshold_factors = det.numbers("threshold_factors", o.family.threshold_factors);
  o.family.runs = det.counts("runs", o.family.runs);
  det.finish();
  o.seed = seed;
  o.workers = workers;
  r.issues().guard(r.path(), [&] { o.validate(); });
  return o;
}

std::string dotted_to_pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string tok;
  while (std::getline(ss, tok, '.')) p += "/" + tok;
  return p;
}

// ------------------------------------------------------------ kinds

MarkovPlan parse_markov(Reader r, const std::filesystem::path& base) {
  auto& is = r.issues();
  MarkovPlan p;
  const int sources = r.has("rates") + r.has("edges") + r.has("edge_list");
  if (sources != 1) is.error(r.path(), "give exactly one of rates, edges or edge_list");
  bool built = false;
  if (r.has("rates")) {
    if (auto m = r.opt_matrix("rates")) is.guard(r.at("rates"), [&] {
        p.rates = markov::RateMatrix(*m);
        built = true;
      });
  }
  if (r.has("edges")) {
    const json* j = r.raw("edges");
    std::string text;
    bool ok = j->is_array();
    if (ok)
      for (const auto& e : *j) {
        if (!e.is_array() || e.size() != 3 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned() ||
            !e[2].is_number()) {
          ok = false;
          break;
        }
        text += std::to_string(e[0].get<std::uint64_t>()) + " " + std::to_string(e[1].get<std::uint64_t>()) + " " +
                io::fmt(e[2].get<double>()) + "\n";
      }
    if (!ok) is.error(r.at("edges"), "expected an array of [i, j, k_ij] triples");
    else is.guard(r.at("edges"), [&] {
        p.rates = markov::parse_edge_list(text);
        built = true;
      });
    r.keep("edges");
  }
  if (auto file = r.opt_str("edge_list")) {
    std::filesystem::path path(*file);
    if (path.is_relative()) path = base / path;
    std::ifstream in(path);
    if (!in) is.error(r.at("edge_list"), "cannot read '" + path.string() + "'");
    else is.guard(r.at("edge_list"), [&] {
        p.rates = markov::parse_edge_list(in);
        built = true;
      });
  }
  p.affinity_tol = r.num("affinity_tol", p.affinity_tol);
  p.rel_tol = r.num("rel_tol", p.rel_tol);
  if (!(p.affinity_tol > 0.0)) is.error(r.at("affinity_tol"), "must be positive");
  if (!(p.rel_tol > 0.0)) is.error(r.at("rel_tol"), "must be positive");
  r.finish();
  if (built && sources == 1) {
    is.guard(r.path(), [&] { p.rates.require_strongly_connected(); });
    is.guard(r.path(), [&] { p.rates.require_reversible(); });
  }
  return p;
}

FieldPlan parse_field(Reader r, std::uint64_t seed, Workers workers) {
  auto& is = r.issues();
  const std::size_t before = is.count();
  FieldPlan p;
  p.manifold = parse_manifold(r.sub("manifold"));
  p.drift = parse_drift(r.sub("drift"));
  p.sim = parse_sim(r.sub("sim"), SimConfig{}, seed, workers);
  auto g = r.sub("grid");
  const auto cells = g.opt_count("cells_per_axis");
  p.field.support_threshold = g.count("support_threshold", p.field.support_threshold);
  p.field.replicate_groups = g.count("replicate_groups", p.field.replicate_groups);
  g.finish();
  if (p.field.support_threshold < 1) is.error(g.at("support_threshold"), "must be at least 1");
  if (p.field.replicate_groups < 2) is.error(g.at("replicate_groups"), "must be at least 2");
  auto c = r.sub("collinearity");
  p.collinearity.eps_angle = c.num("eps_angle", p.collinearity.eps_angle);
  p.collinearity.eps_grad_fraction = c.num("eps_grad_fraction", p.collinearity.eps_grad_fraction);
  p.collinearity.significance_z = c.num("significance_z", p.collinearity.significance_z);
  c.finish();
  if (!(p.collinearity.eps_angle >= 0.0 && p.collinearity.eps_angle <= 1.0))
    is.error(c.at("eps_angle"), "must lie in [0, 1]");
  if (!(p.collinearity.eps_grad_fraction >= 0.0)) is.error(c.at("eps_grad_fraction"), "must be non-negative");
  if (!(p.collinearity.significance_z >= 0.0)) is.error(c.at("significance_z"), "must be non-negative");
  p.trajectory = r.flag("trajectory", false);
  r.finish();
  if (is.count() == before) {
    is.guard(r.at("grid"), [&] { p.grid = GridGeometry::for_manifold(p.manifold, cells); });
    is.guard(r.path(), [&] { check_integration(p.manifold, p.drift, p.sim); });
  }
  return p;
}

SelfRefPlan parse_selfref(Reader r, std::uint64_t seed, Workers workers) {
  auto& is = r.issues();
  const std::size_t before = is.count();
  SelfRefPlan p;
  p.system.manifold = parse_manifold(r.sub("manifold"));
  p.system.substrate = parse_drift(r.sub("substrate"));
  p.system.projection = r.req_matrix("projection");
  auto fb = r.sub("feedback");
  const std::string fk = fb.str("kind", "linear");
  if (fk == "saturating") p.system.feedback.kind = FeedbackKind::saturating;
  else if (fk != "linear") is.error(fb.at("kind"), "expected linear or saturating");
  p.system.feedback.gain = fb.req_matrix("gain");
  fb.finish();
  const std::string mode = r.str("mode", "threshold");
  if (mode == "evaluate") p.evaluate_only = true;
  else if (mode != "threshold") is.error(r.at("mode"), "expected threshold or evaluate");
  p.system.kappa = r.num("kappa", 0.0);
  if (auto tau = r.opt_count("tau")) p.system.tau = *tau;
  p.sim = parse_sim(r.sub("sim"), SimConfig{}, seed, workers);
  p.threshold = parse_threshold(r.sub("threshold"), seed);
  r.finish();
  if (is.count() == before) {
    auto at_kappa = [&](double k) {
      SelfRefSystem s = p.system;
      s.kappa = k;
      is.guard(r.path(), [&] { check_selfref_integration(s, p.sim); });
    };
    at_kappa(p.evaluate_only ? p.system.kappa : 0.0);
    if (!p.evaluate_only && is.count() == before) at_kappa(p.threshold.kappa_max);
  }
  return p;
}

BreakdownPlan parse_breakdown(Reader r, std::uint64_t seed, Workers workers) {
  auto& is = r.issues();
  BreakdownPlan p;
  if (!r.has("n")) r.missing("n");
  p.ns = r.counts("n", {});
  p.delta = r.num("delta", p.delta);
  p.options = parse_breakdown_options(r, seed, workers);
  r.finish();
  is.guard(r.at("delta"), [&] { require_bounded_shift(p.delta); });
  for (std::size_t n : p.ns) {
    if (n < 2) {
      is.error(r.at("n"), "N must be at least 2, got " + std::to_string(n));
      continue;
    }
    is.guard(r.at("n"), [&] { make_ontology(n, p.delta, seed); });
  }
  return p;
}

SynergyPlan parse_synergy(Reader r, std::uint64_t seed, Workers workers) {
  auto& is = r.issues();
  const std::size_t before = is.count();
  SynergyPlan p;
  p.manifold = parse_manifold(r.sub("manifold"));
  if (const json* dj = r.raw("drift")) p.drift_json = *dj;
  {
    json resolved;
    Issues local;
    Reader dr(r.has("drift") ? &p.drift_json : nullptr, &resolved, r.at("drift"), local);
    if (!r.has("drift")) r.missing("drift");
    p.base = parse_drift(dr);
    is.errors.insert(is.errors.end(), local.errors.begin(), local.errors.end());
  }
  p.sim = parse_sim(r.sub("sim"), SimConfig{}, seed, workers);
  const bool has_a = r.has("well_a"), has_b = r.has("well_b");
  if (has_a != has_b) is.error(r.path(), "give both well_a and well_b or neither");
  if (has_a) p.well_a = parse_well(r.sub("well_a"));
  if (has_b) p.well_b = parse_well(r.sub("well_b"));
  if (!r.has("target")) r.missing("target");
  p.target = parse_target(r.sub("target"));
  const std::string metric = r.str("metric", "yield");
  if (metric == "depth") p.options.metric = SynergyMetric::depth;
  else if (metric != "yield") is.error(r.at("metric"), "expected yield or depth");
  auto bs = r.sub("bootstrap");
  p.options.bootstrap.resamples = bs.integer("resamples", p.options.bootstrap.resamples);
  p.options.bootstrap.level = bs.num("level", p.options.bootstrap.level);
  p.options.bootstrap.seed = seed;
  bs.finish();
  if (p.options.bootstrap.resamples < 0) is.error(bs.at("resamples"), "must be non-negative");
  if (!(p.options.bootstrap.level > 0.0 && p.options.bootstrap.level < 1.0))
    is.error(bs.at("level"), "must lie in (0, 1)");
  if (r.has("sweep")) {
    auto sw = r.sub("sweep");
    p.sweep = sw.req_numbers("values");
    for (auto& pr : sw.list("paths")) {
      SweepPath path;
      const auto dotted = pr.opt_str("path");
      if (!dotted) pr.missing("path");
      else path.pointer = dotted_to_pointer(*dotted);
      path.scale = pr.num("scale", 1.0);
      path.offset = pr.num("offset", 0.0);
      pr.finish();
      if (dotted) {
        const json::json_pointer ptr(path.pointer);
        if (!p.drift_json.contains(ptr) || !p.drift_json.at(ptr).is_number())
          is.error(pr.at("path"), "'" + *dotted + "' does not name a number in the drift section");
      }
      p.sweep_paths.push_back(path);
    }
    sw.finish();
    if (p.sweep.size() < 7) is.error(sw.at("values"), "a yield curve needs at least 7 sweep values");
  }
  if (!has_a && !r.has("sweep")) is.error(r.path(), "nothing to run: give well_a and well_b, a sweep, or both");
  r.finish();
  if (is.count() != before) return p;

  is.guard(r.at("target"), [&] { p.target.validate(p.manifold); });
  is.guard(r.at("drift"), [&] { check_integration(p.manifold, p.base, p.sim); });
  if (p.well_a && is.count() == before) {
    const std::size_t dim = p.base.dim();
    is.guard(r.at("well_a"), [&] { p.well_a->validate(dim); });
    is.guard(r.at("well_b"), [&] { p.well_b->validate(dim); });
    if (is.count() == before) {
      if (!p.well_a->disjoint_from(*p.well_b)) is.error(r.path(), "wells A and B have overlapping supports");
      if (p.target.intersects(*p.well_a) && p.target.intersects(*p.well_b))
        is.error(r.at("target"), "target region meets the supports of both wells");
      DriftSpec both = p.base;
      both.wells.push_back(*p.well_a);
      both.wells.push_back(*p.well_b);
      is.guard(r.path(), [&] { check_integration(p.manifold, both, p.sim); });
    }
  }
  for (double v : p.sweep) {
    if (is.count() != before) break;
    is.guard(r.at("sweep") + " at " + io::fmt(v), [&] { check_integration(p.manifold, p.drift_at(v), p.sim); });
  }
  return p;
}

ScalingPlan parse_scaling(Reader r, std::uint64_t seed, Workers workers) {
  auto& is = r.issues();
  ScalingPlan p;
  auto fams = r.list("families");
  if (fams.empty() && r.has("families")) is.error(r.at("families"), "needs at least one family");
  std::size_t index = 0;
  for (auto& f : fams) {
    const std::size_t before = is.count();
    const std::string id = f.str("id", "family" + std::to_string(index++));
    const auto ns = f.counts("ns", {});
    if (!f.has("ns")) f.missing("ns");
    const std::string kind = f.str("kind", "synthetic");
    SystemFamily fam;
    if (kind == "planted") {
      auto law = [&](Reader l, double c_def, double g_def) {
        const double c = l.num("c", c_def), g = l.num("gamma", g_def);
        l.finish();
        if (!(c > 0.0)) is.error(l.at("c"), "must be positive");
        return power_law(c, g);
      };
      auto alpha = law(f.sub("alpha"), 1.0, 1.0);
      auto kappa = law(f.sub("kappa"), 1.0, 0.5);
      const double noise = f.num("log_noise", 0.0);
      if (!(noise >= 0.0)) is.error(f.at("log_noise"), "must be non-negative");
      fam = planted_family(id, ns, alpha, kappa, noise);
    } else if (kind == "synthetic") {
      JointScalingConfig cfg;
      cfg.delta = f.num("delta", cfg.delta);
      auto bo = f.sub("breakdown");
      cfg.breakdown = parse_breakdown_options(bo, seed, workers);
      bo.finish();
      auto sr = f.sub("selfref");
      cfg.selfref.gain = sr.num("gain", cfg.selfref.gain);
      cfg.selfref.gain_power = sr.num("gain_power", cfg.selfref.gain_power);
      cfg.selfref.half_width = sr.num("half_width", cfg.selfref.half_width);
      sr.finish();
      if (!(cfg.selfref.gain > 0.0)) is.error(sr.at("gain"), "must be positive");
      if (!(cfg.selfref.half_width > 0.0)) is.error(sr.at("half_width"), "must be positive");
      cfg.sim = parse_sim(f.sub("sim"), JointScalingConfig::default_sim(), seed, workers);
      cfg.threshold = parse_threshold(f.sub("threshold"), seed);
      cfg.seed = seed;
      cfg.workers = workers;
      if (is.count() == before) {
        is.guard(f.at("delta"), [&] { fam = synthetic_family(id, ns, cfg); });
        for (std::size_t n : ns) {
          if (is.count() != before) break;
          if (n < 2) continue;
          is.guard(f.at("ns"), [&] { make_ontology(n, cfg.delta, seed); });
          for (double k : {0.0, cfg.threshold.kappa_max}) {
            is.guard(f.path() + " N=" + std::to_string(n), [&] {
              auto s = default_selfref_system(n, cfg.selfref);
              s.kappa = k;
              check_selfref_integration(s, cfg.sim);
            });
          }
        }
      }
    } else {
      is.error(f.at("kind"), "unknown family kind '" + kind + "' (expected synthetic or planted)");
    }
    f.finish();
    fam.id = id;
    fam.ns = ns;
    if (is.count() == before) is.guard(f.path(), [&] { fam.validate(); });
    p.families.push_back(std::move(fam));
  }
  auto v = r.sub("verdicts");
  p.thresholds.min_r_squared = v.num("min_r_squared", p.thresholds.min_r_squared);
  p.thresholds.gamma1_tol = v.num("gamma1_tol", p.thresholds.gamma1_tol);
  p.thresholds.se_multiple = v.num("se_multiple", p.thresholds.se_multiple);
  v.finish();
  if (!(p.thresholds.gamma1_tol > 0.0)) is.error(v.at("gamma1_tol"), "must be positive");
  if (!(p.thresholds.se_multiple > 0.0)) is.error(v.at("se_multiple"), "must be positive");
  r.finish();
  return p;
}

}  // namespace

const std::vector<std::string>& kind_names() {
  static const std::vector<std::string> names{"markov", "field", "selfref", "breakdown", "synergy", "scaling"};
  return names;
}

std::string to_string(Kind kind) { return kind_names()[static_cast<std::size_t>(kind)]; }

ConfigListError::ConfigListError(std::vector<std::string> issues)
    : ConfigError(issues.size() == 1 ? issues[0]
                                     : std::to_string(issues.size()) + " configuration errors: " + join(issues, "; ")),
      issues_(std::move(issues)) {}

DriftSpec SynergyPlan::drift_at(double value) const {
  json j = drift_json;
  for (const auto& p : sweep_paths) j[json::json_pointer(p.pointer)] = p.offset + p.scale * value;
  json resolved;
  Issues is;
  DriftSpec d = parse_drift(Reader(&j, &resolved, "synergy.drift", is));
  if (!is.errors.empty()) throw ConfigListError(is.errors);
  return d;
}

std::string Experiment::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved.dump())));
  return buf;
}

json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void apply_set(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &config;
  std::stringstream ss(key);
  std::string tok;
  std::vector<std::string> toks;
  while (std::getline(ss, tok, '.')) toks.push_back(tok);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    if (t.empty()) throw ConfigError("--set key '" + key + "' has an empty component");
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw ConfigError("--set key '" + key + "': '" + t + "' is not an array index");
      }
      if (idx >= node->size()) throw ConfigError("--set key '" + key + "': index " + t + " out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError("--set key '" + key + "': '" + t + "' is inside a non-object value");
      node = &(*node)[t];
    }
  }
  *node = value;
}

Experiment prepare(json config, const std::filesystem::path& base_dir, const Overrides& overrides) {
  for (const auto& s : overrides.set) apply_set(config, s);
  if (!config.is_object()) throw ConfigListError({"config must be a JSON object"});

  Issues is;
  Experiment ex;
  Reader top(&config, &ex.resolved, "", is);

  std::vector<std::string> present;
  for (const auto& k : kind_names())
    if (config.contains(k)) present.push_back(k);
  if (present.empty()) throw ConfigListError({"no experiment section; expected one of " + join(kind_names(), ", ")});
  if (present.size() > 1)
    throw ConfigListError({"config has sections '" + join(present, "' and '") +
                           "'; exactly one experiment section is allowed"});
  const auto idx = static_cast<std::size_t>(
      std::find(kind_names().begin(), kind_names().end(), present[0]) - kind_names().begin());
  ex.kind = static_cast<Kind>(idx);
  if (auto k = top.opt_str("kind"); k && *k != present[0])
    is.error("kind", "says '" + *k + "' but the experiment section is '" + present[0] + "'");

  if (auto s = top.opt_u64("seed")) {
    ex.seed = *s;
  } else if (!top.has("seed") && !overrides.seed) {
    is.warnings.push_back("seed not set; using the default seed 1");
  }
  if (overrides.seed) ex.seed = *overrides.seed;
  ex.resolved["seed"] = ex.seed;
  if (auto o = top.opt_str("output")) ex.output = *o;
  if (overrides.out) ex.output = *overrides.out;
  ex.verbosity = top.integer("verbosity", 0);
  if (overrides.workers && *overrides.workers < 1) is.error("--workers", "must be at least 1");
  ex.workers = overrides.single_thread ? Workers::single()
               : overrides.workers    ? Workers{std::max(1, *overrides.workers)}
                                      : Workers::hardware();

  auto section = top.sub(present[0]);
  switch (ex.kind) {
    case Kind::markov: ex.plan = parse_markov(section, base_dir); break;
    case Kind::field: ex.plan = parse_field(section, ex.seed, ex.workers); break;
    case Kind::selfref: ex.plan = parse_selfref(section, ex.seed, ex.workers); break;
    case Kind::breakdown: ex.plan = parse_breakdown(section, ex.seed, ex.workers); break;
    case Kind::synergy: ex.plan = parse_synergy(section, ex.seed, ex.workers); break;
    case Kind::scaling: ex.plan = parse_scaling(section, ex.seed, ex.workers); break;
  }
  top.finish();
  if (!is.errors.empty()) throw ConfigListError(is.errors);
  ex.warnings = std::move(is.warnings);
  return ex;
}

}  // namespace twofield::cli
