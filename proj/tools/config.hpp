#pragma once

// Experiment configuration: JSON loading, dotted-path overrides, and the
// parse + check pass shared by `run` and `validate`. Everything that can be
// rejected as a configuration error is rejected here, before any simulation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "twofield/breakdown.hpp"
#include "twofield/error.hpp"
#include "twofield/fields.hpp"
#include "twofield/markov.hpp"
#include "twofield/scaling.hpp"
#include "twofield/selfref.hpp"
#include "twofield/synergy.hpp"

namespace twofield::cli {

using json = nlohmann::json;

enum class Kind { markov, field, selfref, breakdown, synergy, scaling };

const std::vector<std::string>& kind_names();
std::string to_string(Kind kind);

// Every violation found while checking a configuration.
class ConfigListError : public ConfigError {
 public:
  explicit ConfigListError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct MarkovPlan {
  markov::RateMatrix rates{2};
  double affinity_tol = markov::kDefaultAffinityTolerance;
  double rel_tol = 1e-9;
};

struct FieldPlan {
  ManifoldSpec manifold;
  DriftSpec drift;
  SimConfig sim;
  GridGeometry grid;
  FieldOptions field;
  CollinearityOptions collinearity;
  bool trajectory = false;
};

struct SelfRefPlan {
  SelfRefSystem system;
  SimConfig sim;
  ThresholdOptions threshold;
  bool evaluate_only = false;  // single kappa instead of the threshold search
};

struct BreakdownPlan {
  std::vector<std::size_t> ns;
  double delta = 0.5;
  BreakdownOptions options;
};

struct SweepPath {
  std::string pointer;  // JSON pointer inside the drift section
  double scale = 1.0;
  double offset = 0.0;
};

struct SynergyPlan {
  ManifoldSpec manifold;
  DriftSpec base;
  SimConfig sim;
  std::optional<PerturbationWell> well_a, well_b;
  TargetRegion target;
  SynergyOptions options;
  std::vector<double> sweep;
  std::vector<SweepPath> sweep_paths;
  json drift_json;

  DriftSpec drift_at(double value) const;
};

struct ScalingPlan {
  std::vector<SystemFamily> families;
  VerdictThresholds thresholds;
};

using Plan = std::variant<MarkovPlan, FieldPlan, SelfRefPlan, BreakdownPlan, SynergyPlan, ScalingPlan>;

struct Overrides {
  std::vector<std::string> set;  // key=value, dotted keys
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool single_thread = false;
  std::optional<std::string> out;
};

struct Experiment {
  Kind kind = Kind::markov;
  std::uint64_t seed = 1;
  Workers workers = Workers::single();
  std::optional<std::string> output;
  int verbosity = 0;
  Plan plan;
  json resolved;  // effective configuration with defaults filled in
  std::vector<std::string> warnings;

  std::string config_hash() const;
};

// Unreadable files and malformed JSON are configuration errors.
json load_config(const std::filesystem::path& path);

// Sets a dotted path (`breakdown.delta`, `families.0.ns`) to a value parsed
// as JSON when possible and kept as a string otherwise.
void apply_set(json& config, const std::string& assignment);

// Parses and checks the configuration without running anything. Throws
// ConfigListError listing every violation.
Experiment prepare(json config, const std::filesystem::path& base_dir, const Overrides& overrides);

}  // namespace twofield::cli
