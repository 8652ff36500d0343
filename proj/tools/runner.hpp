#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"

namespace twofield::cli {

inline constexpr const char* kVersion = "0.1.0";

// Output files in write order, assembled in memory.
using Outputs = std::vector<std::pair<std::string, std::string>>;

Outputs execute(const Experiment& experiment);

// --out, then the config's output key, then $TWOFIELD_OUT/<kind>-<hash>,
// then ./twofield-out/<kind>-<hash>.
std::filesystem::path output_dir(const Experiment& experiment);

std::string manifest(const Experiment& experiment, const Outputs& outputs, double seconds);

// Writes every output and then the manifest, each through a rename.
void write_outputs(const std::filesystem::path& dir, const Outputs& outputs, const std::string& manifest_text);

struct RunResult {
  std::filesystem::path dir;
  Outputs outputs;
  double seconds = 0.0;
};

RunResult run(const Experiment& experiment);

int exit_code(const std::exception& e);
// One-line JSON error record for stderr.
std::string error_json(const std::exception& e);

}  // namespace twofield::cli
