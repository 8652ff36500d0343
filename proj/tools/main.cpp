#include <iostream>

#include "CLI11.hpp"
#include "config.hpp"
#include "runner.hpp"
#include "twofield/io.hpp"

using namespace twofield::cli;

namespace {

struct Args {
  std::string config;
  Overrides overrides;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("config", a.config, "experiment configuration (JSON)")->required();
  cmd->add_option("--set", a.overrides.set, "override a dotted key, e.g. --set breakdown.delta=0.3");
  cmd->add_option("--seed", a.seed, "master seed (overrides the config)");
  cmd->add_option("--workers", a.workers, "worker threads");
  cmd->add_flag("--single-thread", a.overrides.single_thread, "run with one worker");
  cmd->add_option("--out", a.out, "output directory");
}

Experiment load(Args& a, CLI::App* cmd) {
  if (cmd->count("--seed")) a.overrides.seed = a.seed;
  if (cmd->count("--workers")) a.overrides.workers = a.workers;
  if (cmd->count("--out")) a.overrides.out = a.out;
  const std::filesystem::path path(a.config);
  return prepare(load_config(path), path.parent_path(), a.overrides);
}

void print_warnings(const Experiment& ex) {
  for (const auto& w : ex.warnings) std::cerr << json{{"warning", w}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary field diagnostics, breakdown and coupling experiments"};
  app.require_subcommand(1);
  Args args;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write its outputs");
  add_common(run_cmd, args);
  auto* validate_cmd = app.add_subcommand("validate", "check a configuration without running it");
  add_common(validate_cmd, args);
  app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("version")) {
      std::cout << "twofield " << kVersion << "\n";
      return 0;
    }
    if (app.got_subcommand("validate")) {
      const Experiment ex = load(args, validate_cmd);
      print_warnings(ex);
      std::cout << "OK " << to_string(ex.kind) << "\n" << ex.resolved.dump(2) << "\n";
      return 0;
    }
    const Experiment ex = load(args, run_cmd);
    print_warnings(ex);
    const RunResult r = run(ex);
    std::cout << "wrote " << r.dir.string() << "\n";
    for (const auto& [name, content] : r.outputs)
      if (name == "summary.txt") std::cout << content;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << error_json(e) << "\n";
    if (const auto* list = dynamic_cast<const ConfigListError*>(&e))
      for (const auto& issue : list->issues()) std::cerr << "  " << issue << "\n";
    return exit_code(e);
  }
}
