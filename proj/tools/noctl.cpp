// Command-line front end: noctl {train,reference,solve,sweep,report,check}.
// Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 check failure.

#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "noctl/harness.hpp"

using namespace noctl;

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string routine = "all";
  bool force = false;
  bool state_mse = false;
  bool print_config = false;
  bool corrupt = false;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "config file or preset name")->required();
  cmd->add_option("--out", a.out, "run directory (default: the config's out)");
  cmd->add_option("--seed", a.seed, "global seed");
  cmd->add_flag("--force", a.force, "replace existing output");
  cmd->add_flag("--print-config", a.print_config, "print the resolved config and exit");
}

std::vector<Routine> routines(const std::string& s) {
  if (s == "all") return {Routine::GD, Routine::ADAM, Routine::BFGS};
  try {
    return {routine_from_string(s)};
  } catch (const Error& e) {
    throw ConfigError("routine", e.what());
  }
}

int run(const std::string& name, const Args& a) {
  if (name == "check") {
    const auto results = cmd_check(a.corrupt, &std::cout);
    int failed = 0;
    for (const CheckResult& r : results) failed += r.passed ? 0 : 1;
    std::cout << fmt::format("{} of {} checks passed\n", results.size() - failed, results.size());
    return failed ? 3 : 0;
  }
  if (name == "report") {
    cmd_report(a.out, a.force, &std::cout);
    return 0;
  }
  ExperimentConfig config = load_config(a.config);
  if (a.seed) config.seed = *a.seed;
  if (a.state_mse) config.state_mse = true;
  config.validate();
  if (a.print_config) {
    std::cout << dump_config(config);
    return 0;
  }
  RunOptions opts;
  opts.out = a.out.empty() ? config.out : a.out;
  if (opts.out.empty()) throw ConfigError("out", "no output directory in the config or on the command line");
  opts.force = a.force;
  opts.routines = routines(a.routine);
  opts.log = &std::cout;
  if (name == "train") {
    cmd_train(config, opts);
  } else if (name == "reference") {
    cmd_reference(config, opts);
  } else if (name == "solve") {
    const auto rows = cmd_solve(config, opts);
    for (const ResultRow& r : rows)
      if (r.status == "failed") return 2;
  } else if (name == "sweep") {
    const auto rows = cmd_sweep(config, opts);
    for (const SweepRow& r : rows)
      if (r.status == "failed") return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operator-network surrogates for discretized optimal control"};
  app.require_subcommand(1);
  Args a;

  add_common(app.add_subcommand("train", "train a DeepONet physics-informed"), a);
  add_common(app.add_subcommand("reference", "compute reference controls (adjoint looping or tracking targets)"), a);
  auto* solve = app.add_subcommand("solve", "optimize the control through the trained model");
  add_common(solve, a);
  solve->add_option("--routine", a.routine, "gd, adam, bfgs or all")
      ->check(CLI::IsMember({"gd", "adam", "bfgs", "all"}));
  solve->add_flag("--state-mse", a.state_mse, "also report the MSE of the simulated state");
  add_common(app.add_subcommand("sweep", "ADAM over the penalty/regularization grid"), a);
  auto* report = app.add_subcommand("report", "summarize every results.csv below a directory");
  report->add_option("--out", a.out, "result directory")->required();
  report->add_flag("--force", a.force, "replace an existing report");
  auto* check = app.add_subcommand("check", "run the oracle self-checks");
  check->add_flag("--corrupt-gradient", a.corrupt, "test hook: perturb analytic gradients")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, a);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const CheckpointVersionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const CheckpointShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const CheckpointTruncatedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }
}
