#pragma once

// Experiment orchestration behind the command-line tool: schema-versioned
// JSON configs with named presets, and the train / reference / solve /
// sweep / report / check commands. Every command writes into its own
// subdirectory of the run directory and refuses to replace existing output
// unless forced.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "noctl/control_opt.hpp"
#include "noctl/network.hpp"
#include "noctl/problems.hpp"
#include "noctl/refsolve.hpp"
#include "noctl/training.hpp"

namespace noctl {

inline constexpr int kSchemaVersion = 1;

struct NetConfig {
  NetKind kind = NetKind::PlainFC;
  int hidden = 64;
  int depth = 3;
  int output = 64;
};

struct TrainingBlock {
  NetConfig net;
  std::size_t functions = 2000;
  TrainConfig train;  // train.seed is replaced by a derived stream
};

struct RoutineBlock {
  double gd_lr = 0.2;
  double adam_lr = 0.01;
  int iterations = 2000;
  ArmijoConfig armijo;
  std::optional<double> grad_tol = 1e-8;

  RoutineConfig for_routine(Routine r) const;
};

struct ReferenceBlock {
  DalConfig dal;   // ODEs
  int refine = 2;  // PDE target solve
};

struct SweepBlock {
  std::vector<double> mu{0.0, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> lambda{0.0, 0.1, 1.0, 10.0};
  double lr = 0.1;
  int iterations = 2000;
};

struct ExperimentConfig {
  std::string name;
  ProblemKind problem = ProblemKind::LinearODE;
  std::optional<std::string> checkpoint;
  std::optional<TrainingBlock> training;
  std::vector<int> costs{1, 2, 3};
  PenaltyConfig penalty;
  RoutineBlock routines;
  ReferenceBlock reference;
  SweepBlock sweep;
  std::string out;
  std::uint64_t seed = 1;
  bool state_mse = false;

  ProblemSpec problem_spec() const { return make_problem(problem); }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

// JSON text round trip. Parsing starts from the named "preset" when one is
// given and applies the remaining keys as a merge patch; unknown keys and a
// missing or different schema_version are errors.
ExperimentConfig parse_config(const std::string& text);
std::string dump_config(const ExperimentConfig& config);
// A file path, or a preset name when no such file exists.
ExperimentConfig load_config(const std::string& path_or_preset);

// Every random stream derives from the global seed.
enum class Stream : std::uint64_t { Init = 1, Sampling = 2, Shuffle = 3, Tracking = 4 };
std::uint64_t stream_seed(const ExperimentConfig& config, Stream s, std::uint64_t index = 0);

struct RunOptions {
  std::filesystem::path out;
  bool force = false;
  std::vector<Routine> routines{Routine::GD, Routine::ADAM, Routine::BFGS};
  std::ostream* log = nullptr;
};

struct ResultRow {
  std::string problem;
  std::string routine;
  int cost = 1;
  double mse = 0.0;
  double sd = 0.0;
  int iterations = 0;
  double J_mu = 0.0;
  double cost_value = 0.0;
  double mean_residual = 0.0;
  std::string status;  // stop reason, or "failed"
  std::optional<double> state_mse;
  double wall_seconds = 0.0;  // printed, not written
};

struct SweepRow {
  int cost = 1;
  double mu = 0.0;
  double lambda = 0.0;
  double mse = 0.0;
  double mean_residual = 0.0;
  double J_mu = 0.0;
  double cost_value = 0.0;
  std::string status;
};

struct Reference {
  std::vector<double> control;
  Matrix target;  // PDE only
};

DeepOnetModel cmd_train(const ExperimentConfig& config, const RunOptions& opts);
std::vector<Reference> cmd_reference(const ExperimentConfig& config, const RunOptions& opts);
std::vector<ResultRow> cmd_solve(const ExperimentConfig& config, const RunOptions& opts);
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, const RunOptions& opts);

struct ReportCell {
  std::string problem, routine;
  int cost = 1;
  double mse = 0.0, sd = 0.0;
  bool best = false;
};
// Collects every results.csv below `dir` into report.csv and report.txt.
std::vector<ReportCell> cmd_report(const std::filesystem::path& dir, bool force, std::ostream* log = nullptr);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};
// `corrupt_gradient` perturbs the analytic gradients so the FD checks must fail.
std::vector<CheckResult> cmd_check(bool corrupt_gradient = false, std::ostream* log = nullptr);

// The individual properties. Gradient checks use `instances` random draws
// per problem and a relative bound of 1e-5.
CheckResult check_param_gradients(int instances, bool corrupt = false);
CheckResult check_control_gradients(int instances, bool corrupt = false);
CheckResult check_rk4_order();
CheckResult check_trapezoid();
CheckResult check_pde_convergence();
CheckResult check_riccati_dal();
CheckResult check_bfgs_inverse();
CheckResult check_adam_first_step();
CheckResult check_bfgs_monotone();

// Readers for the files the commands write.
std::vector<double> read_control(const std::filesystem::path& path);
Matrix read_matrix(const std::filesystem::path& path);
Reference load_reference(const ExperimentConfig& config, const std::filesystem::path& out, int cost);
DeepOnetModel load_model(const ExperimentConfig& config, const std::filesystem::path& out);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

}  // namespace noctl
