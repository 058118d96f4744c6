#pragma once

// Control optimization through a trained DeepONet: the discretized cost plus
// a residual penalty and a second-difference smoothing term is minimized over
// the control values at the sensor nodes, starting from u = 0.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noctl/cost.hpp"
#include "noctl/errors.hpp"
#include "noctl/network.hpp"
#include "noctl/problems.hpp"

namespace noctl {

struct PenaltyConfig {
  double mu = 0.0;      // residual penalty
  double lambda = 0.0;  // second-difference regularization
  void validate() const;
};

enum class Routine { GD, ADAM, BFGS };
std::string to_string(Routine r);
Routine routine_from_string(const std::string& s);

struct ArmijoConfig {
  int max_trials = 20;
  double factor = 0.5;
  double c = 1e-4;
  void validate() const;
};

struct RoutineConfig {
  Routine routine = Routine::ADAM;
  double lr = 0.01;  // GD and ADAM
  int iterations = 2000;
  ArmijoConfig armijo;
  std::optional<double> grad_tol;  // stop once ||g||_inf falls below
  void validate() const;
};

// Cost of a state field y given on the problem's query grid (query order) and
// control u on the sensor grid. The tracking cost is the 2-D trapezoid
// integral of (target - y)^2 over [0,1]^2.
double cost_value(const CostSpec& cost, const ProblemSpec& problem, std::span<const double> y,
                  std::span<const double> u);

// Sum over interior nodes of (u[i+1] - 2u[i] + u[i-1])^2.
double second_diff_reg(std::span<const double> u);

struct CostParts {
  double total = 0.0;
  double cost = 0.0;
  double penalty = 0.0;  // mu * mean residual
  double reg = 0.0;      // lambda * second_diff_reg
  bool floored = false;  // the 1/y guard clipped at least one node
};

// Evaluates the penalized cost and its control gradient for one model.
// Trunk features do not depend on u and are computed once.
class ControlObjective {
 public:
  ControlObjective(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                   const PenaltyConfig& penalty);

  CostParts value(std::span<const double> u) const;
  CostParts value_and_grad(std::span<const double> u, std::vector<double>& grad) const;
  // Network state on the grid, in query order.
  std::vector<double> state(std::span<const double> u) const;
  double mean_residual(std::span<const double> u) const;

  const ProblemSpec& problem() const { return problem_; }
  int size() const { return problem_.sensors(); }

 private:
  CostParts evaluate(std::span<const double> u, std::vector<double>* grad) const;

  DeepOnetModel model_;
  ProblemSpec problem_;
  CostSpec cost_;
  PenaltyConfig penalty_;
  TrunkValues trunk_;
  Matrix weights_;   // 1 x points, trapezoid weights of the cost
  Matrix target_;    // 1 x points (tracking only)
  Matrix second_;    // sensors x (sensors - 2), u * second_ = second differences
};

CostParts penalized_cost(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                         const PenaltyConfig& penalty, std::span<const double> u);
std::vector<double> control_gradient(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                                     const PenaltyConfig& penalty, std::span<const double> u);

using Objective = std::function<double(std::span<const double>)>;

// Largest alpha in {1, factor, factor^2, ...} (max_trials candidates) with
// f(x + alpha d) <= f(x) + c alpha g.d. Falls back to d = -g when d is not a
// descent direction. Throws NumericalError when every trial fails.
struct LineSearchResult {
  double alpha = 0.0;
  double f = 0.0;
  int trials = 0;
  bool fell_back = false;
};
LineSearchResult armijo_search(const Objective& f, std::span<const double> x, double fx, std::span<const double> d,
                               std::span<const double> g, const ArmijoConfig& config = {});

struct BfgsState {
  Matrix H;  // inverse Hessian approximation
  static BfgsState identity(int n);
};

// Standard inverse update; skipped when s.y <= 1e-10.
BfgsState bfgs_update(const BfgsState& state, std::span<const double> s, std::span<const double> y);

struct OptimizeRow {
  int iter = 0;
  CostParts parts;
  double grad_norm = 0.0;  // infinity norm
};

struct OptimizeResult {
  std::vector<double> control;
  std::vector<OptimizeRow> history;
  int iterations = 0;
  std::string stop;  // "budget", "grad_tol" or "line_search"
  bool floored = false;
};

class OptimizationAborted : public NumericalError {
 public:
  OptimizationAborted(const std::string& what, OptimizeResult partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const OptimizeResult& partial() const noexcept { return partial_; }

 private:
  OptimizeResult partial_;
};

OptimizeResult optimize_control(const ControlObjective& objective, const RoutineConfig& routine,
                                std::optional<std::vector<double>> initial = std::nullopt);
OptimizeResult optimize_control(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                                const PenaltyConfig& penalty, const RoutineConfig& routine);

struct MseReport {
  double mse = 0.0;
  double sd = 0.0;
};
// Mean square and population standard deviation of u - ref.
MseReport mse_report(std::span<const double> u, std::span<const double> ref);

void write_optimize_history(const std::vector<OptimizeRow>& history, const std::string& path);
void write_control(std::span<const double> u, const std::string& path);

}  // namespace noctl
