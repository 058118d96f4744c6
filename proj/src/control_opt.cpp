#include "noctl/control_opt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "noctl/training.hpp"

namespace noctl {

void PenaltyConfig::validate() const {
  if (!std::isfinite(mu) || mu < 0.0) throw ConfigError("penalty.mu", "must be finite and non-negative");
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("penalty.lambda", "must be finite and non-negative");
}

std::string to_string(Routine r) {
  switch (r) {
    case Routine::GD: return "gd";
    case Routine::ADAM: return "adam";
    case Routine::BFGS: return "bfgs";
  }
  return "?";
}

Routine routine_from_string(const std::string& s) {
  if (s == "gd") return Routine::GD;
  if (s == "adam") return Routine::ADAM;
  if (s == "bfgs") return Routine::BFGS;
  throw ArgumentError("unknown routine '" + s + "' (gd, adam, bfgs)");
}

void ArmijoConfig::validate() const {
  if (max_trials < 1) throw ConfigError("armijo.max_trials", "must be at least 1");
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("armijo.factor", "must lie in (0, 1)");
  if (!(c >= 0.0 && c < 1.0)) throw ConfigError("armijo.c", "must lie in [0, 1)");
}

void RoutineConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations", "must be at least 1");
  if (routine != Routine::BFGS && !(lr > 0.0 && std::isfinite(lr))) throw ConfigError("lr", "must be positive");
  if (grad_tol && !(*grad_tol > 0.0)) throw ConfigError("grad_tol", "must be positive");
  armijo.validate();
}

namespace {

Matrix as_row(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

Matrix cost_weights(const ProblemSpec& problem) {
  const Grid g = make_grid(problem);
  const std::vector<double> wt = trapezoid_weights(g.nt(), g.dt);
  if (problem.is_ode()) return as_row(wt);
  const std::vector<double> wx = trapezoid_weights(g.nx(), g.dx);
  Matrix w(1, g.nt() * g.nx());
  for (int i = 0; i < g.nt(); ++i)
    for (int j = 0; j < g.nx(); ++j) w(0, i * g.nx() + j) = wt[i] * wx[j];
  return w;
}

// y, u are 1 x points and 1 x sensors. Shared by cost_value and the
// objective so both produce the same bits.
ad::Var cost_var(const CostSpec& cost, const ProblemSpec& problem, ad::Var y, ad::Var u, ad::Var weights,
                 ad::Var target) {
  if (cost.tracking()) return sum(weights * square(y - target));
  (void)problem;
  ad::Var c = sum(weights * running_cost(cost, y, u));
  if (cost.has_terminal()) c = c + terminal_cost(cost, cols(y, {static_cast<int>(y.cols()) - 1}));
  return c;
}

bool guard_active(const CostSpec& cost, const Matrix& y) {
  return cost.problem == ProblemKind::LinearODE && cost.p == 2 && (y.array() < kInverseFloor).any();
}

Matrix target_row(const CostSpec& cost) {
  Matrix t = cost.target;
  t.resize(1, t.size());  // row-major: query order i_t * Ix + j_x
  return t;
}

}  // namespace

double cost_value(const CostSpec& cost, const ProblemSpec& problem, std::span<const double> y,
                  std::span<const double> u) {
  cost.validate(problem);
  if (y.size() != static_cast<std::size_t>(problem.points()))
    throw ArgumentError(fmt::format("cost_value: state has {} values, grid has {}", y.size(), problem.points()));
  if (u.size() != static_cast<std::size_t>(problem.sensors()))
    throw ArgumentError(fmt::format("cost_value: control has {} values, grid has {}", u.size(), problem.sensors()));
  ad::Tape tape;
  const ad::Var target = cost.tracking() ? tape.leaf(target_row(cost)) : ad::Var();
  return cost_var(cost, problem, tape.leaf(as_row(y)), tape.leaf(as_row(u)), tape.leaf(cost_weights(problem)), target)
      .scalar();
}

double second_diff_reg(std::span<const double> u) {
  if (u.size() < 3) throw ArgumentError("second_diff_reg: need at least 3 values");
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < u.size(); ++i) {
    const double d = u[i + 1] - 2.0 * u[i] + u[i - 1];
    s += d * d;
  }
  return s;
}

ControlObjective::ControlObjective(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                                   const PenaltyConfig& penalty)
    : model_(model), problem_(problem), cost_(cost), penalty_(penalty) {
  problem_.validate();
  cost_.validate(problem_);
  penalty_.validate();
  check_model_matches(problem_, model_);
  trunk_ = trunk_values(problem_, model_);
  weights_ = cost_weights(problem_);
  if (cost_.tracking()) target_ = target_row(cost_);
  const int n = problem_.sensors();
  if (n < 3) throw ArgumentError("control grid needs at least 3 nodes");
  second_ = Matrix::Zero(n, n - 2);
  for (int j = 0; j < n - 2; ++j) {
    second_(j, j) = 1.0;
    second_(j + 1, j) = -2.0;
    second_(j + 2, j) = 1.0;
  }
}

CostParts ControlObjective::evaluate(std::span<const double> u, std::vector<double>* grad) const {
  if (u.size() != static_cast<std::size_t>(size()))
    throw ArgumentError(fmt::format("control has {} values, grid has {}", u.size(), size()));
  ad::Tape tape;
  const BoundModel bound = bind(tape, model_);
  const ad::Var uv = tape.leaf(as_row(u));
  const PhysicsTerms t = physics_terms(problem_, model_, bound, uv, bind_trunk(tape, trunk_));
  const ad::Var target = cost_.tracking() ? tape.leaf(target_) : ad::Var();
  const ad::Var c = cost_var(cost_, problem_, t.y, uv, tape.leaf(weights_), target);
  const ad::Var pen = penalty_.mu * t.physics;
  const ad::Var reg = penalty_.lambda * sum(square(matmul(uv, tape.leaf(second_))));
  const ad::Var total = c + pen + reg;

  CostParts parts;
  parts.cost = c.scalar();
  parts.penalty = pen.scalar();
  parts.reg = reg.scalar();
  parts.total = total.scalar();
  parts.floored = guard_active(cost_, t.y.value());
  if (grad) {
    tape.backward(total);
    const Matrix g = tape.grad(uv);
    grad->assign(g.data(), g.data() + g.size());
  }
  return parts;
}

CostParts ControlObjective::value(std::span<const double> u) const { return evaluate(u, nullptr); }

CostParts ControlObjective::value_and_grad(std::span<const double> u, std::vector<double>& grad) const {
  return evaluate(u, &grad);
}

std::vector<double> ControlObjective::state(std::span<const double> u) const {
  ad::Tape tape;
  const BoundModel bound = bind(tape, model_);
  const PhysicsTerms t = physics_terms(problem_, model_, bound, tape.leaf(as_row(u)), bind_trunk(tape, trunk_));
  const Matrix& y = t.y.value();
  return {y.data(), y.data() + y.size()};
}

double ControlObjective::mean_residual(std::span<const double> u) const {
  ad::Tape tape;
  const BoundModel bound = bind(tape, model_);
  return physics_terms(problem_, model_, bound, tape.leaf(as_row(u)), bind_trunk(tape, trunk_)).physics.scalar();
}

CostParts penalized_cost(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                         const PenaltyConfig& penalty, std::span<const double> u) {
  return ControlObjective(model, problem, cost, penalty).value(u);
}

std::vector<double> control_gradient(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                                     const PenaltyConfig& penalty, std::span<const double> u) {
  std::vector<double> g;
  ControlObjective(model, problem, cost, penalty).value_and_grad(u, g);
  return g;
}

LineSearchResult armijo_search(const Objective& f, std::span<const double> x, double fx, std::span<const double> d,
                               std::span<const double> g, const ArmijoConfig& config) {
  config.validate();
  if (d.size() != x.size() || g.size() != x.size()) throw ArgumentError("armijo_search: length mismatch");
  LineSearchResult res;
  double slope = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) slope += g[i] * d[i];
  std::vector<double> dir(d.begin(), d.end());
  if (!(slope < 0.0)) {
    res.fell_back = true;
    slope = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      dir[i] = -g[i];
      slope -= g[i] * g[i];
    }
  }
  std::vector<double> trial(x.size());
  double alpha = 1.0;
  for (int k = 0; k < config.max_trials; ++k, alpha *= config.factor) {
    for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + alpha * dir[i];
    double ft;
    try {
      ft = f(trial);
    } catch (const EvaluationError&) {
      continue;
    }
    res.trials = k + 1;
    if (std::isfinite(ft) && ft <= fx + config.c * alpha * slope) {
      res.alpha = alpha;
      res.f = ft;
      return res;
    }
  }
  throw NumericalError(fmt::format("armijo_search: no sufficient decrease in {} trials", config.max_trials));
}

BfgsState BfgsState::identity(int n) { return {Matrix::Identity(n, n)}; }

BfgsState bfgs_update(const BfgsState& state, std::span<const double> s, std::span<const double> y) {
  const Eigen::Index n = state.H.rows();
  if (static_cast<Eigen::Index>(s.size()) != n || static_cast<Eigen::Index>(y.size()) != n)
    throw ArgumentError("bfgs_update: length mismatch");
  const Eigen::Map<const Vector> sv(s.data(), n), yv(y.data(), n);
  const double sy = sv.dot(yv);
  if (!(sy > 1e-10)) return state;
  const double rho = 1.0 / sy;
  const Vector Hy = state.H * yv;
  const double yHy = yv.dot(Hy);
  BfgsState out;
  // (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded.
  out.H = state.H + ((sy + yHy) * rho * rho) * (sv * sv.transpose()) - rho * (Hy * sv.transpose() + sv * Hy.transpose());
  return out;
}

namespace {

double inf_norm(const std::vector<double>& g) {
  double m = 0.0;
  for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

OptimizeResult optimize_control(const ControlObjective& objective, const RoutineConfig& routine,
                                std::optional<std::vector<double>> initial) {
  routine.validate();
  const int n = objective.size();
  std::vector<double> u = initial ? std::move(*initial) : std::vector<double>(static_cast<std::size_t>(n), 0.0);
  if (u.size() != static_cast<std::size_t>(n)) throw ArgumentError("optimize_control: initial control has wrong length");

  OptimizeResult res;
  std::vector<double> g, u_prev, g_prev, s(n), yv(n), d(n);
  AdamState adam = AdamState::zeros(u.size());
  BfgsState bfgs = BfgsState::identity(n);
  const Objective f = [&](std::span<const double> x) { return objective.value(x).total; };

  auto abort = [&](const std::string& why) {
    res.control = u;
    throw OptimizationAborted(fmt::format("optimization stopped at iteration {}: {}", res.iterations, why),
                              std::move(res));
  };

  for (int it = 0;; ++it) {
    CostParts parts;
    try {
      parts = objective.value_and_grad(u, g);
    } catch (const EvaluationError& e) {
      abort(e.what());
    }
    if (!std::isfinite(parts.total)) abort("non-finite cost");
    const double gn = inf_norm(g);
    if (!std::isfinite(gn)) abort("non-finite gradient");
    res.history.push_back({it, parts, gn});
    res.floored = res.floored || parts.floored;
    if (routine.grad_tol && gn < *routine.grad_tol) {
      res.stop = "grad_tol";
      break;
    }
    if (it >= routine.iterations) {
      res.stop = "budget";
      break;
    }

    if (routine.routine == Routine::GD) {
      for (int i = 0; i < n; ++i) u[i] -= routine.lr * g[i];
    } else if (routine.routine == Routine::ADAM) {
      adam_step(adam, u, g, routine.lr);
    } else {
      if (it > 0) {
        for (int i = 0; i < n; ++i) {
          s[i] = u[i] - u_prev[i];
          yv[i] = g[i] - g_prev[i];
        }
        bfgs = bfgs_update(bfgs, s, yv);
      }
      const Vector dv = -(bfgs.H * Eigen::Map<const Vector>(g.data(), n));
      std::copy(dv.data(), dv.data() + n, d.begin());
      LineSearchResult ls;
      try {
        ls = armijo_search(f, u, parts.total, d, g, routine.armijo);
      } catch (const NumericalError&) {
        // Restart from the identity once before giving up.
        bfgs = BfgsState::identity(n);
        for (int i = 0; i < n; ++i) d[i] = -g[i];
        try {
          ls = armijo_search(f, u, parts.total, d, g, routine.armijo);
        } catch (const NumericalError&) {
          res.stop = "line_search";
          break;
        }
      }
      if (ls.fell_back) {
        bfgs = BfgsState::identity(n);
        for (int i = 0; i < n; ++i) d[i] = -g[i];
      }
      u_prev = u;
      g_prev = g;
      for (int i = 0; i < n; ++i) u[i] += ls.alpha * d[i];
    }
    res.iterations = it + 1;
  }
  res.control = std::move(u);
  return res;
}

OptimizeResult optimize_control(const DeepOnetModel& model, const ProblemSpec& problem, const CostSpec& cost,
                                const PenaltyConfig& penalty, const RoutineConfig& routine) {
  return optimize_control(ControlObjective(model, problem, cost, penalty), routine);
}

MseReport mse_report(std::span<const double> u, std::span<const double> ref) {
  if (u.size() != ref.size() || u.empty())
    throw ArgumentError(fmt::format("mse_report: grids differ ({} vs {})", u.size(), ref.size()));
  const double n = double(u.size());
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - ref[i];
    mean += e;
    sq += e * e;
  }
  mean /= n;
  double var = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - ref[i] - mean;
    var += e * e;
  }
  return {sq / n, std::sqrt(var / n)};
}

void write_optimize_history(const std::vector<OptimizeRow>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "iter,J_mu,cost,penalty,reg,grad_norm\n";
  for (const OptimizeRow& r : history)
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.iter, r.parts.total, r.parts.cost,
                       r.parts.penalty, r.parts.reg, r.grad_norm);
}

void write_control(std::span<const double> u, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "node,value\n";
  for (std::size_t i = 0; i < u.size(); ++i) out << fmt::format("{},{:.17g}\n", i, u[i]);
}

}  // namespace noctl
