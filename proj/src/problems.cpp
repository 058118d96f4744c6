#include "noctl/problems.hpp"

#include <cmath>

namespace noctl {

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::LinearODE: return "linear";
    case ProblemKind::NonlinearODE: return "nonlinear";
    case ProblemKind::DiffusionReaction: return "diffusion";
  }
  return "?";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "linear") return ProblemKind::LinearODE;
  if (s == "nonlinear") return ProblemKind::NonlinearODE;
  if (s == "diffusion") return ProblemKind::DiffusionReaction;
  throw ArgumentError("unknown problem '" + s + "' (expected linear, nonlinear or diffusion)");
}

void ProblemSpec::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) throw ArgumentError("time horizon must be positive");
  if (I < 2) throw ArgumentError("time grid needs at least 2 nodes");
  if (!is_ode() && Ix < 2) throw ArgumentError("space grid needs at least 2 nodes");
  if (!std::isfinite(y0) || !std::isfinite(D) || !std::isfinite(k)) throw ArgumentError("non-finite coefficient");
}

ProblemSpec make_problem(ProblemKind kind) {
  ProblemSpec p;
  p.kind = kind;
  if (kind == ProblemKind::DiffusionReaction) p.y0 = 0.0;
  return p;
}

namespace {

std::vector<double> linspace(double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = hi * double(i) / double(n - 1);
  v.back() = hi;
  return v;
}

}  // namespace

Grid make_grid(const ProblemSpec& problem, int I, std::optional<int> Ix) {
  if (I < 2) throw ArgumentError("grid needs at least 2 time nodes");
  Grid g;
  g.t = linspace(problem.T, I);
  g.dt = problem.T / double(I - 1);
  if (!problem.is_ode()) {
    const int nx = Ix.value_or(problem.Ix);
    if (nx < 2) throw ArgumentError("grid needs at least 2 space nodes");
    g.x = linspace(1.0, nx);
    g.dx = 1.0 / double(nx - 1);
  }
  return g;
}

Grid make_grid(const ProblemSpec& problem) { return make_grid(problem, problem.I, problem.Ix); }

Matrix Grid::queries() const {
  if (x.empty()) {
    Matrix q(nt(), 1);
    for (int i = 0; i < nt(); ++i) q(i, 0) = t[i];
    return q;
  }
  Matrix q(nt() * nx(), 2);
  for (int i = 0; i < nt(); ++i)
    for (int j = 0; j < nx(); ++j) {
      q(i * nx() + j, 0) = x[j];
      q(i * nx() + j, 1) = t[i];
    }
  return q;
}

std::vector<int> Grid::edge_t0() const {
  std::vector<int> e;
  for (int j = 0; j < nx(); ++j) e.push_back(j);
  return e;
}

std::vector<int> Grid::edge_x0() const {
  std::vector<int> e;
  for (int i = 0; i < nt(); ++i) e.push_back(i * nx());
  return e;
}

std::vector<int> Grid::edge_x1() const {
  std::vector<int> e;
  for (int i = 0; i < nt(); ++i) e.push_back(i * nx() + nx() - 1);
  return e;
}

double dynamics_rhs(const ProblemSpec& problem, double y, double u, double) {
  if (!problem.is_ode()) throw ArgumentError("dynamics_rhs: the PDE has no ODE right-hand side");
  return dynamics(problem.kind, y, u);
}

double residual(const ProblemSpec& problem, double y, double y_dot, double u, double t, std::optional<double> y_xx) {
  if (problem.is_ode()) {
    const double r = y_dot - dynamics_rhs(problem, y, u, t);
    return r * r;
  }
  if (!y_xx) throw ArgumentError("residual: the PDE needs y_xx");
  const double r = y_dot - problem.D * *y_xx + problem.k * y * y - u;
  return r * r;
}

double mean_residual(const ProblemSpec& problem, const FieldSample& f) {
  const std::size_t n = f.y.size();
  if (n == 0 || f.y_t.size() != n || f.u.size() != n || (!problem.is_ode() && f.y_xx.size() != n))
    throw ArgumentError("mean_residual: field sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += residual(problem, f.y[i], f.y_t[i], f.u[i], 0.0,
                  problem.is_ode() ? std::nullopt : std::optional<double>(f.y_xx[i]));
  return s / double(n);
}

DerivRequest problem_derivs(const ProblemSpec& problem) {
  DerivRequest r;
  r.dt = true;
  r.dxx = !problem.is_ode();
  return r;
}

void check_model_matches(const ProblemSpec& problem, const DeepOnetModel& model) {
  if (model.sensors != problem.sensors())
    throw ArgumentError("model has " + std::to_string(model.sensors) + " sensors, problem grid has " +
                        std::to_string(problem.sensors()));
  if (model.query_dim != problem.query_dim()) throw ArgumentError("model query dimension does not fit the problem");
}

TrunkFeatures problem_trunk(const ProblemSpec& problem, const DeepOnetModel& model, const BoundModel& bound) {
  ad::Tape& tape = *bound.bias.tape();
  const Grid grid = make_grid(problem);
  return trunk_features(model, bound, tape.leaf(grid.queries()), problem_derivs(problem));
}

TrunkValues trunk_values(const ProblemSpec& problem, const DeepOnetModel& model) {
  check_model_matches(problem, model);
  ad::Tape tape;
  const BoundModel bound = bind(tape, model);
  const TrunkFeatures f = problem_trunk(problem, model, bound);
  TrunkValues v;
  v.tau = f.tau.value();
  v.tau_t = f.tau_t.value();
  if (!problem.is_ode()) v.tau_xx = f.tau_xx.value();
  return v;
}

TrunkFeatures bind_trunk(ad::Tape& tape, const TrunkValues& values) {
  TrunkFeatures f;
  f.tau = tape.leaf(values.tau);
  f.tau_t = tape.leaf(values.tau_t);
  if (values.tau_xx.size() > 0) f.tau_xx = tape.leaf(values.tau_xx);
  return f;
}

PhysicsTerms physics_terms(const ProblemSpec& problem, const DeepOnetModel& model, const BoundModel& bound,
                           ad::Var controls, const TrunkFeatures& trunk) {
  check_model_matches(problem, model);
  const DerivRequest which = problem_derivs(problem);
  const ad::Var beta = branch_forward(model, bound, controls);
  const FieldVars f = combine(model, bound, beta, trunk, which);
  PhysicsTerms out;
  out.y = f.y;
  out.y_t = f.y_t;
  ad::Tape& tape = *controls.tape();
  if (problem.is_ode()) {
    out.residual = square(f.y_t - dynamics(problem.kind, f.y, controls));
    out.ic = mean(square(cols(f.y, {0}) - problem.y0));
    out.bc = tape.leaf(0.0);
  } else {
    const ad::Var u = tile(controls, problem.I);
    out.residual = square(f.y_t - problem.D * f.y_xx + problem.k * square(f.y) - u);
    const Grid grid = make_grid(problem);
    out.ic = mean(square(cols(f.y, grid.edge_t0()))) * (1.0 / 3.0);
    out.bc = (mean(square(cols(f.y, grid.edge_x0()))) + mean(square(cols(f.y, grid.edge_x1())))) * (1.0 / 3.0);
  }
  out.physics = mean(out.residual);
  return out;
}

namespace {

PhysicsTerms single(ad::Tape& tape, const ProblemSpec& problem, const DeepOnetModel& model,
                    std::span<const double> control) {
  if (control.size() != static_cast<std::size_t>(model.sensors))
    throw ArgumentError("control has " + std::to_string(control.size()) + " values, model expects " +
                        std::to_string(model.sensors));
  const BoundModel bound = bind(tape, model);
  Matrix u(1, static_cast<Eigen::Index>(control.size()));
  std::copy(control.begin(), control.end(), u.data());
  return physics_terms(problem, model, bound, tape.leaf(u), problem_trunk(problem, model, bound));
}

}  // namespace

double mean_residual(const ProblemSpec& problem, const DeepOnetModel& model, std::span<const double> control) {
  ad::Tape tape;
  return single(tape, problem, model, control).physics.scalar();
}

double ic_bc_loss(const ProblemSpec& problem, const DeepOnetModel& model, std::span<const double> control) {
  ad::Tape tape;
  const PhysicsTerms t = single(tape, problem, model, control);
  return t.ic.scalar() + t.bc.scalar();
}

}  // namespace noctl
