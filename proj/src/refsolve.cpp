#include "noctl/refsolve.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "noctl/autodiff/dual.hpp"
#include "noctl/errors.hpp"
#include "noctl/sampling.hpp"

namespace noctl {
namespace {

using D1 = ad::Dual<double>;

struct Partials {
  double f_y, f_u, L_y, L_u;
};

Partials partials(const ProblemSpec& problem, const CostSpec& cost, double y, double u) {
  const D1 dy{y, 1.0}, cy{y, 0.0};
  const D1 du{u, 1.0}, cu{u, 0.0};
  return {dynamics(problem.kind, dy, cu).t, dynamics(problem.kind, cy, du).t, running_cost(cost, dy, cu).t,
          running_cost(cost, cy, du).t};
}

double terminal_y(const CostSpec& cost, double y) { return terminal_cost(cost, D1{y, 1.0}).t; }

void require_ode(const ProblemSpec& problem, const char* who) {
  if (!problem.is_ode()) throw ArgumentError(std::string(who) + ": ODE problems only");
}

void require_finite(double v, const char* who, int i) {
  if (!std::isfinite(v)) throw NumericalError(fmt::format("{}: non-finite value at node {}", who, i));
}

}  // namespace

namespace {

template <class S>
std::vector<S> rk4_states(const ProblemSpec& problem, std::span<const double> control, int I) {
  require_ode(problem, "rk4_solve");
  if (I < 2) throw ArgumentError("rk4_solve: need at least 2 nodes");
  if (control.size() != static_cast<std::size_t>(I))
    throw ArgumentError(fmt::format("rk4_solve: control has {} values, grid has {}", control.size(), I));
  const S h = S(problem.T) / S(I - 1);
  std::vector<S> y(control.size());
  y[0] = problem.y0;
  auto f = [&](S yy, S uu) { return dynamics(problem.kind, yy, uu); };
  for (int i = 0; i + 1 < I; ++i) {
    const S ui = control[i], un = control[i + 1];
    const S um = S(0.5) * (ui + un);
    const S k1 = f(y[i], ui);
    const S k2 = f(y[i] + S(0.5) * h * k1, um);
    const S k3 = f(y[i] + S(0.5) * h * k2, um);
    const S k4 = f(y[i] + h * k3, un);
    y[i + 1] = y[i] + h / S(6) * (k1 + S(2) * k2 + S(2) * k3 + k4);
    require_finite(static_cast<double>(y[i + 1]), "rk4_solve: state diverged", i + 1);
  }
  return y;
}

// Cost of a control in extended precision; the line search compares values
// whose differences are near double rounding once the gradient is ~1e-8.
long double precise_cost(const ProblemSpec& problem, const CostSpec& cost, std::span<const double> u) {
  using S = long double;
  const int I = static_cast<int>(u.size());
  const std::vector<S> y = rk4_states<S>(problem, u, I);
  const S h = S(problem.T) / S(I - 1);
  S s = 0;
  for (int i = 0; i < I; ++i) {
    const S w = (i == 0 || i == I - 1) ? S(0.5) : S(1);
    s += w * running_cost(cost, y[i], S(u[i]));
  }
  return h * s + terminal_cost(cost, y.back());
}

}  // namespace

Trajectory rk4_solve(const ProblemSpec& problem, std::span<const double> control, int I) {
  Trajectory tr;
  tr.y = rk4_states<double>(problem, control, I);
  tr.t = make_grid(problem, I).t;
  return tr;
}

double ode_cost(const CostSpec& cost, std::span<const double> y, std::span<const double> u, double dt) {
  if (y.size() != u.size()) throw ArgumentError("ode_cost: state and control lengths differ");
  std::vector<double> l(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) l[i] = running_cost(cost, y[i], u[i]);
  return trapezoid(l, dt) + terminal_cost(cost, y.back());
}

std::vector<double> adjoint_solve(const ProblemSpec& problem, const CostSpec& cost, const Trajectory& traj,
                                  std::span<const double> control) {
  require_ode(problem, "adjoint_solve");
  const std::size_t n = traj.y.size();
  if (control.size() != n || n < 2) throw ArgumentError("adjoint_solve: trajectory and control lengths differ");
  const double h = problem.T / double(n - 1);
  auto g = [&](double y, double u, double lam) {
    const Partials p = partials(problem, cost, y, u);
    return -(p.L_y + lam * p.f_y);
  };
  std::vector<double> lam(n);
  lam[n - 1] = terminal_y(cost, traj.y[n - 1]);
  for (std::size_t i = n - 1; i-- > 0;) {
    const double y0 = traj.y[i], y1 = traj.y[i + 1];
    const double ym = 0.5 * (y0 + y1) + h / 8.0 * (dynamics(problem.kind, y0, control[i]) -
                                                   dynamics(problem.kind, y1, control[i + 1]));
    const double um = 0.5 * (control[i] + control[i + 1]);
    const double l1 = lam[i + 1];
    const double k1 = g(y1, control[i + 1], l1);
    const double k2 = g(ym, um, l1 - 0.5 * h * k1);
    const double k3 = g(ym, um, l1 - 0.5 * h * k2);
    const double k4 = g(y0, control[i], l1 - h * k3);
    lam[i] = l1 - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    require_finite(lam[i], "adjoint_solve: adjoint diverged", int(i));
  }
  return lam;
}

CostGradient discrete_gradient(const ProblemSpec& problem, const CostSpec& cost, std::span<const double> u) {
  require_ode(problem, "discrete_gradient");
  const int I = static_cast<int>(u.size());
  CostGradient out;
  out.traj = rk4_solve(problem, u, I);
  const std::vector<double>& y = out.traj.y;
  const double h = problem.T / double(I - 1);
  const std::vector<double> w = trapezoid_weights(I, h);
  out.J = ode_cost(cost, y, u, h);
  require_finite(out.J, "discrete_gradient: cost", I - 1);

  out.dJ.assign(u.size(), 0.0);
  std::vector<double>& du = out.dJ;
  std::vector<double> lam(u.size());
  const Partials pN = partials(problem, cost, y[I - 1], u[I - 1]);
  double ybar = w[I - 1] * pN.L_y + terminal_y(cost, y[I - 1]);
  du[I - 1] += w[I - 1] * pN.L_u;
  lam[I - 1] = ybar;
  auto f = [&](double yy, double uu) { return dynamics(problem.kind, yy, uu); };
  for (int i = I - 2; i >= 0; --i) {
    // Replay the stages of step i.
    const double y0 = y[i];
    const double um = 0.5 * (u[i] + u[i + 1]);
    const double k1 = f(y0, u[i]);
    const double Y2 = y0 + 0.5 * h * k1;
    const double k2 = f(Y2, um);
    const double Y3 = y0 + 0.5 * h * k2;
    const double k3 = f(Y3, um);
    const double Y4 = y0 + h * k3;

    double b1 = ybar * h / 6.0, b2 = ybar * h / 3.0, b3 = ybar * h / 3.0;
    const double b4 = ybar * h / 6.0;
    double yb = ybar;
    double umb = 0.0;
    const Partials p4 = partials(problem, cost, Y4, u[i + 1]);
    yb += p4.f_y * b4;
    b3 += h * p4.f_y * b4;
    du[i + 1] += p4.f_u * b4;
    const Partials p3 = partials(problem, cost, Y3, um);
    yb += p3.f_y * b3;
    b2 += 0.5 * h * p3.f_y * b3;
    umb += p3.f_u * b3;
    const Partials p2 = partials(problem, cost, Y2, um);
    yb += p2.f_y * b2;
    b1 += 0.5 * h * p2.f_y * b2;
    umb += p2.f_u * b2;
    const Partials p1 = partials(problem, cost, y0, u[i]);
    yb += p1.f_y * b1;
    du[i] += p1.f_u * b1;
    du[i] += 0.5 * umb;
    du[i + 1] += 0.5 * umb;
    // Running cost at node i.
    yb += w[i] * p1.L_y;
    du[i] += w[i] * p1.L_u;
    ybar = yb;
    lam[i] = ybar;
  }
  out.traj.lambda = std::move(lam);
  return out;
}

DalResult dal_optimize(const ProblemSpec& problem, const CostSpec& cost, const DalConfig& config) {
  require_ode(problem, "dal_optimize");
  cost.validate(problem);
  if (!(config.step > 0.0) || config.max_iter < 0 || !(config.tol > 0.0))
    throw ArgumentError("dal_optimize: step and tolerance must be positive");
  const int I = problem.I;
  std::vector<double> u = config.initial.value_or(std::vector<double>(static_cast<std::size_t>(I), 0.0));
  if (u.size() != static_cast<std::size_t>(I)) throw ArgumentError("dal_optimize: initial guess has wrong length");
  const double h = problem.T / double(I - 1);
  const std::vector<double> w = trapezoid_weights(I, h);

  DalResult res;
  std::vector<double> g(u.size()), trial(u.size());
  for (int it = 0;; ++it) {
    const CostGradient cg = discrete_gradient(problem, cost, u);
    double gn = 0.0, slope = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      g[i] = cg.dJ[i] / w[i];
      gn = std::max(gn, std::abs(g[i]));
      slope += cg.dJ[i] * g[i];
    }
    const long double J0 = precise_cost(problem, cost, u);
    res.J.push_back(static_cast<double>(J0));
    res.grad_norm = gn;
    res.iterations = it;
    if (gn < config.tol) {
      res.converged = true;
      break;
    }
    if (it >= config.max_iter) break;
    // Sufficient decrease of a quarter of the linear prediction: rejects the
    // mirror-image overshoot that alpha = 1 gives on u^2 running costs.
    double alpha = config.step;
    bool accepted = false;
    for (int k = 0; k <= 50 && !accepted; ++k, alpha *= 0.5) {
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] - alpha * g[i];
      long double Jt;
      try {
        Jt = precise_cost(problem, cost, trial);
      } catch (const NumericalError&) {
        continue;
      }
      accepted = std::isfinite(static_cast<double>(Jt)) && Jt <= J0 - 0.25L * alpha * slope;
    }
    if (!accepted)
      throw NumericalError(fmt::format("dal_optimize: line search failed after 50 halvings (gradient norm {:.3e})", gn));
    u.swap(trial);
  }
  res.control = std::move(u);
  return res;
}

std::vector<double> riccati_control(const ProblemSpec& problem, int I) {
  if (problem.kind != ProblemKind::LinearODE) throw ArgumentError("riccati_control: linear ODE only");
  const double h = problem.T / double(I - 1);
  // p on the half-step grid, integrated backward from p(T) = 0.
  const int n = 2 * (I - 1);
  const double hh = 0.5 * h;
  auto pdot = [](double p) { return p * p + 2.0 * p - 1.0; };
  std::vector<double> p(static_cast<std::size_t>(n) + 1);
  p[n] = 0.0;
  for (int j = n; j > 0; --j) {
    const double k1 = pdot(p[j]);
    const double k2 = pdot(p[j] - 0.5 * hh * k1);
    const double k3 = pdot(p[j] - 0.5 * hh * k2);
    const double k4 = pdot(p[j] - hh * k3);
    p[j - 1] = p[j] - hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  // Closed loop y' = -(1 + p) y.
  std::vector<double> y(static_cast<std::size_t>(I)), u(static_cast<std::size_t>(I));
  y[0] = problem.y0;
  for (int i = 0; i + 1 < I; ++i) {
    const double p0 = p[2 * i], pm = p[2 * i + 1], p1 = p[2 * i + 2];
    const double k1 = -(1.0 + p0) * y[i];
    const double k2 = -(1.0 + pm) * (y[i] + 0.5 * h * k1);
    const double k3 = -(1.0 + pm) * (y[i] + 0.5 * h * k2);
    const double k4 = -(1.0 + p1) * (y[i] + h * k3);
    y[i + 1] = y[i] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  for (int i = 0; i < I; ++i) u[i] = -p[2 * i] * y[i];
  return u;
}

Matrix fd_solve_diffusion_reaction(std::span<const double> u, const PdeSolveConfig& c) {
  if (c.Ix < 3 || c.It < 2) throw ArgumentError("fd_solve: need Ix >= 3 and It >= 2");
  if (u.size() != static_cast<std::size_t>(c.Ix))
    throw ArgumentError(fmt::format("fd_solve: control has {} values, grid has {}", u.size(), c.Ix));
  if (!(c.T > 0.0) || c.D < 0.0) throw ArgumentError("fd_solve: bad horizon or diffusion coefficient");
  const int n = c.Ix - 2;  // interior unknowns
  const double dx = 1.0 / double(c.Ix - 1);
  const double dt = c.T / double(c.It - 1);
  const double r = c.D * dt / (dx * dx);

  // Thomas factorization of the constant implicit matrix tridiag(-r/2, 1+r, -r/2).
  const double off = -0.5 * r, diag = 1.0 + r;
  std::vector<double> cp(static_cast<std::size_t>(n)), denom(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    denom[i] = diag - (i > 0 ? off * cp[i - 1] : 0.0);
    if (!(std::abs(denom[i]) > 1e-300)) throw NumericalError("fd_solve: singular tridiagonal system");
    cp[i] = off / denom[i];
  }

  Matrix y = Matrix::Zero(c.It, c.Ix);
  std::vector<double> rhs(static_cast<std::size_t>(n)), sol(static_cast<std::size_t>(n));
  for (int s = 0; s + 1 < c.It; ++s) {
    for (int i = 0; i < n; ++i) {
      const int j = i + 1;
      const double cur = y(s, j);
      // Reaction at the half step, extrapolated from the two known levels.
      const double lag = s > 0 ? 1.5 * cur - 0.5 * y(s - 1, j) : cur;
      rhs[i] = cur + 0.5 * r * (y(s, j - 1) - 2.0 * cur + y(s, j + 1)) + dt * (u[j] - c.k * lag * lag);
    }
    for (int i = 0; i < n; ++i) sol[i] = (rhs[i] - (i > 0 ? off * sol[i - 1] : 0.0)) / denom[i];
    for (int i = n - 2; i >= 0; --i) sol[i] -= cp[i] * sol[i + 1];
    for (int i = 0; i < n; ++i) {
      require_finite(sol[i], "fd_solve: state diverged", s + 1);
      y(s + 1, i + 1) = sol[i];
    }
  }
  return y;
}

std::vector<double> refine_linear(std::span<const double> u, int factor) {
  if (factor < 1 || u.size() < 2) throw ArgumentError("refine_linear: bad factor or too few nodes");
  const std::size_t n = (u.size() - 1) * std::size_t(factor) + 1;
  std::vector<double> v(n);
  for (std::size_t i = 0; i + 1 < u.size(); ++i)
    for (int k = 0; k < factor; ++k) {
      const double a = double(k) / double(factor);
      v[i * factor + k] = (1.0 - a) * u[i] + a * u[i + 1];
    }
  v.back() = u.back();
  return v;
}

double tracking_length_scale(int p) {
  switch (p) {
    case 1: return 0.25;
    case 2: return 0.35;
    case 3: return 0.5;
  }
  throw ArgumentError(fmt::format("tracking cost selector must be 1, 2 or 3, got {}", p));
}

Matrix pde_state(const ProblemSpec& problem, std::span<const double> u, int refine) {
  if (problem.is_ode()) throw ArgumentError("pde_state: PDE only");
  if (refine < 1) throw ArgumentError("pde_state: refine must be >= 1");
  if (static_cast<int>(u.size()) != problem.Ix)
    throw ArgumentError(fmt::format("pde_state: control has {} values, grid has {}", u.size(), problem.Ix));
  PdeSolveConfig cfg;
  cfg.Ix = (problem.Ix - 1) * refine + 1;
  cfg.It = (problem.I - 1) * refine + 1;
  cfg.T = problem.T;
  cfg.D = problem.D;
  cfg.k = problem.k;
  const Matrix fine = fd_solve_diffusion_reaction(refine_linear(u, refine), cfg);
  Matrix y(problem.I, problem.Ix);
  for (int i = 0; i < problem.I; ++i)
    for (int j = 0; j < problem.Ix; ++j) y(i, j) = fine(i * refine, j * refine);
  return y;
}

TrackingTarget make_tracking_target(const ProblemSpec& problem, double l, std::uint64_t seed, int refine) {
  if (problem.is_ode()) throw ArgumentError("make_tracking_target: PDE only");
  if (refine < 1) throw ArgumentError("make_tracking_target: refine must be >= 1");
  const Grid grid = make_grid(problem);
  std::mt19937_64 rng(seed);
  TrackingTarget out;
  out.u = sample_grf(l, 1.0, grid.x, rng);
  out.y = pde_state(problem, out.u, refine);
  return out;
}

}  // namespace noctl
