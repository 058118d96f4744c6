#include <chrono>
#include <cmath>
#include <ostream>
#include <functional>
#include <random>

#include <Eigen/LU>
#include <fmt/format.h>

#include "noctl/harness.hpp"
#include "noctl/sampling.hpp"

namespace noctl {

namespace {

NetworkSpec small_net(int in, NetKind kind) {
  NetworkSpec s;
  s.kind = kind;
  s.input_width = in;
  s.hidden_width = 8;
  s.depth = 3;
  s.output_width = 6;
  return s;
}

ProblemSpec small_problem(ProblemKind kind) {
  ProblemSpec p = make_problem(kind);
  if (p.is_ode()) {
    p.I = 16;
  } else {
    p.I = 8;
    p.Ix = 9;
  }
  return p;
}

DeepOnetModel small_model(const ProblemSpec& p, std::uint64_t seed, double bias) {
  const NetKind k = p.kind == ProblemKind::NonlinearODE ? NetKind::ModifiedFC : NetKind::PlainFC;
  DeepOnetModel m =
      make_deeponet(small_net(p.sensors(), k), small_net(p.query_dim(), k), p.sensors(), p.query_dim(), seed);
  m.params.at(m.params.tensors() - 1)(0, 0) = bias;
  return m;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

// Perturbs every gradient entry so a directional check must notice.
void spoil(std::vector<double>& g) {
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += 1e-2 * (1.0 + std::abs(g[i])) * (i % 2 ? 1.0 : -0.5);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

const ProblemKind kKinds[] = {ProblemKind::LinearODE, ProblemKind::NonlinearODE, ProblemKind::DiffusionReaction};

}  // namespace

CheckResult check_param_gradients(int instances, bool corrupt) {
  const double h = 1e-5;
  double worst = 0.0;
  for (ProblemKind kind : kKinds) {
    const ProblemSpec p = small_problem(kind);
    for (int s = 0; s < instances; ++s) {
      DeepOnetModel m = small_model(p, 100 + std::uint64_t(s), 0.0);
      std::vector<double> theta = m.params.flatten();
      const std::vector<double> shift = gaussian(theta.size(), 7000 + std::uint64_t(s), 0.1);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += shift[i];
      m.params.unflatten(theta);
      const std::vector<double> raw = gaussian(std::size_t(3 * p.sensors()), 500 + std::uint64_t(s), 0.6);
      Matrix batch(3, p.sensors());
      std::copy(raw.begin(), raw.end(), batch.data());
      LossGradient lg = training_loss_grad(m, p, batch);
      if (corrupt) spoil(lg.grad);
      const std::vector<double> dir = gaussian(theta.size(), 900 + std::uint64_t(s));
      auto at = [&](double step) {
        DeepOnetModel q = m;
        std::vector<double> t = theta;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += step * dir[i];
        q.params.unflatten(t);
        return training_loss(q, p, batch).total;
      };
      const double fd = (at(h) - at(-h)) / (2 * h);
      worst = std::max(worst, std::abs(dot(lg.grad, dir) - fd) / std::abs(fd));
    }
  }
  return {"network parameter gradients vs central differences", worst < 1e-5,
          fmt::format("worst relative error {:.2e} over {} instances per problem", worst, instances)};
}

CheckResult check_control_gradients(int instances, bool corrupt) {
  const double h = 1e-5;
  double worst = 0.0;
  for (ProblemKind kind : kKinds) {
    const ProblemSpec p = small_problem(kind);
    for (int k = 1; k <= 3; ++k)
      for (int s = 0; s < instances; ++s) {
        // Bias 2 keeps the 1/y cost away from its floor.
        const DeepOnetModel m = small_model(p, 1000 + std::uint64_t(s), 2.0);
        CostSpec cost;
        if (p.is_ode()) {
          cost = make_cost(kind, k);
        } else {
          const std::vector<double> t = gaussian(std::size_t(p.I * p.Ix), 300 + std::uint64_t(s), 0.3);
          Matrix target(p.I, p.Ix);
          std::copy(t.begin(), t.end(), target.data());
          cost = make_tracking_cost(target, k);
        }
        const ControlObjective obj(m, p, cost, {10.0, 0.5});
        const std::vector<double> u = gaussian(std::size_t(p.sensors()), 50 + std::uint64_t(s), 0.5);
        const std::vector<double> dir = gaussian(u.size(), 90 + std::uint64_t(s));
        std::vector<double> g;
        obj.value_and_grad(u, g);
        if (corrupt) spoil(g);
        std::vector<double> up(u), dn(u);
        for (std::size_t i = 0; i < u.size(); ++i) {
          up[i] += h * dir[i];
          dn[i] -= h * dir[i];
        }
        const double fd = (obj.value(up).total - obj.value(dn).total) / (2 * h);
        worst = std::max(worst, std::abs(dot(g, dir) - fd) / std::abs(fd));
      }
  }
  return {"control gradients vs central differences", worst < 1e-5,
          fmt::format("worst relative error {:.2e} over {} instances per problem and cost", worst, instances)};
}

CheckResult check_rk4_order() {
  // y' = -y + u with u = 1 + t and y(0) = 1 has y = t + exp(-t).
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  auto error = [&](int I) {
    std::vector<double> u(static_cast<std::size_t>(I));
    for (int i = 0; i < I; ++i) u[std::size_t(i)] = 1.0 + double(i) / (I - 1);
    const Trajectory tr = rk4_solve(lin, u, I);
    double e = 0.0;
    for (int i = 0; i < I; ++i) e = std::max(e, std::abs(tr.y[std::size_t(i)] - (tr.t[std::size_t(i)] + std::exp(-tr.t[std::size_t(i)]))));
    return e;
  };
  const double e1 = error(11), e2 = error(21), e3 = error(41);
  const double order = std::min(std::log2(e1 / e2), std::log2(e2 / e3));
  return {"RK4 empirical order on the linear ODE", order >= 3.9,
          fmt::format("order {:.3f} (errors {:.2e}, {:.2e}, {:.2e})", order, e1, e2, e3)};
}

CheckResult check_trapezoid() {
  double worst = 0.0;
  for (int n : {2, 3, 10, 100}) {
    std::vector<double> f(static_cast<std::size_t>(n));
    const double dt = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i) f[std::size_t(i)] = 2.0 * i * dt + 3.0;
    worst = std::max(worst, std::abs(trapezoid(f, dt) - 4.0));
  }
  return {"trapezoid rule exact on affine integrands", worst <= 1e-12, fmt::format("worst error {:.2e}", worst)};
}

CheckResult check_pde_convergence() {
  const ProblemSpec pde = make_problem(ProblemKind::DiffusionReaction);
  std::mt19937_64 rng(4);
  const std::vector<double> u = sample_grf(0.3, 1.0, make_grid(pde).x, rng);
  auto solve = [&](int factor) {
    PdeSolveConfig f;
    f.Ix = (pde.Ix - 1) * factor + 1;
    f.It = (pde.I - 1) * factor + 1;
    return fd_solve_diffusion_reaction(refine_linear(u, factor), f);
  };
  const Matrix a = solve(1), b = solve(2), d = solve(4);
  double e1 = 0.0, e2 = 0.0;
  for (int i = 0; i < pde.I; ++i)
    for (int j = 0; j < pde.Ix; ++j) {
      e1 = std::max(e1, std::abs(a(i, j) - b(2 * i, 2 * j)));
      e2 = std::max(e2, std::abs(b(2 * i, 2 * j) - d(4 * i, 4 * j)));
    }
  return {"PDE solver self-convergence under refinement", e1 / e2 >= 3.0,
          fmt::format("error ratio {:.3f} ({:.2e} -> {:.2e})", e1 / e2, e1, e2)};
}

CheckResult check_riccati_dal() {
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const DalResult r = dal_optimize(lin, make_cost(ProblemKind::LinearODE, 1), {});
  const std::vector<double> ric = riccati_control(lin, lin.I);
  const double m = mse_report(r.control, ric).mse;
  return {"DAL reference vs Riccati closed loop (linear ODE, cost 1)", r.converged && m < 1e-6,
          fmt::format("MSE {:.3e} after {} DAL iterations", m, r.iterations)};
}

CheckResult check_bfgs_inverse() {
  // f = x^T A x / 2 with A = [[3, 1], [1, 2]], exact line searches.
  Eigen::Matrix2d A;
  A << 3.0, 1.0, 1.0, 2.0;
  Eigen::Vector2d x(1.0, -1.0);
  BfgsState s = BfgsState::identity(2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::Vector2d g = A * x;
    const Eigen::Vector2d d = -(s.H * g);
    const double alpha = -g.dot(d) / d.dot(A * d);
    const Eigen::Vector2d step = alpha * d;
    const Eigen::Vector2d y = A * step;
    s = bfgs_update(s, std::vector<double>{step(0), step(1)}, std::vector<double>{y(0), y(1)});
    x += step;
  }
  const double err = (s.H - Matrix(A.inverse())).cwiseAbs().maxCoeff();
  return {"BFGS recovers the inverse Hessian of a 2-D quadratic", err <= 1e-6, fmt::format("max error {:.2e}", err)};
}

CheckResult check_adam_first_step() {
  double worst = 0.0;
  for (double g : {4.0, -0.3, 1e-3, 250.0}) {
    AdamState s = AdamState::zeros(1);
    std::vector<double> x{0.5};
    adam_step(s, x, std::vector<double>{g}, 0.01);
    // m_hat = g, v_hat = g^2 after one step.
    const double expected = 0.5 - 0.01 * g / (std::abs(g) + s.eps);
    worst = std::max(worst, std::abs(x[0] - expected));
  }
  return {"ADAM first step matches the bias-corrected closed form", worst <= 1e-6,
          fmt::format("max deviation {:.2e}", worst)};
}

CheckResult check_bfgs_monotone() {
  int violations = 0, runs = 0;
  for (ProblemKind kind : kKinds) {
    const ProblemSpec p = small_problem(kind);
    for (int k = 1; k <= 3; ++k) {
      CostSpec cost;
      if (p.is_ode()) {
        cost = make_cost(kind, k);
      } else {
        const std::vector<double> t = gaussian(std::size_t(p.I * p.Ix), 40 + std::uint64_t(k), 0.3);
        Matrix target(p.I, p.Ix);
        std::copy(t.begin(), t.end(), target.data());
        cost = make_tracking_cost(target, k);
      }
      const ControlObjective obj(small_model(p, 31 + std::uint64_t(k), 1.0), p, cost, {5.0, 0.2});
      RoutineConfig bfgs;
      bfgs.routine = Routine::BFGS;
      bfgs.iterations = 40;
      const OptimizeResult r = optimize_control(obj, bfgs);
      ++runs;
      for (std::size_t i = 1; i < r.history.size(); ++i)
        if (r.history[i].parts.total > r.history[i - 1].parts.total) ++violations;
    }
  }
  return {"BFGS with Armijo search never increases the penalized cost", violations == 0,
          fmt::format("{} increases over {} runs", violations, runs)};
}

std::vector<CheckResult> cmd_check(bool corrupt_gradient, std::ostream* log) {
  using Fn = CheckResult (*)();
  std::vector<std::function<CheckResult()>> suite{
      [&] { return check_param_gradients(5, corrupt_gradient); },
      [&] { return check_control_gradients(5, corrupt_gradient); },
      Fn(check_rk4_order),
      Fn(check_trapezoid),
      Fn(check_pde_convergence),
      Fn(check_riccati_dal),
      Fn(check_bfgs_inverse),
      Fn(check_adam_first_step),
      Fn(check_bfgs_monotone),
  };
  std::vector<CheckResult> out;
  for (const auto& check : suite) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {"(check raised)", false, e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) *log << fmt::format("{}  {}: {} [{:.1f}s]\n", r.passed ? "PASS" : "FAIL", r.name, r.detail, s) << std::flush;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace noctl
