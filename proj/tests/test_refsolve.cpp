#include <cmath>
#include <random>

#include "doctest.h"
#include "noctl/refsolve.hpp"
#include "noctl/sampling.hpp"

using namespace noctl;

namespace {

double max_err_closed_form(int I) {
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const Trajectory tr = rk4_solve(lin, std::vector<double>(std::size_t(I), 0.0), I);
  double e = 0.0;
  for (int i = 0; i < I; ++i) e = std::max(e, std::abs(tr.y[i] - std::exp(-tr.t[i])));
  return e;
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / double(a.size());
}

std::vector<double> random_control(int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return sample_grf(0.2, scale, make_grid(make_problem(ProblemKind::LinearODE), n).t, rng);
}

int zero_crossings(const std::vector<double>& v) {
  int c = 0;
  for (std::size_t i = 1; i < v.size(); ++i) c += (v[i - 1] < 0) != (v[i] < 0);
  return c;
}

}  // namespace

TEST_CASE("rk4_solve") {
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const Trajectory zero = rk4_solve(lin, std::vector<double>(101, 0.0), 101);
  CHECK(std::abs(zero.y.back() - std::exp(-1.0)) < 1e-9);
  const Trajectory one = rk4_solve(lin, std::vector<double>(101, 1.0), 101);
  for (double y : one.y) CHECK(std::abs(y - 1.0) < 1e-12);

  const double e1 = max_err_closed_form(11), e2 = max_err_closed_form(21), e3 = max_err_closed_form(41);
  CHECK(e1 / e2 >= 14.0);
  CHECK(std::log2(e2 / e3) >= 3.9);

  CHECK_THROWS_AS(rk4_solve(lin, std::vector<double>(10, 0.0), 11), ArgumentError);
  CHECK_THROWS_AS(rk4_solve(make_problem(ProblemKind::DiffusionReaction), std::vector<double>(11, 0.0), 11),
                  ArgumentError);
  // Blow-up of the nonlinear ODE under a huge control is reported.
  CHECK_THROWS_AS(rk4_solve(make_problem(ProblemKind::NonlinearODE), std::vector<double>(11, 1e100), 11),
                  NumericalError);
}

TEST_CASE("trapezoid") {
  const auto t = make_grid(make_problem(ProblemKind::LinearODE), 101).t;
  CHECK(trapezoid(std::vector<double>(101, 1.0), 0.01) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(trapezoid(t, 0.01) - 0.5) < 1e-12);
  std::vector<double> sq(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) sq[i] = t[i] * t[i];
  CHECK(std::abs(trapezoid(sq, 0.01) - 1.0 / 3.0) < 1e-4);
  CHECK_THROWS_AS(trapezoid(std::vector<double>{1.0}, 0.1), ArgumentError);
}

TEST_CASE("adjoint_solve") {
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const ProblemSpec non = make_problem(ProblemKind::NonlinearODE);
  const auto u = random_control(101, 3, 0.5);

  CostSpec none = make_cost(ProblemKind::NonlinearODE, 1);
  none.p = 0;  // no running and no terminal cost
  for (double l : adjoint_solve(non, none, rk4_solve(non, u, 101), u)) CHECK(l == 0.0);

  const auto lam = adjoint_solve(non, make_cost(ProblemKind::NonlinearODE, 1), rk4_solve(non, u, 101), u);
  CHECK(lam.back() == -1.0);

  // lambda(0) is the sensitivity of J to the initial state.
  const CostSpec j1 = make_cost(ProblemKind::LinearODE, 1);
  const auto lam1 = adjoint_solve(lin, j1, rk4_solve(lin, u, 101), u);
  CHECK(lam1.back() == 0.0);
  const double h = 1e-5;
  ProblemSpec up = lin, dn = lin;
  up.y0 += h;
  dn.y0 -= h;
  const double fd = (ode_cost(j1, rk4_solve(up, u, 101).y, u, 0.01) - ode_cost(j1, rk4_solve(dn, u, 101).y, u, 0.01)) / (2 * h);
  CHECK(std::abs(lam1[0] - fd) / std::abs(fd) < 1e-4);
}

TEST_CASE("discrete gradient is consistent with finite differences") {
  const double h = 1e-5;
  for (ProblemKind kind : {ProblemKind::LinearODE, ProblemKind::NonlinearODE})
    for (int p = 1; p <= 3; ++p) {
      ProblemSpec prob = make_problem(kind);
      const CostSpec cost = make_cost(kind, p);
      const auto u = random_control(100, 10 + p, 0.5);
      const auto du = random_control(100, 20 + p);
      const CostGradient cg = discrete_gradient(prob, cost, u);
      double ip = 0.0;
      std::vector<double> up(u), dn(u);
      for (std::size_t i = 0; i < u.size(); ++i) {
        ip += cg.dJ[i] * du[i];
        up[i] += h * du[i];
        dn[i] -= h * du[i];
      }
      const double dt = 1.0 / 99.0;
      const double fd = (ode_cost(cost, rk4_solve(prob, up, 100).y, up, dt) - ode_cost(cost, rk4_solve(prob, dn, 100).y, dn, dt)) / (2 * h);
      CAPTURE(cost.label());
      CHECK(std::abs(ip - fd) / std::abs(fd) < 1e-6);
    }
}

TEST_CASE("direct adjoint looping") {
  ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const CostSpec j1 = make_cost(ProblemKind::LinearODE, 1);
  DalConfig cfg;
  const DalResult r = dal_optimize(lin, j1, cfg);
  CHECK(r.converged);
  CHECK(r.grad_norm < cfg.tol);
  const auto ric = riccati_control(lin, lin.I);
  CHECK(mse(r.control, ric) < 1e-6);
  for (std::size_t i = 1; i < r.J.size(); ++i) CHECK(r.J[i] <= r.J[i - 1]);

  DalConfig warm;
  warm.initial = r.control;
  const DalResult again = dal_optimize(lin, j1, warm);
  CHECK(again.iterations == 0);
  CHECK(again.converged);

  for (ProblemKind kind : {ProblemKind::LinearODE, ProblemKind::NonlinearODE})
    for (int p = 1; p <= 3; ++p) {
      const ProblemSpec prob = make_problem(kind);
      const DalResult d = dal_optimize(prob, make_cost(kind, p), cfg);
      CAPTURE(make_cost(kind, p).label());
      CHECK(d.converged);
      for (std::size_t i = 1; i < d.J.size(); ++i) CHECK(d.J[i] <= d.J[i - 1]);
    }
}

TEST_CASE("finite-difference PDE solver") {
  PdeSolveConfig c;
  const Matrix z = fd_solve_diffusion_reaction(std::vector<double>(101, 0.0), c);
  CHECK(z.isZero(0.0));

  std::mt19937_64 rng(4);
  const auto xg = make_grid(make_problem(ProblemKind::DiffusionReaction), 2, 101).x;
  const auto u = sample_grf(0.3, 1.0, xg, rng);

  // Self-convergence at the coarse nodes.
  auto solve = [&](int factor) {
    PdeSolveConfig f;
    f.Ix = 100 * factor + 1;
    f.It = 100 * factor + 1;
    return fd_solve_diffusion_reaction(refine_linear(u, factor), f);
  };
  const Matrix a = solve(1), b = solve(2), d = solve(4);
  double e1 = 0.0, e2 = 0.0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      e1 = std::max(e1, std::abs(a(i, j) - b(2 * i, 2 * j)));
      e2 = std::max(e2, std::abs(b(2 * i, 2 * j) - d(4 * i, 4 * j)));
    }
  CHECK(e1 / e2 >= 3.0);

  // Superposition of the linear part.
  PdeSolveConfig lin;
  lin.k = 0.0;
  std::vector<double> u2(u);
  for (double& v : u2) v *= 2.0;
  const Matrix y1 = fd_solve_diffusion_reaction(u, lin), y2 = fd_solve_diffusion_reaction(u2, lin);
  CHECK((y2 - 2.0 * y1).cwiseAbs().maxCoeff() < 1e-10);

  // Long horizon approaches the steady state.
  PdeSolveConfig longrun;
  longrun.T = 200.0;
  longrun.It = 4001;
  const Matrix s = fd_solve_diffusion_reaction(u, longrun);
  const double dt = longrun.T / (longrun.It - 1);
  CHECK((s.row(longrun.It - 1) - s.row(longrun.It - 2)).cwiseAbs().maxCoeff() / dt < 1e-3);
}

TEST_CASE("tracking targets") {
  const ProblemSpec pde = make_problem(ProblemKind::DiffusionReaction);
  const TrackingTarget a = make_tracking_target(pde, 0.25, 9);
  const TrackingTarget b = make_tracking_target(pde, 0.25, 9);
  CHECK(a.u == b.u);
  CHECK(a.y == b.y);
  CHECK(a.y.rows() == 100);
  CHECK(a.y.cols() == 100);
  CHECK(a.y.row(0).isZero(0.0));
  CHECK(a.y.col(0).isZero(0.0));
  CHECK(a.y.col(99).isZero(0.0));
  CHECK(a.y.cwiseAbs().maxCoeff() > 0.0);

  int short_l = 0, long_l = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    short_l += zero_crossings(make_tracking_target(pde, 0.25, s).u);
    long_l += zero_crossings(make_tracking_target(pde, 0.5, s).u);
  }
  CHECK(short_l > long_l);
  CHECK(tracking_length_scale(1) == 0.25);
  CHECK(tracking_length_scale(3) == 0.5);
  CHECK_THROWS_AS(tracking_length_scale(4), ArgumentError);
}
