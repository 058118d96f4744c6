#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "noctl/control_opt.hpp"

using namespace noctl;

namespace {

NetworkSpec net(int in, NetKind kind = NetKind::PlainFC) {
  NetworkSpec s;
  s.kind = kind;
  s.input_width = in;
  s.hidden_width = 8;
  s.depth = 3;
  s.output_width = 6;
  return s;
}

ProblemSpec grid_for(ProblemKind kind) {
  ProblemSpec p = make_problem(kind);
  if (!p.is_ode()) {
    p.I = 12;
    p.Ix = 10;
  }
  return p;
}

DeepOnetModel model_for(const ProblemSpec& p, std::uint64_t seed, double bias = 0.0) {
  const NetKind k = p.kind == ProblemKind::NonlinearODE ? NetKind::ModifiedFC : NetKind::PlainFC;
  DeepOnetModel m = make_deeponet(net(p.sensors(), k), net(p.query_dim(), k), p.sensors(), p.query_dim(), seed);
  m.params.at(m.params.tensors() - 1)(0, 0) = bias;
  return m;
}

DeepOnetModel constant_model(const ProblemSpec& p, double c) {
  DeepOnetModel m = model_for(p, 0);
  m.params.unflatten(std::vector<double>(m.params.count(), 0.0));
  m.params.at(m.params.tensors() - 1)(0, 0) = c;
  return m;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

CostSpec cost_for(const ProblemSpec& p, int k, std::uint64_t seed = 0) {
  if (p.is_ode()) return make_cost(p.kind, k);
  const std::vector<double> t = random_vec(std::size_t(p.I * p.Ix), seed, 0.3);
  Matrix target(p.I, p.Ix);
  std::copy(t.begin(), t.end(), target.data());
  return make_tracking_cost(target, k);
}

}  // namespace

TEST_CASE("cost_value") {
  const ProblemSpec non = make_problem(ProblemKind::NonlinearODE);
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  std::vector<double> y(100, 0.3), u(100, 0.0);
  y.back() = 0.4;
  CHECK(cost_value(make_cost(ProblemKind::NonlinearODE, 1), non, y, u) == -0.4);

  const std::vector<double> same = random_vec(100, 1);
  CHECK(cost_value(make_cost(ProblemKind::NonlinearODE, 3), non, same, same) == 0.0);

  CHECK(cost_value(make_cost(ProblemKind::LinearODE, 1), lin, std::vector<double>(100, 1.0), u) ==
        doctest::Approx(0.5).epsilon(1e-14));

  // 1/y floored at 1e-3: one interior node contributes dt / 1e-3.
  std::vector<double> ones(100, 1.0);
  const double base = cost_value(make_cost(ProblemKind::LinearODE, 2), lin, ones, u);
  ones[50] = 0.0;
  const double floored = cost_value(make_cost(ProblemKind::LinearODE, 2), lin, ones, u);
  CHECK(floored - base == doctest::Approx((1000.0 - 1.0) / 99.0).epsilon(1e-12));

  ProblemSpec pde = make_problem(ProblemKind::DiffusionReaction);
  pde.I = 7;
  pde.Ix = 5;
  const CostSpec track = cost_for(pde, 1, 3);
  std::vector<double> field(track.target.data(), track.target.data() + track.target.size());
  CHECK(cost_value(track, pde, field, std::vector<double>(5, 0.0)) == 0.0);
  for (double& v : field) v += 1.0;
  CHECK(cost_value(track, pde, field, std::vector<double>(5, 0.0)) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(cost_value(make_cost(ProblemKind::LinearODE, 1), lin, std::vector<double>(99, 0.0), u),
                  ArgumentError);
  CHECK_THROWS_AS(cost_value(make_cost(ProblemKind::LinearODE, 1), non, y, u), ArgumentError);
}

TEST_CASE("second_diff_reg") {
  std::vector<double> line(10);
  for (int i = 0; i < 10; ++i) line[i] = 0.5 * i - 2.0;
  CHECK(second_diff_reg(line) == 0.0);
  CHECK(second_diff_reg(std::vector<double>{0.0, 1.0, 0.0}) == 4.0);
  const std::vector<double> r = random_vec(20, 2);
  std::vector<double> r3(r);
  for (double& v : r3) v *= 3.0;
  CHECK(second_diff_reg(r3) == doctest::Approx(9.0 * second_diff_reg(r)).epsilon(1e-13));
  CHECK_THROWS_AS(second_diff_reg(std::vector<double>{1.0, 2.0}), ArgumentError);
}

TEST_CASE("penalized_cost") {
  for (ProblemKind kind : {ProblemKind::LinearODE, ProblemKind::NonlinearODE, ProblemKind::DiffusionReaction}) {
    const ProblemSpec p = grid_for(kind);
    const DeepOnetModel m = model_for(p, 4, 1.5);
    const std::vector<double> u = random_vec(std::size_t(p.sensors()), 5, 0.5);
    for (int k = 1; k <= 3; ++k) {
      const CostSpec c = cost_for(p, k, 7);
      const ControlObjective plain(m, p, c, {});
      const CostParts parts = plain.value(u);
      CHECK(parts.total == cost_value(c, p, plain.state(u), u));
      CHECK(parts.penalty == 0.0);
      CHECK(parts.reg == 0.0);

      const CostParts full = penalized_cost(m, p, c, {3.0, 0.7}, u);
      CHECK(full.total == (full.cost + full.penalty) + full.reg);
      CHECK(full.penalty >= 0.0);
      CHECK(full.reg >= 0.0);
      CHECK(full.penalty == doctest::Approx(3.0 * plain.mean_residual(u)).epsilon(1e-14));
      CHECK(full.reg == doctest::Approx(0.7 * second_diff_reg(u)).epsilon(1e-12));
    }
  }

  // Constant model y = 0.04 with u = 0.04 on the nonlinear ODE: residual
  // (2.5 * 0.04)^2 = 0.01 everywhere, zero tracking-type cost, zero reg.
  const ProblemSpec non = make_problem(ProblemKind::NonlinearODE);
  const CostParts pc =
      penalized_cost(constant_model(non, 0.04), non, make_cost(ProblemKind::NonlinearODE, 3), {100.0, 1.0},
                     std::vector<double>(100, 0.04));
  CHECK(pc.cost == 0.0);
  CHECK(pc.reg == 0.0);
  CHECK(pc.penalty == doctest::Approx(1.0).epsilon(1e-12));

  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  CHECK(penalized_cost(constant_model(lin, 1e-4), lin, make_cost(ProblemKind::LinearODE, 2), {}, std::vector<double>(100, 0.0))
            .floored);
  CHECK(!penalized_cost(constant_model(lin, 1.0), lin, make_cost(ProblemKind::LinearODE, 2), {}, std::vector<double>(100, 0.0))
             .floored);
  CHECK_THROWS_AS(ControlObjective(model_for(lin, 1), lin, make_cost(ProblemKind::LinearODE, 1), {-1.0, 0.0}),
                  ConfigError);
}

TEST_CASE("control gradient matches central differences") {
  const double h = 1e-5;
  for (ProblemKind kind : {ProblemKind::LinearODE, ProblemKind::NonlinearODE, ProblemKind::DiffusionReaction}) {
    const ProblemSpec p = grid_for(kind);
    for (int k = 1; k <= 3; ++k) {
      double worst = 0.0;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        // Bias 2 keeps the linear J2 state well away from the 1/y floor.
        const DeepOnetModel m = model_for(p, 1000 + seed, 2.0);
        const ControlObjective obj(m, p, cost_for(p, k, seed), {10.0, 0.5});
        const std::vector<double> u = random_vec(std::size_t(p.sensors()), 50 + seed, 0.5);
        const std::vector<double> dir = random_vec(u.size(), 90 + seed);
        std::vector<double> g;
        obj.value_and_grad(u, g);
        double analytic = 0.0;
        std::vector<double> up(u), dn(u);
        for (std::size_t i = 0; i < u.size(); ++i) {
          analytic += g[i] * dir[i];
          up[i] += h * dir[i];
          dn[i] -= h * dir[i];
        }
        const double fd = (obj.value(up).total - obj.value(dn).total) / (2 * h);
        worst = std::max(worst, std::abs(analytic - fd) / std::abs(fd));
      }
      CAPTURE(to_string(kind));
      CAPTURE(k);
      CHECK(worst < 1e-5);
    }
  }

  // A model whose output ignores u has no cost gradient.
  const ProblemSpec pde = grid_for(ProblemKind::DiffusionReaction);
  const std::vector<double> g0 = control_gradient(constant_model(pde, 0.2), pde, cost_for(pde, 1), {},
                                                  random_vec(std::size_t(pde.sensors()), 3));
  for (double v : g0) CHECK(v == 0.0);

  // Regularization alone on affine u.
  std::vector<double> line(100);
  for (int i = 0; i < 100; ++i) line[i] = 0.25 * i / 99.0;
  Matrix target = Matrix::Constant(pde.I, pde.Ix, 0.2);
  const std::vector<double> gr =
      control_gradient(constant_model(pde, 0.2), pde, make_tracking_cost(target, 1), {0.0, 1.0},
                       std::vector<double>(line.begin(), line.begin() + pde.Ix));
  for (double v : gr) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("armijo_search") {
  const Objective half_sq = [](std::span<const double> x) { return 0.5 * x[0] * x[0]; };
  const std::vector<double> x{1.0}, d{-1.0}, g{1.0};
  const LineSearchResult r = armijo_search(half_sq, x, 0.5, d, g);
  CHECK(r.alpha == 1.0);
  CHECK(r.f == 0.0);
  CHECK(!r.fell_back);

  // d = 3 overshoots: 1, 0.5 fail; 0.25 gives x = 0.25.
  const LineSearchResult o = armijo_search(half_sq, x, 0.5, std::vector<double>{-3.0}, g);
  CHECK(o.alpha == 0.5);
  CHECK(o.trials == 2);

  // Not a descent direction: falls back to -g.
  const LineSearchResult fb = armijo_search(half_sq, x, 0.5, std::vector<double>{1.0}, g);
  CHECK(fb.fell_back);
  CHECK(fb.alpha == 1.0);

  // Objective increasing along d while g claims otherwise.
  const Objective up = [](std::span<const double> v) { return v[0]; };
  CHECK_THROWS_AS(armijo_search(up, x, 1.0, std::vector<double>{1.0}, std::vector<double>{-1.0}), NumericalError);

  // Threshold 0: plain decrease.
  ArmijoConfig plain;
  plain.c = 0.0;
  const Objective flat_min = [](std::span<const double> v) { return std::pow(v[0] - 0.999, 2); };
  const LineSearchResult p0 = armijo_search(flat_min, x, std::pow(0.001, 2), std::vector<double>{-1.0},
                                            std::vector<double>{0.002}, plain);
  CHECK(p0.alpha < 1.0);
  CHECK(p0.f < std::pow(0.001, 2));
}

TEST_CASE("bfgs_update") {
  // f = x^T A x / 2 with A = diag(1, 4), exact line searches from (1, 1).
  const Eigen::Vector2d a(1.0, 4.0);
  Eigen::Vector2d x(1.0, 1.0);
  BfgsState s = BfgsState::identity(2);
  for (int k = 0; k < 2; ++k) {
    const Eigen::Vector2d g = a.cwiseProduct(x);
    const Eigen::Vector2d d = -(s.H * g);
    const double alpha = -g.dot(d) / d.dot(a.cwiseProduct(d));
    const Eigen::Vector2d step = alpha * d;
    const Eigen::Vector2d xn = x + step;
    const Eigen::Vector2d gy = a.cwiseProduct(xn) - g;
    s = bfgs_update(s, std::vector<double>{step(0), step(1)}, std::vector<double>{gy(0), gy(1)});
    x = xn;
  }
  CHECK(std::abs(s.H(0, 0) - 1.0) < 1e-6);
  CHECK(std::abs(s.H(1, 1) - 0.25) < 1e-6);
  CHECK(std::abs(s.H(0, 1)) < 1e-6);
  CHECK(std::abs(s.H(1, 0)) < 1e-6);

  const BfgsState id = BfgsState::identity(3);
  CHECK(bfgs_update(id, std::vector<double>{1, 0, 0}, std::vector<double>{-1, 0, 0}).H == id.H);
  CHECK(bfgs_update(id, std::vector<double>{1e-6, 0, 0}, std::vector<double>{1e-6, 0, 0}).H == id.H);

  BfgsState r = BfgsState::identity(6);
  for (std::uint64_t k = 0; k < 10; ++k) {
    const std::vector<double> sv = random_vec(6, k), noise = random_vec(6, 100 + k, 0.1);
    std::vector<double> yv(6);
    for (int i = 0; i < 6; ++i) yv[i] = (i + 1.0) * sv[i] + noise[i];
    r = bfgs_update(r, sv, yv);
    CHECK((r.H - r.H.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("optimize_control") {
  for (ProblemKind kind : {ProblemKind::LinearODE, ProblemKind::NonlinearODE, ProblemKind::DiffusionReaction}) {
    const ProblemSpec p = grid_for(kind);
    for (int k = 1; k <= 3; ++k) {
      const ControlObjective obj(model_for(p, 31 + k, 1.0), p, cost_for(p, k, 11), {5.0, 0.2});
      RoutineConfig bfgs;
      bfgs.routine = Routine::BFGS;
      bfgs.iterations = 40;
      const OptimizeResult r = optimize_control(obj, bfgs);
      CAPTURE(to_string(kind));
      CAPTURE(k);
      CHECK(r.history.front().parts.total == obj.value(std::vector<double>(std::size_t(p.sensors()), 0.0)).total);
      for (std::size_t i = 1; i < r.history.size(); ++i) {
        // Armijo with threshold 1e-4 on every accepted step.
        CHECK(r.history[i].parts.total <= r.history[i - 1].parts.total);
      }
      CHECK(r.history.back().parts.total < r.history.front().parts.total);
      CHECK(r.control.size() == std::size_t(p.sensors()));
    }
  }

  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const ControlObjective obj(model_for(lin, 5, 1.0), lin, make_cost(ProblemKind::LinearODE, 1), {100.0, 0.2});

  SUBCASE("ADAM first step moves every node by lr") {
    RoutineConfig adam;
    adam.routine = Routine::ADAM;
    adam.lr = 0.01;
    adam.iterations = 1;
    const OptimizeResult r = optimize_control(obj, adam);
    REQUIRE(r.history.size() == 2);
    for (double v : r.control) CHECK(std::abs(std::abs(v) - 0.01) < 1e-6);
  }

  SUBCASE("GD with a small step decreases a quadratic tracking cost") {
    const ProblemSpec pde = grid_for(ProblemKind::DiffusionReaction);
    const ControlObjective q(model_for(pde, 8), pde, cost_for(pde, 2, 4), {});
    RoutineConfig gd;
    gd.routine = Routine::GD;
    gd.lr = 1e-3;
    gd.iterations = 50;
    const OptimizeResult r = optimize_control(q, gd);
    REQUIRE(r.history.size() == 51);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i].parts.total < r.history[i - 1].parts.total);
    CHECK(r.stop == "budget");
    CHECK(r.iterations == 50);
  }

  SUBCASE("gradient tolerance stops early") {
    RoutineConfig bfgs;
    bfgs.routine = Routine::BFGS;
    bfgs.iterations = 500;
    bfgs.grad_tol = 1e-3;
    const OptimizeResult r = optimize_control(obj, bfgs);
    CHECK(r.stop == "grad_tol");
    CHECK(r.history.back().grad_norm < 1e-3);
  }

  SUBCASE("reproducible") {
    RoutineConfig gd;
    gd.routine = Routine::GD;
    gd.lr = 0.2;
    gd.iterations = 30;
    const OptimizeResult a = optimize_control(obj, gd), b = optimize_control(obj, gd);
    CHECK(a.control == b.control);
  }

  SUBCASE("divergence is reported with the history") {
    RoutineConfig gd;
    gd.routine = Routine::GD;
    gd.lr = 1e300;
    gd.iterations = 10;
    try {
      (void)optimize_control(obj, gd);
      FAIL("expected OptimizationAborted");
    } catch (const OptimizationAborted& e) {
      CHECK(!e.partial().history.empty());
    }
  }
}

TEST_CASE("mse_report") {
  const std::vector<double> a = random_vec(10, 1);
  const MseReport same = mse_report(a, a);
  CHECK(same.mse == 0.0);
  CHECK(same.sd == 0.0);
  std::vector<double> shifted(a);
  for (double& v : shifted) v += 0.5;
  const MseReport c = mse_report(shifted, a);
  CHECK(c.mse == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(c.sd < 1e-15);
  const MseReport alt = mse_report(std::vector<double>{1, -1, 1, -1}, std::vector<double>{0, 0, 0, 0});
  CHECK(alt.mse == 1.0);
  CHECK(alt.sd == 1.0);
  CHECK_THROWS_AS(mse_report(a, std::vector<double>(9, 0.0)), ArgumentError);
}

TEST_CASE("output files") {
  const auto dir = std::filesystem::temp_directory_path();
  OptimizeRow row;
  row.iter = 3;
  row.parts = {1.0 / 3.0, 0.25, 0.0, 1.0 / 12.0, false};
  write_optimize_history({row}, (dir / "noctl_opt.csv").string());
  std::ifstream in(dir / "noctl_opt.csv");
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "iter,J_mu,cost,penalty,reg,grad_norm");
  CHECK(line == "3,0.33333333333333331,0.25,0,0.083333333333333329,0");
  write_control(std::vector<double>{0.1, 2.0}, (dir / "noctl_u.csv").string());
  std::ifstream cu(dir / "noctl_u.csv");
  std::getline(cu, header);
  std::getline(cu, line);
  CHECK(header == "node,value");
  CHECK(line == "0,0.10000000000000001");
  std::filesystem::remove(dir / "noctl_opt.csv");
  std::filesystem::remove(dir / "noctl_u.csv");
}
