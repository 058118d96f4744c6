#pragma once

// Classical reference solvers: RK4 for the ODEs, direct adjoint looping for
// their optimal controls, Crank-Nicolson for the diffusion-reaction PDE.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "noctl/cost.hpp"
#include "noctl/kernels.hpp"
#include "noctl/problems.hpp"

namespace noctl {

struct Trajectory {
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> lambda;  // filled by adjoint_solve
};

// Classical RK4 on the I-node grid; controls at half steps are the average of
// the neighbouring sensor values.
Trajectory rk4_solve(const ProblemSpec& problem, std::span<const double> control, int I);

// Discrete cost: trapezoid over the running cost plus the terminal cost.
double ode_cost(const CostSpec& cost, std::span<const double> y, std::span<const double> u, double dt);

// Continuous adjoint  -lambda' = L_y + lambda f_y,  lambda(T) = E_y,
// integrated backward with RK4 (state interpolated by cubic Hermite).
std::vector<double> adjoint_solve(const ProblemSpec& problem, const CostSpec& cost, const Trajectory& traj,
                                  std::span<const double> control);

// Exact gradient dJ/du_i of the discrete cost through the RK4 recursion.
struct CostGradient {
  double J = 0.0;
  std::vector<double> dJ;
  Trajectory traj;
};
CostGradient discrete_gradient(const ProblemSpec& problem, const CostSpec& cost, std::span<const double> control);

struct DalConfig {
  double step = 1.0;  // first trial step of the backtracking search
  int max_iter = 10000;
  double tol = 1e-8;  // on the max-norm of the gradient per unit time
  std::optional<std::vector<double>> initial;
};

struct DalResult {
  std::vector<double> control;
  std::vector<double> J;  // per iteration, starting with the initial guess
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

DalResult dal_optimize(const ProblemSpec& problem, const CostSpec& cost, const DalConfig& config);

// Optimal control of the linear ODE with 1/2 int (y^2 + u^2) from the Riccati
// equation p' = p^2 + 2p - 1, p(1) = 0, closed loop u = -p y.
std::vector<double> riccati_control(const ProblemSpec& problem, int I);

struct PdeSolveConfig {
  int Ix = 101;
  int It = 101;
  double T = 1.0;
  double D = 0.01;
  double k = 0.01;
};

// Rows are time levels, columns space nodes. u is given on the Ix-node grid.
Matrix fd_solve_diffusion_reaction(std::span<const double> u, const PdeSolveConfig& config);

// u sampled at `factor`-times refined space nodes by linear interpolation.
std::vector<double> refine_linear(std::span<const double> u, int factor);

struct TrackingTarget {
  std::vector<double> u;  // on the problem's x grid
  Matrix y;               // I x Ix on the problem grid
};

// Finite-difference state on a `refine`-times refined grid, sampled back at
// the problem's I x Ix nodes.
Matrix pde_state(const ProblemSpec& problem, std::span<const double> u, int refine = 2);

// Length scale of the tracking target for cost selector p.
double tracking_length_scale(int p);

// Target control from a unit GRF, state from the finite-difference solver on
// a `refine`-times refined grid, sampled back at the problem's nodes.
TrackingTarget make_tracking_target(const ProblemSpec& problem, double l, std::uint64_t seed, int refine = 2);

}  // namespace noctl
