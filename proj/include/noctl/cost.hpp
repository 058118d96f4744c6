#pragma once

// Control costs, per problem:
//   linear ODE     p=1: 1/2 int (y^2 + u^2)   p=2: int (1/y + u^2)   p=3: int (y^4 + u^2)
//   nonlinear ODE  p=1: -y(1)                 p=2: int (y^2 + u^2)   p=3: int (y - u)^2
//   PDE            tracking of a stored target field
// Integrals use the trapezoid rule on the sensor grid.

#include <span>
#include <string>

#include "noctl/autodiff/dual.hpp"
#include "noctl/kernels.hpp"
#include "noctl/problems.hpp"

namespace noctl {

// y is floored here before 1/y is taken.
inline constexpr double kInverseFloor = 1e-3;

struct CostSpec {
  ProblemKind problem = ProblemKind::LinearODE;
  int p = 1;
  // Tracking target, time rows x space columns, on the problem grid.
  Matrix target;

  bool tracking() const { return problem == ProblemKind::DiffusionReaction; }
  bool has_terminal() const { return problem == ProblemKind::NonlinearODE && p == 1; }
  bool has_running() const { return !tracking() && !has_terminal(); }
  void validate(const ProblemSpec& spec) const;
  std::string label() const;
};

CostSpec make_cost(ProblemKind problem, int p);
CostSpec make_tracking_cost(Matrix target, int p);

// Running cost L(y, u) of the ODE costs, generic in the scalar type.
template <class T>
T running_cost(const CostSpec& c, const T& y, const T& u) {
  using ad::floor_at;
  using ad::square;
  if (c.problem == ProblemKind::LinearODE) {
    if (c.p == 1) return 0.5 * (square(y) + square(u));
    if (c.p == 2) return 1.0 / floor_at(y, kInverseFloor) + square(u);
    return square(square(y)) + square(u);
  }
  if (c.p == 2) return square(y) + square(u);
  if (c.p == 3) return square(y - u);
  return 0.0 * y;
}

template <class T>
T terminal_cost(const CostSpec& c, const T& y) {
  if (c.has_terminal()) return -1.0 * y;
  return 0.0 * y;
}

// Trapezoid weights dt * (1/2, 1, ..., 1, 1/2).
std::vector<double> trapezoid_weights(int n, double dt);
double trapezoid(std::span<const double> values, double dt);

}  // namespace noctl
