#include "noctl/cost.hpp"

#include <fmt/format.h>

#include "noctl/errors.hpp"

namespace noctl {

void CostSpec::validate(const ProblemSpec& spec) const {
  if (problem != spec.kind) throw ArgumentError("cost belongs to the " + to_string(problem) + " problem");
  if (p < 1 || p > 3) throw ArgumentError(fmt::format("cost selector must be 1, 2 or 3, got {}", p));
  if (tracking() && (target.rows() != spec.I || target.cols() != spec.Ix))
    throw ArgumentError(fmt::format("tracking target is {}x{}, grid is {}x{}", target.rows(), target.cols(), spec.I,
                                    spec.Ix));
}

std::string CostSpec::label() const { return fmt::format("{}-J{}", to_string(problem), p); }

CostSpec make_cost(ProblemKind problem, int p) {
  if (problem == ProblemKind::DiffusionReaction) throw ArgumentError("the PDE cost needs a tracking target");
  if (p < 1 || p > 3) throw ArgumentError(fmt::format("cost selector must be 1, 2 or 3, got {}", p));
  CostSpec c;
  c.problem = problem;
  c.p = p;
  return c;
}

CostSpec make_tracking_cost(Matrix target, int p) {
  CostSpec c;
  c.problem = ProblemKind::DiffusionReaction;
  c.p = p;
  c.target = std::move(target);
  return c;
}

std::vector<double> trapezoid_weights(int n, double dt) {
  if (n < 2) throw ArgumentError("trapezoid: need at least 2 values");
  std::vector<double> w(static_cast<std::size_t>(n), dt);
  w.front() = w.back() = 0.5 * dt;
  return w;
}

double trapezoid(std::span<const double> values, double dt) {
  if (values.size() < 2) throw ArgumentError("trapezoid: need at least 2 values");
  if (!(dt > 0.0)) throw ArgumentError("trapezoid: dt must be positive");
  double s = 0.5 * (values.front() + values.back());
  for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
  return dt * s;
}

}  // namespace noctl
