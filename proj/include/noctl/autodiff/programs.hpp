#pragma once

// Derivatives of scalar programs.
//
// A program is any callable that is generic in its scalar type, e.g.
//   auto f = [](const auto& x) { return x[0] * tanh(x[1]); };
// It is invoked with std::vector<T> for T in {double, Var, Dual<double>}.
// Parameterized programs take (params, inputs) and are invoked with
// Dual<Var> or Dual<double> for both arguments.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "noctl/autodiff/dual.hpp"
#include "noctl/autodiff/tape.hpp"
#include "noctl/errors.hpp"

namespace noctl::ad {

template <class F>
double evaluate(F&& program, std::span<const double> inputs) {
  std::vector<double> x(inputs.begin(), inputs.end());
  return static_cast<double>(program(std::as_const(x)));
}

// Reverse-mode gradient of a scalar program.
template <class F>
std::vector<double> grad(F&& program, std::span<const double> inputs) {
  Tape tape;
  std::vector<Var> x;
  x.reserve(inputs.size());
  for (double v : inputs) x.push_back(tape.leaf(v));
  Var out = program(std::as_const(x));
  tape.backward(out);
  std::vector<double> g(inputs.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = tape.grad(x[i])(0, 0);
  return g;
}

// Forward-mode directional derivative: grad(program) . direction.
template <class F>
double directional(F&& program, std::span<const double> inputs, std::span<const double> direction) {
  if (inputs.size() != direction.size()) throw ArgumentError("directional: direction length differs from inputs");
  std::vector<Dual<double>> x(inputs.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = {inputs[i], direction[i]};
  return program(std::as_const(x)).t;
}

// d/d(params) of the directional derivative of program(params; .) along
// `direction` in the inputs: forward mode for the inner derivative, recorded on
// a tape and swept in reverse for the outer one.
template <class F>
std::vector<double> grad_of_directional(F&& program, std::span<const double> params,
                                        std::span<const double> inputs, std::span<const double> direction) {
  if (inputs.size() != direction.size())
    throw ArgumentError("grad_of_directional: direction length differs from inputs");
  Tape tape;
  const Var zero = tape.leaf(0.0);
  std::vector<Dual<Var>> p;
  p.reserve(params.size());
  for (double v : params) p.push_back({tape.leaf(v), zero});
  std::vector<Dual<Var>> x;
  x.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) x.push_back({tape.leaf(inputs[i]), tape.leaf(direction[i])});
  Dual<Var> out = program(std::as_const(p), std::as_const(x));
  tape.backward(out.t);
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = tape.grad(p[i].v)(0, 0);
  return g;
}

// Same inner derivative evaluated with plain duals; used as the function the
// finite-difference oracle differentiates.
template <class F>
double directional_at(F&& program, std::span<const double> params, std::span<const double> inputs,
                      std::span<const double> direction) {
  std::vector<Dual<double>> p(params.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = {params[i], 0.0};
  std::vector<Dual<double>> x(inputs.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = {inputs[i], direction[i]};
  return program(std::as_const(p), std::as_const(x)).t;
}

// Largest componentwise relative error between the reverse-mode gradient and
// central differences of width 2*step. Denominator is max(|analytic|, 1e-8).
template <class F>
double fd_check(F&& program, std::span<const double> inputs, double step) {
  if (!(step > 0.0)) throw ArgumentError("fd_check: step must be positive");
  const std::vector<double> g = grad(program, inputs);
  std::vector<double> x(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = evaluate(program, x);
    x[i] = x0 - step;
    const double fm = evaluate(program, x);
    x[i] = x0;
    const double fd = (fp - fm) / (2.0 * step);
    worst = std::max(worst, std::abs(g[i] - fd) / std::max(std::abs(g[i]), 1e-8));
  }
  return worst;
}

}  // namespace noctl::ad
