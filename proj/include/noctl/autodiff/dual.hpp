#pragma once

// Forward-mode dual numbers, generic over the component type.
//
// Dual<double> propagates one directional derivative. Dual<Var> carries both
// the value and the tangent on a reverse-mode tape, which is how derivatives of
// input-derivatives are taken (forward over reverse). Nesting,
// Dual<Dual<T>>, yields second derivatives along one direction.

#include <cmath>

#include "noctl/autodiff/tape.hpp"

namespace noctl::ad {

template <class T>
struct Dual {
  T v;  // primal
  T t;  // tangent
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

// Scalars that fit the generic cost and dynamics templates.
inline double floor_at(double a, double lo) { return a > lo ? a : lo; }
inline double square(double a) { return a * a; }
inline long double floor_at(long double a, double lo) { return a > lo ? a : static_cast<long double>(lo); }
inline long double square(long double a) { return a * a; }

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return {a.v + b.v, a.t + b.t}; }
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return {a.v - b.v, a.t - b.t}; }
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) { return {a.v * b.v, a.v * b.t + a.t * b.v}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.t - q * b.t) / b.v};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.t}; }

template <class T>
Dual<T> operator+(const Dual<T>& a, double c) { return {a.v + c, a.t}; }
template <class T>
Dual<T> operator+(double c, const Dual<T>& a) { return {c + a.v, a.t}; }
template <class T>
Dual<T> operator-(const Dual<T>& a, double c) { return {a.v - c, a.t}; }
template <class T>
Dual<T> operator-(double c, const Dual<T>& a) { return {c - a.v, -a.t}; }
template <class T>
Dual<T> operator*(const Dual<T>& a, double c) { return {a.v * c, a.t * c}; }
template <class T>
Dual<T> operator*(double c, const Dual<T>& a) { return {c * a.v, c * a.t}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, double c) { return {a.v / c, a.t / c}; }
template <class T>
Dual<T> operator/(double c, const Dual<T>& a) {
  T q = c / a.v;
  return {q, -(q / a.v) * a.t};
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  T th = tanh(a.v);
  return {th, (1.0 - th * th) * a.t};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  T e = exp(a.v);
  return {e, e * a.t};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return {log(a.v), a.t / a.v};
}
template <class T>
Dual<T> pow(const Dual<T>& a, double p) {
  using std::pow;
  return {pow(a.v, p), p * pow(a.v, p - 1.0) * a.t};
}
template <class T>
Dual<T> square(const Dual<T>& a) {
  return {square(a.v), 2.0 * a.v * a.t};
}
template <class T>
Dual<T> abs(const Dual<T>& a) {
  using std::abs;
  static_assert(std::is_same_v<T, double>, "abs is only differentiated in forward mode on plain duals");
  return {abs(a.v), a.v >= 0 ? a.t : -a.t};
}
// Guarded floor for plain duals: below the floor the value is pinned and the
// tangent vanishes.
inline Dual<double> floor_at(const Dual<double>& a, double lo) {
  return a.v > lo ? a : Dual<double>{lo, 0.0};
}

// Matrix-valued duals flowing through the network layers. The weight operand
// is not differentiated along the tangent direction.
template <class T>
Dual<T> matmul(const Dual<T>& x, Var w) { return {matmul(x.v, w), matmul(x.t, w)}; }
template <class T>
Dual<T> add_row(const Dual<T>& x, Var row) { return {add_row(x.v, row), x.t}; }
template <class T>
Dual<T> dot(const Dual<T>& x, Var w) { return {dot(x.v, w), dot(x.t, w)}; }

}  // namespace noctl::ad
