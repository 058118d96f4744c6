#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "noctl/autodiff/programs.hpp"

using namespace noctl;
using namespace noctl::ad;
using std::abs;
using std::exp;
using std::log;
using std::tanh;

namespace {

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Scalar tanh network with `width` hidden units per layer on `n` inputs;
// weights live in the first part of the argument vector, inputs at the end.
struct TanhNet {
  int n;
  int width;
  int layers;  // hidden layers

  std::size_t param_count() const {
    std::size_t c = 0;
    int in = n;
    for (int l = 0; l < layers; ++l) {
      c += std::size_t(in) * width + width;
      in = width;
    }
    return c + width;
  }

  // Inputs may be plain doubles while the weights are active scalars.
  template <class P, class X>
  auto operator()(const P& p, const X& x) const {
    using T = std::decay_t<decltype(p[0])>;
    std::size_t k = 0;
    int in = n;
    auto layer = [&](const auto& h) {
      std::vector<T> next;
      for (int j = 0; j < width; ++j) {
        T a = p[k + std::size_t(in) * width + j];
        for (int i = 0; i < in; ++i) a = a + p[k + std::size_t(i) * width + j] * h[i];
        next.push_back(tanh(a));
      }
      k += std::size_t(in) * width + width;
      in = width;
      return next;
    };
    std::vector<T> h = layer(x);
    for (int l = 1; l < layers; ++l) h = layer(h);
    T out = p[k] * h[0];
    for (int j = 1; j < width; ++j) out = out + p[k + j] * h[j];
    return out;
  }
};

}  // namespace

TEST_CASE("grad: elementary programs") {
  auto sq = [](const auto& x) { return x[0] * x[0]; };
  CHECK(grad(sq, std::vector<double>{3.0}) == std::vector<double>{6.0});

  auto prod = [](const auto& x) { return x[0] * x[1]; };
  CHECK(grad(prod, std::vector<double>{2.0, 5.0}) == std::vector<double>{5.0, 2.0});

  auto th = [](const auto& x) { return tanh(x[0]); };
  CHECK(grad(th, std::vector<double>{0.0}) == std::vector<double>{1.0});
}

TEST_CASE("grad: domain violations name the node") {
  auto lg = [](const auto& x) { return log(x[0] - 1.0); };
  try {
    grad(lg, std::vector<double>{0.5});
    FAIL("expected an evaluation error");
  } catch (const EvaluationError& e) {
    CHECK(e.node() == 2);  // leaf x, the subtraction, then the log
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  auto div = [](const auto& x) { return x[0] / x[1]; };
  CHECK_THROWS_AS(grad(div, std::vector<double>{1.0, 0.0}), EvaluationError);
  // Overflow is caught where it happens, not downstream.
  auto big = [](const auto& x) { return exp(x[0]) * 0.0; };
  CHECK_THROWS_AS(grad(big, std::vector<double>{1000.0}), EvaluationError);
}

TEST_CASE("directional: elementary programs") {
  auto cube = [](const auto& x) { return x[0] * x[0] * x[0]; };
  CHECK(directional(cube, std::vector<double>{2.0}, std::vector<double>{1.0}) == doctest::Approx(12.0));
  auto add = [](const auto& x) { return x[0] + x[1]; };
  CHECK(directional(add, std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, -1.0}) == 0.0);
  auto ex = [](const auto& x) { return exp(x[0]); };
  CHECK(directional(ex, std::vector<double>{0.0}, std::vector<double>{2.0}) == 2.0);
  CHECK_THROWS_AS(directional(add, std::vector<double>{1.0, 1.0}, std::vector<double>{1.0}), ArgumentError);
}

TEST_CASE("dual arithmetic follows the chain rule") {
  const Dual<double> d{0.7, 1.3};
  const Dual<double> t = tanh(d);
  CHECK(t.t == doctest::Approx((1.0 - std::tanh(0.7) * std::tanh(0.7)) * 1.3).epsilon(1e-15));
  const Dual<double> q = Dual<double>{3.0, 1.0} / Dual<double>{2.0, 0.5};
  CHECK(q.t == doctest::Approx((1.0 * 2.0 - 3.0 * 0.5) / 4.0));
  const Dual<double> p = pow(Dual<double>{2.0, 1.0}, 3.0);
  CHECK(p.t == doctest::Approx(12.0));
}

TEST_CASE("grad_of_directional: bilinear and quadratic forms") {
  auto bilinear = [](const auto& p, const auto& x) { return p[0] * x[0]; };
  CHECK(grad_of_directional(bilinear, std::vector<double>{0.3}, std::vector<double>{2.0},
                            std::vector<double>{1.0}) == std::vector<double>{1.0});
  auto quad = [](const auto& p, const auto& x) { return p[0] * x[0] * x[0]; };
  CHECK(grad_of_directional(quad, std::vector<double>{0.3}, std::vector<double>{3.0},
                            std::vector<double>{1.0}) == std::vector<double>{6.0});
}

TEST_CASE("grad_of_directional matches finite differences of the directional derivative") {
  const TanhNet net{3, 5, 1};
  const double h = 1e-5;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<double> p = uniform(net.param_count(), 100 + seed);
    const std::vector<double> x = uniform(3, 200 + seed);
    const std::vector<double> dir = uniform(3, 300 + seed);
    const std::vector<double> g = grad_of_directional(net, p, x, dir);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double p0 = p[i];
      p[i] = p0 + h;
      const double fp = directional_at(net, p, x, dir);
      p[i] = p0 - h;
      const double fm = directional_at(net, p, x, dir);
      p[i] = p0;
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(g[i] - fd) / std::max(std::abs(g[i]), 1e-8));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("fd_check") {
  auto sq = [](const auto& x) { return x[0] * x[0]; };
  CHECK(fd_check(sq, std::vector<double>{1.0}, 1e-5) < 1e-8);

  // 2 inputs -> 5 -> 5 -> 1 is 50 weights; the inputs stay fixed.
  const TanhNet net{2, 5, 2};
  REQUIRE(net.param_count() == 50);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::vector<double> x = uniform(2, 500 + seed);
    auto as_program = [&](const auto& p) {
      return net(p, x);
    };
    CHECK(fd_check(as_program, uniform(50, seed), 1e-5) < 1e-6);
  }

  auto absval = [](const auto& x) { return abs(x[0]); };
  double e = 0.0;
  CHECK_NOTHROW(e = fd_check(absval, std::vector<double>{0.0}, 1e-5));
  CHECK(e > 0.5);
  CHECK_THROWS_AS(fd_check(sq, std::vector<double>{1.0}, 0.0), ArgumentError);
}

TEST_CASE("forward and reverse modes agree on every basis direction") {
  for (std::size_t n = 1; n <= 10; ++n) {
    auto prog = [n](const auto& x) {
      using T = std::decay_t<decltype(x[0])>;
      T acc = tanh(x[0]) * x[n - 1];
      for (std::size_t i = 1; i < n; ++i) acc = acc + exp(0.3 * x[i]) * x[i - 1] / (2.0 + x[i] * x[i]);
      return acc;
    };
    const std::vector<double> x = uniform(n, 40 + n);
    const std::vector<double> g = grad(prog, x);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> e(n, 0.0);
      e[i] = 1.0;
      const double d = directional(prog, x, e);
      CHECK(std::abs(d - g[i]) <= 1e-15 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("gradients are deterministic and linear") {
  const TanhNet net{4, 6, 2};
  auto p = [&](const auto& v) {
    using T = std::decay_t<decltype(v[0])>;
    return net(std::vector<T>(v.begin(), v.begin() + long(net.param_count())),
               std::vector<T>(v.begin() + long(net.param_count()), v.end()));
  };
  auto q = [](const auto& v) { return v[0] * v[1] + exp(v[2] * 0.1); };
  auto combo = [&](const auto& v) { return 2.5 * p(v) - 0.75 * q(v); };
  const std::vector<double> x = uniform(net.param_count() + 4, 9);
  const auto g1 = grad(combo, x);
  const auto g2 = grad(combo, x);
  CHECK(g1 == g2);
  const auto gp = grad(p, x);
  const auto gq = grad(q, x);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(g1[i] - (2.5 * gp[i] - 0.75 * gq[i])) <= 1e-14 * std::max(1.0, std::abs(g1[i])));
}

TEST_CASE("matrix ops: reverse sweep matches finite differences") {
  // Each case maps a leaf matrix to a scalar through one or more ops.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
  };
  const Matrix w = rnd(4, 3);
  const Matrix bias = rnd(1, 3);
  const Matrix other = rnd(5, 4);
  const Matrix weights = rnd(5, 3);

  using Case = std::function<Var(Tape&, Var)>;
  const std::vector<std::pair<const char*, Case>> cases = {
      {"matmul+add_row+tanh", [&](Tape& t, Var x) { return sum(tanh(add_row(matmul(x, t.leaf(w)), t.leaf(bias))) * t.leaf(weights)); }},
      {"dot", [&](Tape& t, Var x) { return sum(square(dot(x, t.leaf(other)))); }},
      {"dot rhs", [&](Tape& t, Var x) { return sum(dot(t.leaf(other), x) * 0.5); }},
      {"div/exp/log", [&](Tape& t, Var x) { return sum(log(exp(x) + 1.0) / (square(x) + 2.0)); }},
      {"pow", [&](Tape& t, Var x) { return sum(pow(square(x) + 1.0, 1.5)) * t.leaf(0.5); }},
      {"scalar broadcast", [&](Tape& t, Var x) {
         Var s = sum(x) * 0.1;
         return sum((x * s) / (s + 3.0) - s);
       }},
      {"cols/tile", [&](Tape&, Var x) { return sum(square(tile(cols(x, {3, 0, 3}), 2))); }},
      {"mean", [&](Tape&, Var x) { return mean(tanh(x) * x); }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    const Matrix x0 = rnd(5, 4);
    Tape tape;
    Var x = tape.leaf(x0);
    Var out = f(tape, x);
    tape.backward(out);
    const Matrix g = tape.grad(x);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      Matrix xp = x0, xm = x0;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      Tape tp, tm;
      const double fp = f(tp, tp.leaf(xp)).scalar();
      const double fm = f(tm, tm.leaf(xm)).scalar();
      CHECK(g.data()[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("tape rejects mixed tapes and non-scalar roots") {
  Tape a, b;
  Var x = a.leaf(1.0);
  Var y = b.leaf(2.0);
  CHECK_THROWS_AS(x + y, ArgumentError);
  Var m = a.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(a.backward(m), ArgumentError);
  CHECK_THROWS_AS(m + a.leaf(Matrix::Ones(3, 2)), ArgumentError);
}

TEST_CASE("floor guard passes gradient only above the floor") {
  Tape t;
  Matrix v(1, 3);
  v << 0.5, 1e-4, 2.0;
  Var x = t.leaf(v);
  Var out = sum(floor_at(x, 1e-3) * 2.0);
  t.backward(out);
  const Matrix g = t.grad(x);
  CHECK(g(0, 0) == 2.0);
  CHECK(g(0, 1) == 0.0);
  CHECK(out.scalar() == doctest::Approx(2 * (0.5 + 1e-3 + 2.0)));
}
