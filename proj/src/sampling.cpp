#include "noctl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "noctl/errors.hpp"

namespace noctl {

std::string to_string(Family f) {
  switch (f) {
    case Family::Constant: return "constant";
    case Family::Linear: return "linear";
    case Family::Polynomial: return "polynomial";
    case Family::GRF: return "grf";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  if (s == "constant") return Family::Constant;
  if (s == "linear") return Family::Linear;
  if (s == "polynomial") return Family::Polynomial;
  if (s == "grf") return Family::GRF;
  throw ArgumentError("unknown function family '" + s + "'");
}

void FamilyConfig::validate() const {
  if (!(a_hi >= a_lo)) throw ArgumentError(to_string(family) + ": empty coefficient range");
  if (family == Family::Linear && !(b_hi >= b_lo)) throw ArgumentError("linear: empty intercept range");
  if (family == Family::Polynomial) {
    if (degrees.empty()) throw ArgumentError("polynomial: no degrees given");
    for (int d : degrees)
      if (d < 0) throw ArgumentError("polynomial: negative degree");
  }
  if (family == Family::GRF) {
    if (!(l_lo > 0.0) || !(l_hi >= l_lo)) throw ArgumentError("grf: length-scale range must be positive");
    if (!(sigma > 0.0)) throw ArgumentError("grf: sigma must be positive");
  }
}

std::vector<FamilyConfig> default_families(ProblemKind kind) {
  auto grf = [](double lo, double hi) {
    FamilyConfig c;
    c.family = Family::GRF;
    c.l_lo = lo;
    c.l_hi = hi;
    return c;
  };
  auto poly = [](int dlo, int dhi) {
    FamilyConfig c;
    c.family = Family::Polynomial;
    for (int d = dlo; d <= dhi; ++d) c.degrees.push_back(d);
    return c;
  };
  switch (kind) {
    case ProblemKind::LinearODE: {
      FamilyConfig lin;
      lin.family = Family::Linear;
      lin.a_lo = -2.0;
      lin.a_hi = 2.0;
      FamilyConfig c;
      c.family = Family::Constant;
      return {grf(0.02, 0.5), poly(3, 8), lin, c};
    }
    case ProblemKind::NonlinearODE: return {grf(0.05, 0.5), poly(1, 5)};
    case ProblemKind::DiffusionReaction: return {grf(0.02, 1.0)};
  }
  return {};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(splitmix64(seed) ^ index); }

std::vector<double> constant_fn(double c, std::span<const double> grid) {
  return std::vector<double>(grid.size(), c);
}

std::vector<double> linear_fn(double k, double b, std::span<const double> grid) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = k * grid[i] + b;
  return v;
}

std::vector<double> polynomial_fn(std::span<const double> coeffs, std::span<const double> grid) {
  std::vector<double> v(grid.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double acc = 0.0;
    for (double c : coeffs) acc = acc * grid[i] + c;
    v[i] = acc;
  }
  return v;
}

Matrix grf_covariance(double l, double sigma, std::span<const double> grid) {
  if (!(l > 0.0) || !(sigma > 0.0)) throw ArgumentError("grf: length scale and sigma must be positive");
  const auto n = static_cast<Eigen::Index>(grid.size());
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = grid[i] - grid[j];
      k(i, j) = sigma * sigma * std::exp(-d * d / (2.0 * l * l));
    }
  return k;
}

std::vector<double> sample_grf(double l, double sigma, std::span<const double> grid, std::mt19937_64& rng) {
  const Matrix k = grf_covariance(l, sigma, grid);
  const auto n = k.rows();
  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() != Eigen::Success) continue;
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    const Eigen::VectorXd y = llt.matrixL() * z;
    return std::vector<double>(y.data(), y.data() + n);
  }
  throw NumericalError(fmt::format("grf: covariance factorization failed for l = {} even with jitter 1e-6", l));
}

std::vector<double> sample_function(const FamilyConfig& cfg, std::span<const double> grid, std::mt19937_64& rng) {
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  switch (cfg.family) {
    case Family::Constant: return constant_fn(uniform(cfg.a_lo, cfg.a_hi), grid);
    case Family::Linear: {
      const double k = uniform(cfg.a_lo, cfg.a_hi);
      const double b = uniform(cfg.b_lo, cfg.b_hi);
      return linear_fn(k, b, grid);
    }
    case Family::Polynomial: {
      std::uniform_int_distribution<std::size_t> pick(0, cfg.degrees.size() - 1);
      const int n = cfg.degrees[pick(rng)];
      std::vector<double> a(static_cast<std::size_t>(n) + 1);
      for (double& c : a) c = uniform(cfg.a_lo, cfg.a_hi);
      return polynomial_fn(a, grid);
    }
    case Family::GRF: {
      const double l = uniform(cfg.l_lo, cfg.l_hi);
      return sample_grf(l, cfg.sigma, grid, rng);
    }
  }
  throw ArgumentError("unknown family");
}

std::vector<double> rescale_to_range(std::span<const double> values, double lo, double hi) {
  if (!(hi > lo)) throw ArgumentError("rescale_to_range: need hi > lo");
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double a = *mn;
  const double b = *mx;
  if (b == a) {
    std::fill(out.begin(), out.end(), 0.5 * (lo + hi));
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lo + (values[i] - a) * (hi - lo) / (b - a);
  // Pin the extremes so min/max land on the bounds exactly.
  out[static_cast<std::size_t>(mn - values.begin())] = lo;
  out[static_cast<std::size_t>(mx - values.begin())] = hi;
  return out;
}

Matrix TrainingSet::batch(std::span<const std::size_t> index) const {
  if (index.empty()) throw ArgumentError("empty batch");
  const auto m = static_cast<Eigen::Index>(functions[index[0]].size());
  Matrix b(static_cast<Eigen::Index>(index.size()), m);
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy(functions[index[r]].begin(), functions[index[r]].end(), b.row(Eigen::Index(r)).data());
  return b;
}

namespace {

bool permitted(ProblemKind kind, Family f) {
  switch (kind) {
    case ProblemKind::LinearODE: return true;
    case ProblemKind::NonlinearODE: return f == Family::GRF || f == Family::Polynomial;
    case ProblemKind::DiffusionReaction: return f == Family::GRF;
  }
  return false;
}

}  // namespace

TrainingSet build_training_set(const ProblemSpec& problem, const std::vector<FamilyConfig>& families,
                               std::size_t n_total, std::uint64_t seed) {
  problem.validate();
  if (families.empty()) throw ArgumentError("no function families given");
  for (const auto& f : families) {
    f.validate();
    if (!permitted(problem.kind, f.family))
      throw ArgumentError("family " + to_string(f.family) + " is not used for the " + to_string(problem.kind) +
                          " problem");
  }
  const Grid grid = make_grid(problem);
  const std::vector<double>& nodes = problem.is_ode() ? grid.t : grid.x;

  TrainingSet set;
  set.seed = seed;
  set.functions.resize(n_total);
  set.family.resize(n_total);
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(n_total);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const FamilyConfig& cfg = families[static_cast<std::size_t>(i) % families.size()];
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      std::vector<double> v = sample_function(cfg, nodes, rng);
      if (problem.kind == ProblemKind::NonlinearODE) v = rescale_to_range(v, -1.5, 1.5);
      set.functions[i] = std::move(v);
      set.family[i] = cfg.family;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return set;
}

void write_training_set(const TrainingSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << to_string(set.family[i]);
    for (double v : set.functions[i]) out << ',' << fmt::format("{:.17g}", v);
    out << '\n';
  }
}

}  // namespace noctl
