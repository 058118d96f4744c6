#pragma once

// Training controls: constants, lines, polynomials and squared-exponential
// Gaussian random fields sampled on the sensor grid.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "noctl/kernels.hpp"
#include "noctl/problems.hpp"

namespace noctl {

enum class Family { Constant, Linear, Polynomial, GRF };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct FamilyConfig {
  Family family = Family::GRF;
  // Constant value, slope, or polynomial coefficient range.
  double a_lo = -3.0, a_hi = 3.0;
  // Intercept range (Linear).
  double b_lo = -2.0, b_hi = 2.0;
  std::vector<int> degrees;  // Polynomial
  double l_lo = 0.02, l_hi = 0.5;  // GRF length scale
  double sigma = 1.0;

  void validate() const;
};

// Per-problem family sets with their parameter ranges.
std::vector<FamilyConfig> default_families(ProblemKind kind);

// Stateless 64-bit mix used to derive one generator seed per function index.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

std::vector<double> constant_fn(double c, std::span<const double> grid);
std::vector<double> linear_fn(double k, double b, std::span<const double> grid);
// Coefficients highest power first.
std::vector<double> polynomial_fn(std::span<const double> coeffs, std::span<const double> grid);

Matrix grf_covariance(double l, double sigma, std::span<const double> grid);
std::vector<double> sample_grf(double l, double sigma, std::span<const double> grid, std::mt19937_64& rng);

std::vector<double> sample_function(const FamilyConfig& cfg, std::span<const double> grid, std::mt19937_64& rng);

std::vector<double> rescale_to_range(std::span<const double> values, double lo, double hi);

struct TrainingSet {
  std::vector<std::vector<double>> functions;
  std::vector<Family> family;
  std::uint64_t seed = 0;

  std::size_t size() const { return functions.size(); }
  // Rows `index` stacked into a batch matrix.
  Matrix batch(std::span<const std::size_t> index) const;
};

// Equal share per family (function i uses family i mod F). Nonlinear-ODE
// controls are mapped to [-1.5, 1.5].
TrainingSet build_training_set(const ProblemSpec& problem, const std::vector<FamilyConfig>& families,
                               std::size_t n_total, std::uint64_t seed);

// One function per row, comma-separated.
void write_training_set(const TrainingSet& set, const std::string& path);

}  // namespace noctl
