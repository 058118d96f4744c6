#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "noctl/sampling.hpp"

using namespace noctl;

namespace {

std::vector<double> unit_grid(int n) { return make_grid(make_problem(ProblemKind::LinearODE), n).t; }

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("elementary families") {
  CHECK(constant_fn(2.0, unit_grid(5)) == std::vector<double>(5, 2.0));
  CHECK(linear_fn(1.0, 0.0, unit_grid(3)) == std::vector<double>{0.0, 0.5, 1.0});
  const std::vector<double> cube{1.0, 0.0, 0.0, 0.0};
  CHECK(polynomial_fn(cube, unit_grid(3)).back() == 1.0);
  CHECK(polynomial_fn(cube, unit_grid(3))[1] == 0.125);

  std::mt19937_64 rng(1);
  FamilyConfig poly;
  poly.family = Family::Polynomial;
  poly.degrees = {3, 4};
  for (int i = 0; i < 20; ++i) {
    const auto v = sample_function(poly, unit_grid(10), rng);
    CHECK(std::abs(v[0]) <= 3.0);  // a_0 at t = 0
  }
}

TEST_CASE("grf covariance and sampling") {
  const auto grid = unit_grid(100);
  const Matrix k = grf_covariance(0.3, 1.0, grid);
  CHECK(k(7, 7) == 1.0);
  CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0 / (99.0 * 99.0) / (2 * 0.09))));

  std::mt19937_64 a(42), b(42);
  CHECK(sample_grf(0.1, 1.0, grid, a) == sample_grf(0.1, 1.0, grid, b));

  // Small length scales on a 100-point grid need the jitter escalation.
  std::mt19937_64 r(1);
  CHECK(sample_grf(0.02, 1.0, grid, r).size() == 100);
  CHECK_THROWS_AS(sample_grf(0.0, 1.0, grid, r), ArgumentError);
}

TEST_CASE("grf statistics") {
  const auto grid = unit_grid(100);
  const int n = 10000;
  std::mt19937_64 rng(7);
  double corr_prev = -1.0;
  for (double l : {0.02, 0.1, 0.5}) {
    std::vector<double> a(n), b(n);
    double var = 0.0;
    for (int s = 0; s < n; ++s) {
      const auto v = sample_grf(l, 1.0, grid, rng);
      a[s] = v[40];
      b[s] = v[41];
      var += v[40] * v[40] / n;
    }
    CHECK(var >= 0.95);
    CHECK(var <= 1.05);
    const double c = correlation(a, b);
    CHECK(c > corr_prev);
    corr_prev = c;
  }
}

TEST_CASE("rescale_to_range") {
  CHECK(rescale_to_range(std::vector<double>{0.0, 1.0}, -1.5, 1.5) == std::vector<double>{-1.5, 1.5});
  CHECK(rescale_to_range(std::vector<double>{4.0, 4.0, 4.0}, -1.5, 1.5) == std::vector<double>{0.0, 0.0, 0.0});
  const auto same = rescale_to_range(std::vector<double>{-1.5, 0.2, 1.5}, -1.5, 1.5);
  CHECK(same.front() == -1.5);
  CHECK(same.back() == 1.5);
  CHECK(same[1] == doctest::Approx(0.2));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto v = sample_grf(0.2, 1.0, unit_grid(30), rng);
    const auto r = rescale_to_range(v, -1.5, 1.5);
    CHECK(*std::min_element(r.begin(), r.end()) == -1.5);
    CHECK(*std::max_element(r.begin(), r.end()) == 1.5);
  }
  CHECK_THROWS_AS(rescale_to_range(std::vector<double>{1.0}, 1.0, 1.0), ArgumentError);
}

TEST_CASE("build_training_set") {
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const TrainingSet s = build_training_set(lin, default_families(ProblemKind::LinearODE), 8, 5);
  REQUIRE(s.size() == 8);
  int counts[4] = {0, 0, 0, 0};
  for (Family f : s.family) ++counts[int(f)];
  for (int c : counts) CHECK(c == 2);

  const TrainingSet again = build_training_set(lin, default_families(ProblemKind::LinearODE), 8, 5);
  CHECK(again.functions == s.functions);
  const TrainingSet other = build_training_set(lin, default_families(ProblemKind::LinearODE), 8, 6);
  CHECK(other.functions != s.functions);

  const ProblemSpec non = make_problem(ProblemKind::NonlinearODE);
  const TrainingSet ns = build_training_set(non, default_families(ProblemKind::NonlinearODE), 101, 1);
  int grf = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    grf += ns.family[i] == Family::GRF;
    for (double v : ns.functions[i]) {
      CHECK(v >= -1.5);
      CHECK(v <= 1.5);
    }
  }
  CHECK(grf == 51);

  const ProblemSpec pde = make_problem(ProblemKind::DiffusionReaction);
  FamilyConfig poly;
  poly.family = Family::Polynomial;
  poly.degrees = {2};
  CHECK_THROWS_AS(build_training_set(pde, {poly}, 4, 1), ArgumentError);
  const TrainingSet ps = build_training_set(pde, default_families(ProblemKind::DiffusionReaction), 3, 1);
  CHECK(ps.functions[0].size() == 100);
  std::size_t idx[] = {2, 0};
  const Matrix batch = ps.batch(idx);
  CHECK(batch(0, 5) == ps.functions[2][5]);
  CHECK(batch(1, 99) == ps.functions[0][99]);
}

TEST_CASE("training set export") {
  const ProblemSpec lin = make_problem(ProblemKind::LinearODE);
  const TrainingSet s = build_training_set(lin, default_families(ProblemKind::LinearODE), 4, 5);
  const auto path = std::filesystem::temp_directory_path() / "noctl_set.csv";
  write_training_set(s, path.string());
  std::ifstream in(path);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 100);
  }
  CHECK(rows == 4);
  std::filesystem::remove(path);
}
