// Parallel row-blocked products against the serial triple loops, at the
// shapes the training loop actually hits (batch x hidden).
#include <benchmark/benchmark.h>

#include <random>

#include "noctl/kernels.hpp"

using noctl::Matrix;
namespace kernels = noctl::kernels;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void nn(benchmark::State& state) {
  const Matrix a = random_matrix(state.range(0), state.range(1), 1);
  const Matrix b = random_matrix(state.range(1), state.range(1), 2);
  for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void tn(benchmark::State& state) {
  const Matrix a = random_matrix(state.range(0), state.range(1), 1);
  const Matrix b = random_matrix(state.range(0), state.range(1), 2);
  for (auto _ : state) benchmark::DoNotOptimize(F(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}

}  // namespace

#define SHAPES ->Args({100, 64})->Args({1000, 64})->Args({10000, 64})->Args({1000, 200})
BENCHMARK(nn<kernels::gemm_nn>)->Name("gemm_nn/parallel") SHAPES;
BENCHMARK(nn<kernels::serial::gemm_nn>)->Name("gemm_nn/serial") SHAPES;
BENCHMARK(tn<kernels::gemm_tn>)->Name("gemm_tn/parallel") SHAPES;
BENCHMARK(tn<kernels::serial::gemm_tn>)->Name("gemm_tn/serial") SHAPES;

BENCHMARK_MAIN();
