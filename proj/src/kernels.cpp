#include "noctl/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "noctl/errors.hpp"

namespace noctl::kernels {
namespace {

using Eigen::Index;

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr double kParallelFlops = 1 << 18;

void require(bool ok, const char* what) {
  if (!ok) throw ArgumentError(what);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "gemm_nn: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const Index blocks = (a.rows() + kRowBlock - 1) / kRowBlock;
  const bool big = double(a.rows()) * double(a.cols()) * double(b.cols()) > kParallelFlops;
#pragma omp parallel for schedule(static) if (big && blocks > 1)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index r0 = blk * kRowBlock;
    const Index nr = std::min(kRowBlock, a.rows() - r0);
    c.middleRows(r0, nr).noalias() = a.middleRows(r0, nr) * b;
  }
  return c;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "gemm_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  const Index blocks = (a.rows() + kRowBlock - 1) / kRowBlock;
  const bool big = double(a.rows()) * double(a.cols()) * double(b.rows()) > kParallelFlops;
#pragma omp parallel for schedule(static) if (big && blocks > 1)
  for (Index blk = 0; blk < blocks; ++blk) {
    const Index r0 = blk * kRowBlock;
    const Index nr = std::min(kRowBlock, a.rows() - r0);
    c.middleRows(r0, nr).noalias() = a.middleRows(r0, nr) * b.transpose();
  }
  return c;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "gemm_tn: reduction dimensions differ");
  const Index chunks = std::max<Index>(1, (a.rows() + kReduceChunk - 1) / kReduceChunk);
  if (chunks == 1) {
    Matrix c = Matrix::Zero(a.cols(), b.cols());
    if (a.rows() > 0) c.noalias() += a.transpose() * b;
    return c;
  }
  std::vector<Matrix> partial(static_cast<std::size_t>(chunks));
  const bool big = double(a.rows()) * double(a.cols()) * double(b.cols()) > kParallelFlops;
#pragma omp parallel for schedule(static) if (big)
  for (Index k = 0; k < chunks; ++k) {
    const Index r0 = k * kReduceChunk;
    const Index nr = std::min(kReduceChunk, a.rows() - r0);
    partial[k].noalias() = a.middleRows(r0, nr).transpose() * b.middleRows(r0, nr);
  }
  Matrix c = std::move(partial[0]);
  for (std::size_t k = 1; k < partial.size(); ++k) c += partial[k];
  return c;
}

namespace serial {

Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "gemm_nn: inner dimensions differ");
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (Index j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "gemm_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "gemm_tn: reduction dimensions differ");
  Matrix c = Matrix::Zero(a.cols(), b.cols());
  for (Index k = 0; k < a.rows(); ++k)
    for (Index i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      for (Index j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  return c;
}

}  // namespace serial
}  // namespace noctl::kernels
