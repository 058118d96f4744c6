#pragma once

#include <Eigen/Core>

namespace noctl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace kernels {

// Dense products used by the autodiff engine.
//
// The parallel versions split work into fixed-size row blocks (or, for the
// transposed-left product, fixed-size reduction chunks summed in index order),
// so results are bit-identical for any number of OpenMP threads.

// A * B
Matrix gemm_nn(const Matrix& a, const Matrix& b);
// A * B^T
Matrix gemm_nt(const Matrix& a, const Matrix& b);
// A^T * B, reduction over the rows of A and B.
Matrix gemm_tn(const Matrix& a, const Matrix& b);

// Row-block size of gemm_nn / gemm_nt and chunk size of gemm_tn.
inline constexpr Eigen::Index kRowBlock = 128;
inline constexpr Eigen::Index kReduceChunk = 512;

// Number of OpenMP threads the kernels will use (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

namespace serial {

// Straight triple loops. Kept as the reference the parallel kernels are
// tested and benchmarked against.
Matrix gemm_nn(const Matrix& a, const Matrix& b);
Matrix gemm_nt(const Matrix& a, const Matrix& b);
Matrix gemm_tn(const Matrix& a, const Matrix& b);

}  // namespace serial
}  // namespace kernels
}  // namespace noctl
