#pragma once

#include <functional>
#include <vector>

namespace flowcut {

// Full eigendecomposition of a dense symmetric matrix, eigenvalues ascending.
// vectors stores eigenvector k contiguously at [k*n, (k+1)*n).
struct DenseEigen {
  std::vector<double> values;
  std::vector<double> vectors;
};

// Householder tridiagonalization followed by implicit-shift QL. The input is
// consumed. Throws on non-convergence (does not happen for symmetric input
// within the default sweep limit).
DenseEigen dense_symmetric_eigen(std::vector<double> a, int n);

struct LanczosResult {
  bool converged = false;
  std::vector<double> values;   // n_pairs smallest Ritz values, ascending
  std::vector<double> vectors;  // pair k at [k*n, (k+1)*n)
  int iterations = 0;
};

// Lanczos with full reorthogonalization for the n_pairs smallest eigenpairs
// of a symmetric operator. Krylov vectors are kept orthogonal to the given
// deflation vectors (assumed unit length, mutually orthogonal). Deterministic
// fixed start vector.
LanczosResult lanczos_smallest(
    int n, const std::function<void(const double*, double*)>& apply,
    int n_pairs, const std::vector<std::vector<double>>& deflate, double tol,
    int max_iters);

}  // namespace flowcut
