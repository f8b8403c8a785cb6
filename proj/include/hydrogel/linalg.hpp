#pragma once

#include <Eigen/CholmodSupport>
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <memory>
#include <vector>

namespace hydrogel {

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Sparse Hermitian factorization: supernodal Cholesky, with a simplicial
/// LDL^T fallback for indefinite matrices.
template <class Scalar>
class SparseFactor {
 public:
  using Matrix = Eigen::SparseMatrix<Scalar>;

  /// Reuses the symbolic analysis while the pattern size is unchanged.
  /// Returns false when neither factorization succeeds. With
  /// allow_indefinite = false only the Cholesky path is attempted.
  bool factor(const Matrix& K, bool allow_indefinite = true);

  bool positive_definite() const { return pd_; }
  /// Number of negative pivots of the LDL^T path (0 for a Cholesky success).
  int negative_pivots() const { return negative_; }

  VectorX<Scalar> solve(const VectorX<Scalar>& b) const;
  MatrixX<Scalar> solve(const MatrixX<Scalar>& B) const;

 private:
  std::unique_ptr<Eigen::CholmodSupernodalLLT<Matrix, Eigen::Lower>> llt_;
  std::unique_ptr<Eigen::SimplicialLDLT<Matrix, Eigen::Lower>> ldlt_;
  bool pd_ = false;
  int negative_ = 0;
  Eigen::Index rows_ = -1;
  Eigen::Index nnz_ = -1;
};

struct LanczosOptions {
  int max_basis = 60;      ///< Krylov dimension per cycle
  int max_restarts = 8;
  double tol = 1e-11;      ///< relative Ritz residual in the shift-inverted spectrum
  double initial_shift_scale = 1e-10;  ///< first nonzero trial shift, times mean |diag|
};

template <class Scalar>
struct EigenPairs {
  std::vector<double> values;  ///< ascending
  MatrixX<Scalar> vectors;     ///< unit-norm columns
  double shift = 0.0;
  bool converged = false;
};

/// Smallest eigenpairs of a sparse Hermitian matrix by shift-invert Lanczos
/// with full reorthogonalization. The shift is lowered until K - shift I is
/// positive definite, so negative eigenvalues are found as well. Columns of
/// deflation (orthonormal, exact eigenvectors such as rigid translations) are
/// projected out.
template <class Scalar>
EigenPairs<Scalar> smallest_eigenpairs(const Eigen::SparseMatrix<Scalar>& K, int count,
                                       const LanczosOptions& opt = {},
                                       const MatrixX<Scalar>* deflation = nullptr);

/// Same contract for a dense Hermitian matrix.
template <class Scalar>
EigenPairs<Scalar> smallest_eigenpairs_dense(const MatrixX<Scalar>& K, int count,
                                             const MatrixX<Scalar>* deflation = nullptr);

/// Smallest eigenvalue of a dense Hermitian matrix; uses a Cholesky-based
/// inverse Lanczos when the matrix is positive definite and a full
/// eigendecomposition otherwise.
template <class Scalar>
double dense_min_eigenvalue(const MatrixX<Scalar>& S);

}  // namespace hydrogel
