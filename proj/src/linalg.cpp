#include "hydrogel/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hydrogel/errors.hpp"

namespace hydrogel {

using cdouble = std::complex<double>;

template <class Scalar>
bool SparseFactor<Scalar>::factor(const Matrix& K, bool allow_indefinite) {
  pd_ = false;
  negative_ = 0;
  ldlt_.reset();
  if (!llt_ || rows_ != K.rows() || nnz_ != K.nonZeros()) {
    llt_ = std::make_unique<Eigen::CholmodSupernodalLLT<Matrix, Eigen::Lower>>();
    llt_->cholmod().print = 0;
    llt_->analyzePattern(K);
    rows_ = K.rows();
    nnz_ = K.nonZeros();
  }
  llt_->factorize(K);
  if (llt_->info() == Eigen::Success) {
    pd_ = true;
    return true;
  }
  if (!allow_indefinite) return false;
  ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Matrix, Eigen::Lower>>(K);
  if (ldlt_->info() != Eigen::Success) {
    ldlt_.reset();
    return false;
  }
  const auto D = ldlt_->vectorD();
  for (Eigen::Index i = 0; i < D.size(); ++i) {
    const double v = std::real(D[i]);
    if (!std::isfinite(v) || v == 0.0) {
      ldlt_.reset();
      return false;
    }
    negative_ += v < 0.0;
  }
  return true;
}

template <class Scalar>
VectorX<Scalar> SparseFactor<Scalar>::solve(const VectorX<Scalar>& b) const {
  if (pd_) return llt_->solve(b);
  if (ldlt_) return ldlt_->solve(b);
  throw SolverError("solve called without a successful factorization");
}

template <class Scalar>
MatrixX<Scalar> SparseFactor<Scalar>::solve(const MatrixX<Scalar>& B) const {
  if (pd_) return llt_->solve(B);
  if (ldlt_) return ldlt_->solve(B);
  throw SolverError("solve called without a successful factorization");
}

template class SparseFactor<double>;
template class SparseFactor<cdouble>;

namespace {

template <class Scalar>
VectorX<Scalar> start_vector(Eigen::Index n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorX<Scalar> v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<Scalar, double>) v[i] = 1.0 + 0.5 * u(rng);
    else v[i] = Scalar(1.0 + 0.5 * u(rng), 0.5 * u(rng));
  }
  return v;
}

template <class Scalar>
void project_out(VectorX<Scalar>& v, const MatrixX<Scalar>* basis, Eigen::Index cols) {
  if (!basis || cols == 0) return;
  for (int pass = 0; pass < 2; ++pass) v -= basis->leftCols(cols) * (basis->leftCols(cols).adjoint() * v);
}

// Lanczos on a positive definite operator op; returns the `count` largest
// Ritz values (descending) with vectors.
template <class Scalar, class Op>
EigenPairs<Scalar> lanczos_largest(Eigen::Index n, int count, const Op& op, const LanczosOptions& opt,
                                   const MatrixX<Scalar>* deflation) {
  const Eigen::Index defl = deflation ? deflation->cols() : 0;
  const int m_max = static_cast<int>(std::min<Eigen::Index>(opt.max_basis, n - defl));
  count = std::min(count, m_max);
  VectorX<Scalar> start = start_vector<Scalar>(n, 20240611u);
  EigenPairs<Scalar> out;
  for (int cycle = 0; cycle <= opt.max_restarts; ++cycle) {
    MatrixX<Scalar> V(n, m_max + 1);
    std::vector<double> alpha, beta;
    project_out(start, deflation, defl);
    double nrm = start.norm();
    if (nrm == 0.0) throw SolverError("Lanczos start vector lies in the deflation space");
    V.col(0) = start / nrm;
    int m = 0;
    double beta_last = 0.0;
    for (; m < m_max; ++m) {
      VectorX<Scalar> w = op(VectorX<Scalar>(V.col(m)));
      project_out(w, deflation, defl);
      const double a = std::real(V.col(m).dot(w));
      alpha.push_back(a);
      for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(m + 1) * (V.leftCols(m + 1).adjoint() * w);
      const double b = w.norm();
      beta_last = b;
      if (b <= 1e-14 * std::abs(a) || m + 1 == m_max) {
        ++m;
        break;
      }
      beta.push_back(b);
      V.col(m + 1) = w / b;
    }
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const int want = std::min(count, m);
    out.values.assign(want, 0.0);
    out.vectors.resize(n, want);
    bool all = true;
    for (int j = 0; j < want; ++j) {
      const int idx = m - 1 - j;
      const double theta = es.eigenvalues()[idx];
      out.values[j] = theta;
      out.vectors.col(j) = V.leftCols(m) * es.eigenvectors().col(idx).template cast<Scalar>();
      out.vectors.col(j).normalize();
      const double resid = std::abs(beta_last * es.eigenvectors()(m - 1, idx));
      if (resid > opt.tol * std::abs(theta) && m < n - defl) all = false;
    }
    out.converged = all;
    if (all) return out;
    start = out.vectors.rowwise().sum();
  }
  return out;
}

template <class Scalar>
double mean_abs_diag(const Eigen::SparseMatrix<Scalar>& K) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < K.rows(); ++i) s += std::abs(K.coeff(i, i));
  return s / std::max<Eigen::Index>(1, K.rows());
}

template <class Scalar>
EigenPairs<Scalar> finish(EigenPairs<Scalar> inv, double shift) {
  EigenPairs<Scalar> out;
  out.shift = shift;
  out.converged = inv.converged;
  const int k = static_cast<int>(inv.values.size());
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> lam(k);
  for (int j = 0; j < k; ++j) lam[j] = shift + 1.0 / inv.values[j];
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lam[a] < lam[b]; });
  out.vectors.resize(inv.vectors.rows(), k);
  for (int j = 0; j < k; ++j) {
    out.values.push_back(lam[order[j]]);
    out.vectors.col(j) = inv.vectors.col(order[j]);
  }
  return out;
}

}  // namespace

template <class Scalar>
EigenPairs<Scalar> smallest_eigenpairs(const Eigen::SparseMatrix<Scalar>& K, int count, const LanczosOptions& opt,
                                       const MatrixX<Scalar>* deflation) {
  const Eigen::Index n = K.rows();
  if (n <= 400) return smallest_eigenpairs_dense<Scalar>(MatrixX<Scalar>(K), count, deflation);
  const double scale = mean_abs_diag(K);
  Eigen::SparseMatrix<Scalar> I(n, n);
  I.setIdentity();
  // zero shift keeps the relative gaps of the wanted eigenvalues; otherwise
  // walk down geometrically so the shift lands just below the spectrum
  double shift = deflation ? -100.0 * opt.initial_shift_scale * scale : 0.0;
  SparseFactor<Scalar> fac;
  bool ok = false;
  for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
    ok = fac.factor(K - Scalar(shift) * I, false);
    if (!ok) shift = shift == 0.0 ? -opt.initial_shift_scale * scale : 4.0 * shift;
  }
  if (!ok) throw SolverError("could not find a shift below the spectrum");
  auto op = [&](const VectorX<Scalar>& x) { return fac.solve(x); };
  auto inv = lanczos_largest<Scalar>(n, count, op, opt, deflation);
  if (!inv.converged && n <= 4000) return smallest_eigenpairs_dense<Scalar>(MatrixX<Scalar>(K), count, deflation);
  return finish(std::move(inv), shift);
}

template <class Scalar>
EigenPairs<Scalar> smallest_eigenpairs_dense(const MatrixX<Scalar>& K, int count, const MatrixX<Scalar>* deflation) {
  const Eigen::Index n = K.rows();
  MatrixX<Scalar> A = K;
  if (deflation && deflation->cols() > 0) {
    // lift the deflated directions far above the spectrum
    const double lift = 10.0 * (1.0 + K.cwiseAbs().rowwise().sum().maxCoeff());
    A += Scalar(lift) * (*deflation) * deflation->adjoint();
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(A);
  if (es.info() != Eigen::Success) throw SolverError("dense Hermitian eigensolver failed");
  EigenPairs<Scalar> out;
  out.converged = true;
  const int k = static_cast<int>(std::min<Eigen::Index>(count, n));
  out.vectors = es.eigenvectors().leftCols(k);
  for (int j = 0; j < k; ++j) out.values.push_back(es.eigenvalues()[j]);
  return out;
}

template <class Scalar>
double dense_min_eigenvalue(const MatrixX<Scalar>& S) {
  Eigen::LLT<MatrixX<Scalar>> llt(S);
  if (llt.info() == Eigen::Success) {
    LanczosOptions opt;
    opt.max_basis = 30;
    opt.tol = 1e-10;
    auto op = [&](const VectorX<Scalar>& x) { return VectorX<Scalar>(llt.solve(x)); };
    const auto inv = lanczos_largest<Scalar>(S.rows(), 1, op, opt, nullptr);
    if (inv.converged) return 1.0 / inv.values[0];
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

template EigenPairs<double> smallest_eigenpairs(const Eigen::SparseMatrix<double>&, int, const LanczosOptions&,
                                                const MatrixX<double>*);
template EigenPairs<cdouble> smallest_eigenpairs(const Eigen::SparseMatrix<cdouble>&, int, const LanczosOptions&,
                                                 const MatrixX<cdouble>*);
template EigenPairs<double> smallest_eigenpairs_dense(const MatrixX<double>&, int, const MatrixX<double>*);
template EigenPairs<cdouble> smallest_eigenpairs_dense(const MatrixX<cdouble>&, int, const MatrixX<cdouble>*);
template double dense_min_eigenvalue(const MatrixX<double>&);
template double dense_min_eigenvalue(const MatrixX<cdouble>&);

}  // namespace hydrogel
