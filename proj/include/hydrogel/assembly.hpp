#pragma once

#include <Eigen/Sparse>
#include <complex>
#include <type_traits>
#include <vector>

#include "hydrogel/fem.hpp"

namespace hydrogel {

using cdouble = std::complex<double>;

/// Linear map from a reduced dof vector to the full dof vector,
/// d_full[g] = coef[g] * d_red[index[g]] (+ an affine offset kept elsewhere).
/// index[g] = -1 marks a full dof that is held fixed.
template <class Scalar>
struct DofReduction {
  std::vector<int> index;
  std::vector<Scalar> coef;
  int size = 0;

  static DofReduction identity(int n);
  /// Drops the listed full dofs and renumbers the rest consecutively.
  static DofReduction without(int n, const std::vector<int>& dropped);

  /// T^H full, for real or Scalar-valued full vectors.
  template <class In>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> restrict(const Eigen::Matrix<In, Eigen::Dynamic, 1>& full) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(size);
    for (std::size_t g = 0; g < index.size(); ++g)
      if (index[g] >= 0) out[index[g]] += conj_coef(g) * Scalar(full[static_cast<Eigen::Index>(g)]);
    return out;
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> expand(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& red) const;
  /// Explicit full x reduced matrix of the map.
  Eigen::SparseMatrix<Scalar> matrix() const;

 private:
  Scalar conj_coef(std::size_t g) const {
    if constexpr (std::is_same_v<Scalar, double>) return coef[g];
    else return std::conj(coef[g]);
  }
};

/// Sparse pattern of a reduced operator with precomputed scatter positions
/// and an element colouring for conflict-free parallel scatter.
template <class Scalar>
class ReducedAssembler {
 public:
  using Matrix = Eigen::SparseMatrix<Scalar>;

  ReducedAssembler(const Model& model, const DofReduction<Scalar>& reduction);

  /// New coefficients with an unchanged index structure (Bloch phases).
  void set_coefficients(const DofReduction<Scalar>& reduction);

  /// K_red = T^H K T from element matrices. The serial path scatters in element
  /// order and is kept as reference for the coloured parallel path.
  void assemble(const std::vector<ElementResult>& elements, Matrix& K, Execution exec = Execution::kParallel) const;

  int size() const { return size_; }
  const std::vector<std::vector<int>>& colors() const { return colors_; }

 private:
  void update_element_coefficients(const DofReduction<Scalar>& reduction);

  const Model* model_;
  int size_ = 0;
  Matrix pattern_;
  std::vector<std::array<int, kElementDofs>> local_index_;
  std::vector<std::array<Scalar, kElementDofs>> local_coef_;
  std::vector<int> positions_;  // kElementDofs^2 per element, -1 when dropped
  std::vector<std::vector<int>> colors_;
};

extern template struct DofReduction<double>;
extern template struct DofReduction<cdouble>;
extern template class ReducedAssembler<double>;
extern template class ReducedAssembler<cdouble>;

}  // namespace hydrogel
