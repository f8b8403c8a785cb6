#include "hydrogel/assembly.hpp"

#include <algorithm>

namespace hydrogel {

namespace {

double conj_of(double x) { return x; }
cdouble conj_of(const cdouble& x) { return std::conj(x); }

}  // namespace

template <class Scalar>
DofReduction<Scalar> DofReduction<Scalar>::identity(int n) {
  return without(n, {});
}

template <class Scalar>
DofReduction<Scalar> DofReduction<Scalar>::without(int n, const std::vector<int>& dropped) {
  DofReduction r;
  r.index.assign(n, 0);
  r.coef.assign(n, Scalar(1));
  for (int g : dropped) r.index[g] = -1;
  for (int g = 0; g < n; ++g)
    if (r.index[g] >= 0) r.index[g] = r.size++;
  return r;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> DofReduction<Scalar>::expand(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& red) const {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(static_cast<Eigen::Index>(index.size()));
  for (std::size_t g = 0; g < index.size(); ++g)
    if (index[g] >= 0) out[g] = coef[g] * red[index[g]];
  return out;
}

template <class Scalar>
Eigen::SparseMatrix<Scalar> DofReduction<Scalar>::matrix() const {
  std::vector<Eigen::Triplet<Scalar>> t;
  for (std::size_t g = 0; g < index.size(); ++g)
    if (index[g] >= 0) t.emplace_back(static_cast<int>(g), index[g], coef[g]);
  Eigen::SparseMatrix<Scalar> T(static_cast<Eigen::Index>(index.size()), size);
  T.setFromTriplets(t.begin(), t.end());
  return T;
}

template <class Scalar>
ReducedAssembler<Scalar>::ReducedAssembler(const Model& model, const DofReduction<Scalar>& reduction)
    : model_(&model), size_(reduction.size) {
  const int ne = model.num_elements();
  local_index_.resize(ne);
  local_coef_.resize(ne);
  update_element_coefficients(reduction);

  std::vector<Eigen::Triplet<Scalar>> trip;
  trip.reserve(static_cast<std::size_t>(ne) * kElementDofs * kElementDofs);
  for (int e = 0; e < ne; ++e)
    for (int a = 0; a < kElementDofs; ++a)
      for (int b = 0; b < kElementDofs; ++b)
        if (local_index_[e][a] >= 0 && local_index_[e][b] >= 0)
          trip.emplace_back(local_index_[e][a], local_index_[e][b], Scalar(0));
  pattern_.resize(size_, size_);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  positions_.assign(static_cast<std::size_t>(ne) * kElementDofs * kElementDofs, -1);
  const auto* outer = pattern_.outerIndexPtr();
  const auto* inner = pattern_.innerIndexPtr();
  for (int e = 0; e < ne; ++e)
    for (int a = 0; a < kElementDofs; ++a)
      for (int b = 0; b < kElementDofs; ++b) {
        const int row = local_index_[e][a], col = local_index_[e][b];
        if (row < 0 || col < 0) continue;
        const auto* first = inner + outer[col];
        const auto* last = inner + outer[col + 1];
        positions_[(static_cast<std::size_t>(e) * kElementDofs + a) * kElementDofs + b] =
            static_cast<int>(std::lower_bound(first, last, row) - inner);
      }

  // greedy colouring: elements of one colour share no reduced dof
  std::vector<int> color(ne, -1);
  std::vector<std::vector<char>> used;  // used[c][dof]
  for (int e = 0; e < ne; ++e) {
    int c = 0;
    for (;; ++c) {
      if (c == static_cast<int>(used.size())) used.emplace_back(size_, 0);
      bool clash = false;
      for (int idx : local_index_[e])
        if (idx >= 0 && used[c][idx]) {
          clash = true;
          break;
        }
      if (!clash) break;
    }
    color[e] = c;
    for (int idx : local_index_[e])
      if (idx >= 0) used[c][idx] = 1;
  }
  colors_.assign(used.size(), {});
  for (int e = 0; e < ne; ++e) colors_[color[e]].push_back(e);
}

template <class Scalar>
void ReducedAssembler<Scalar>::update_element_coefficients(const DofReduction<Scalar>& reduction) {
  for (int e = 0; e < model_->num_elements(); ++e)
    for (int l = 0; l < kElementDofs; ++l) {
      const int g = model_->element_dofs[e][l];
      local_index_[e][l] = reduction.index[g];
      local_coef_[e][l] = Scalar(model_->element_signs[e][l]) * reduction.coef[g];
    }
}

template <class Scalar>
void ReducedAssembler<Scalar>::set_coefficients(const DofReduction<Scalar>& reduction) {
  update_element_coefficients(reduction);
}

template <class Scalar>
void ReducedAssembler<Scalar>::assemble(const std::vector<ElementResult>& elements, Matrix& K,
                                        Execution exec) const {
  K = pattern_;
  Scalar* values = K.valuePtr();
  std::fill(values, values + K.nonZeros(), Scalar(0));
  auto scatter = [&](int e) {
    const auto& idx = local_index_[e];
    const auto& c = local_coef_[e];
    const auto& Ke = elements[e].K;
    const int* pos = &positions_[static_cast<std::size_t>(e) * kElementDofs * kElementDofs];
    for (int a = 0; a < kElementDofs; ++a) {
      if (idx[a] < 0) continue;
      const Scalar ca = conj_of(c[a]);
      for (int b = 0; b < kElementDofs; ++b) {
        const int p = pos[a * kElementDofs + b];
        if (p >= 0) values[p] += ca * c[b] * Ke(a, b);
      }
    }
  };
  if (exec == Execution::kSerial) {
    for (int e = 0; e < model_->num_elements(); ++e) scatter(e);
    return;
  }
  for (const auto& batch : colors_) {
    const int nb = static_cast<int>(batch.size());
#pragma omp parallel for schedule(static)
    for (int k = 0; k < nb; ++k) scatter(batch[k]);
  }
}

template struct DofReduction<double>;
template struct DofReduction<cdouble>;
template class ReducedAssembler<double>;
template class ReducedAssembler<cdouble>;

}  // namespace hydrogel
