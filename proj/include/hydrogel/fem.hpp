#pragma once

#include <Eigen/Core>
#include <array>
#include <memory>
#include <vector>

#include "hydrogel/material.hpp"
#include "hydrogel/mesh.hpp"

namespace hydrogel {

inline constexpr int kElementDofs = 22;  // 9 nodes x 2 displacements + 4 edge fluxes
inline constexpr int kQuadPoints = 9;
inline constexpr double kSolventFloor = 1e-8;

using ElementVector = Eigen::Matrix<double, kElementDofs, 1>;
using ElementMatrix = Eigen::Matrix<double, kElementDofs, kElementDofs>;

/// Global numbering: node n owns dofs 2n, 2n+1; edge e owns 2 N + e, the
/// integrated normal flux through e along the global edge normal.
struct DofMap {
  int num_nodes = 0;
  int num_edges = 0;
  std::vector<int> interior;  ///< dofs not on the external boundary
  std::vector<int> boundary;  ///< dofs on the external boundary

  explicit DofMap(const UnitCellMesh& mesh);
  DofMap() = default;

  int disp(int node, int comp) const { return 2 * node + comp; }
  int flux(int edge) const { return 2 * num_nodes + edge; }
  int size() const { return 2 * num_nodes + num_edges; }
  bool is_flux(int dof) const { return dof >= 2 * num_nodes; }
};

/// Reference-configuration data of one quadrature point.
struct QuadratureGeometry {
  double wj;                 ///< weight times Jacobian determinant
  double div_unit;           ///< Div of every local flux basis function, 1/(4 j)
  std::array<double, 9> N;
  std::array<Vec2, 9> dN;    ///< material gradients of the shape functions
  std::array<Vec2, 4> Bh;    ///< Piola-mapped flux basis, unit outward flux
  Vec2 X;                    ///< reference position
};

struct ElementGeometry {
  std::array<QuadratureGeometry, kQuadPoints> qp;
};

/// Converged quantities of the previous step at one quadrature point.
struct QpHistory {
  double s = 0.0;
  Mat2 F = Mat2::Identity();
  Mat2 C = Mat2::Identity();
};

using History = std::vector<QpHistory>;  ///< element-major, kQuadPoints per element

/// Immutable discretization shared by every solve on one mesh.
struct Model {
  std::shared_ptr<const UnitCellMesh> mesh;
  std::array<MaterialParams, 2> materials;  ///< indexed by Phase
  DofMap dofs;
  std::vector<ElementGeometry> geometry;
  std::vector<std::array<int, kElementDofs>> element_dofs;
  std::vector<std::array<int, kElementDofs>> element_signs;  ///< -1 on inward-oriented flux dofs
  std::vector<int> boundary_edge_sign;  ///< outward sign of each boundary edge, 0 on interior edges

  /// Throws MeshError when an element has a non-positive Jacobian.
  static Model build(std::shared_ptr<const UnitCellMesh> mesh, const MaterialParams& matrix,
                     const MaterialParams& coating);
  static Model build(std::shared_ptr<const UnitCellMesh> mesh, const MaterialParams& matrix) {
    return build(std::move(mesh), matrix, matrix);
  }

  const MaterialParams& material(int element) const {
    return materials[static_cast<int>(mesh->elements[element].phase)];
  }
  int num_elements() const { return static_cast<int>(geometry.size()); }
  /// Material of the elements adjacent to the void, whose reference chemical
  /// potential drives the boundary loading.
  const MaterialParams& void_material() const;
};

struct ElementResult {
  double energy = 0.0;
  ElementVector r;
  ElementMatrix K;
};

/// Local dof values: displacements as stored, fluxes in element-outward sense.
ElementVector gather(const Model& model, int element, const Eigen::VectorXd& d);

/// Residual, tangent and incremental potential of one element. Throws
/// StepRejected when the trial state leaves the admissible set.
void element_kernel(const ElementGeometry& geo, const QpHistory* history, const MaterialParams& m,
                    const ElementVector& de, double tau, bool want_tangent, ElementResult& out,
                    int element_id = -1);

enum class Execution { kSerial, kParallel };

void evaluate_elements(const Model& model, const Eigen::VectorXd& d, const History& history, double tau,
                       bool want_tangent, std::vector<ElementResult>& out,
                       Execution exec = Execution::kParallel);

/// Potential of the chemical loading on the void boundary, linear in the
/// flux dofs: tau * mu_applied * outward flux.
Eigen::VectorXd void_load(const Model& model, double tau, double mu_applied);

/// Full-space internal residual scattered from element results.
Eigen::VectorXd assemble_residual(const Model& model, const std::vector<ElementResult>& elements);

/// Incremental potential including the boundary loading term.
double incremental_potential(const Model& model, const std::vector<ElementResult>& elements,
                             const Eigen::VectorXd& load, const Eigen::VectorXd& d);

History initial_history(const Model& model);

struct QpState {
  Mat2 F;
  double s;
  Vec2 H;
};

QpState qp_state(const Model& model, int element, int q, const Eigen::VectorXd& d, const History& history,
                 double tau);

/// History after accepting the step that produced d.
History advance_history(const Model& model, const Eigen::VectorXd& d, const History& history, double tau);

struct SolventBalance {
  double delta_s_total = 0.0;     ///< integral of s - s_prev
  double boundary_influx = 0.0;   ///< -tau * closed-boundary integral of H.N
  double void_influx = 0.0;       ///< void part of boundary_influx
  double external_influx = 0.0;   ///< external-boundary part, zero under antiperiodicity
};

SolventBalance solvent_balance_audit(const Model& model, const Eigen::VectorXd& d, const History& current,
                                     const History& previous, double tau);

/// L2 projection of the chemical potential from quadrature points to nodes.
Eigen::VectorXd nodal_chemical_potential(const Model& model, const Eigen::VectorXd& d, const History& current);

}  // namespace hydrogel
