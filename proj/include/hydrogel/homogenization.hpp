#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "hydrogel/assembly.hpp"
#include "hydrogel/fem.hpp"

namespace hydrogel {

/// Effective deformation and divergence of the flux imposed on the cell.
struct MacroControl {
  Mat2 Fbar = Mat2::Identity();
  double macro_div_flux = 0.0;
};

/// One follower dof tied to its master across opposite faces.
struct DofLink {
  int follower;
  int master;
  Vec2 shift;        ///< X(follower) - X(master)
  bool flux;
  int comp = 0;      ///< displacement component, unused for flux links
  double rho = 1.0;  ///< follower = rho * master (+ macro offset); -1 or +1 for flux
  double outward_follower = 1.0;  ///< outward sign of the follower edge's global normal
  double outward_master = 1.0;
  double edge_length = 0.0;
  Vec2 normal_plus{0.0, 0.0};     ///< outward unit normal of the follower face
};

/// Dof-level view of the periodic pairing of one mesh.
struct PeriodicStructure {
  std::vector<DofLink> links;
  std::vector<int> follower_link;  ///< per full dof, index into links or -1
  int pinned_node = -1;            ///< interior reference node fixed against translation
  int corner_master = -1;

  PeriodicStructure(const Model& model);
  PeriodicStructure() = default;

  std::vector<int> pinned_dofs(const Model& model) const;
};

/// Constraint rows d_f - rho d_m = offset. Throws ConfigError with the
/// offending dofs when a follower is constrained twice or chains to another
/// follower.
struct ConstraintRows {
  Eigen::SparseMatrix<double> C;  ///< one row per link, full dof columns
  Eigen::VectorXd offset;
};
ConstraintRows build_constraints(const Model& model, const PeriodicStructure& ps, const MacroControl& macro);

/// Reduction used by the Newton solver: followers eliminated, pinned node fixed.
DofReduction<double> periodic_reduction(const Model& model, const PeriodicStructure& ps, bool pin = true);

/// Bloch reduction for wave vector k in units of the cell: follower dofs carry
/// the phase exp(i k.shift / extent), flux followers additionally rho.
DofReduction<cdouble> bloch_reduction(const Model& model, const PeriodicStructure& ps, const Vec2& k,
                                      bool pin = false);

/// Sets follower dofs of d from their masters for the given macro control.
void apply_macro(const Model& model, const PeriodicStructure& ps, const MacroControl& macro, Eigen::VectorXd& d);

struct EffectiveResponse {
  Mat2 P = Mat2::Zero();   ///< from the constraint reactions on the follower dofs
  double mu = 0.0;         ///< diagnostic effective chemical potential
};

/// Effective stress and chemical potential from the full residual at a
/// converged state; the reactions at follower dofs are the multipliers.
EffectiveResponse effective_stress_and_mu(const Model& model, const PeriodicStructure& ps,
                                          const Eigen::VectorXd& residual, double tau);

/// Volume average of the stress over the cell (void counted as zero stress),
/// equal to the boundary integral of P N (x) X by the divergence theorem.
Mat2 volume_average_stress(const Model& model, const Eigen::VectorXd& d, const History& history, double tau);

/// Jump operator P (rows: displacement jumps, then flux jump sums), geometric
/// operator Q (rows: F11, F12, F21, F22, then the chemical row), and the
/// selector L of the mechanical rows, all over the external boundary dofs.
struct ProjectionOperators {
  std::vector<int> boundary_dofs;        ///< full dof ids, column order of P
  Eigen::SparseMatrix<double> P;         ///< jumps x boundary dofs
  Eigen::MatrixXd Q;                     ///< 5 x jumps
  Eigen::MatrixXd L;                     ///< 4 x 5
  std::vector<int> jump_link;            ///< link index of each jump row
  double cell_volume = 1.0;
};
ProjectionOperators build_projection_operators(const Model& model, const PeriodicStructure& ps);

/// Schur complement of the full tangent onto the external boundary dofs.
struct BoundarySchur {
  std::vector<int> boundary_dofs;
  Eigen::MatrixXd S;
  bool interior_positive_definite = false;
};

/// Factors K_ii and forms K_bb - K_bi K_ii^{-1} K_ib. K is the full tangent.
BoundarySchur boundary_schur(const Model& model, const Eigen::SparseMatrix<double>& K_full);

struct EffectiveModuli {
  Tensor4 A = Tensor4::Zero();
  double rcond = 1.0;   ///< reciprocal condition estimate of the inner matrix
  bool near_singular = false;
  std::string warning;
};

/// Effective mechanical moduli (1/|B0|) L Q [P S^{-1} P^T]^{-1} Q^T L^T, with S
/// the boundary Schur complement. The inner inverse is evaluated on the
/// complement of the periodic fields, so rotational null modes of S are allowed.
EffectiveModuli effective_moduli(const BoundarySchur& schur, const ProjectionOperators& ops,
                                 const PeriodicStructure& ps, const Model& model);

/// Closed-form moduli of a homogeneous point with the solvent content
/// condensed out: A - B (x) B / c.
Tensor4 condensed_point_moduli(const Mat2& F, double s, const MaterialParams& m);

}  // namespace hydrogel
