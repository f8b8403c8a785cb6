#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hydrogel/assembly.hpp"
#include "hydrogel/homogenization.hpp"
#include "hydrogel/linalg.hpp"

namespace hydrogel {

struct BlochScanConfig {
  int grid = 11;                 ///< points per axis over [0, pi], ends included
  double small_k = 0.02 * M_PI;  ///< long-wavelength surrogate magnitude
  int eig_count = 3;
  bool refine = true;            ///< one 3x3 half-spacing pass around the argmin
};

/// Mat2-like acoustic tensor Q_ab = A_aAbB N_A N_B.
Mat2 acoustic_tensor(const Tensor4& A, const Vec2& N);

struct EllipticityResult {
  double lambda_bar = 0.0;   ///< min over directions of the smallest eigenvalue of Q(N)
  double theta = 0.0;        ///< minimizing angle in [0, pi)
  Vec2 N{1.0, 0.0};
  Vec2 n{1.0, 0.0};          ///< eigenvector of Q(N*) for lambda_bar
};

/// 1 degree sweep refined by golden section to 1e-4 rad. Throws DomainError
/// when A lacks major symmetry beyond 1e-8 relative.
EllipticityResult strong_ellipticity(const Tensor4& A);

struct BlochSample {
  Vec2 k;
  double value;     ///< smallest eigenvalue of the condensed (or exact) operator
  bool surrogate;   ///< small-k stand-in for the long-wavelength limit
};

/// Bloch operators of one cell. The condensed form works on the boundary
/// Schur complement S: with K_ii positive definite the Bloch operator and
/// T(k)^H S T(k) have the same number of negative eigenvalues, so the scan
/// over k runs on the small dense matrix and only the minimizer is solved on
/// the full operator.
class BlochAnalyzer {
 public:
  BlochAnalyzer(std::shared_ptr<const Model> model, const PeriodicStructure& ps);

  const Model& model() const { return *model_; }

  /// Full-size Hermitian Bloch operator T(k)^H K T(k) from element tangents.
  Eigen::SparseMatrix<cdouble> bloch_operator(const std::vector<ElementResult>& elements, const Vec2& k,
                                              bool pin = false) const;
  DofReduction<cdouble> reduction(const Vec2& k, bool pin = false) const;

  /// S regrouped by the lattice shift of each boundary dof, so that the
  /// condensed operator at any k is a phase-weighted sum of real blocks.
  struct CondensedBasis {
    std::vector<Vec2> shifts;             ///< per class, in cell units
    std::vector<Eigen::MatrixXd> blocks;  ///< classes x classes, row-major
  };
  CondensedBasis condensed_basis(const BoundarySchur& schur) const;

  /// T_b(k)^H S T_b(k) over the non-follower boundary dofs.
  Eigen::MatrixXcd condensed_operator(const BoundarySchur& schur, const Vec2& k) const;
  Eigen::MatrixXcd condensed_operator(const CondensedBasis& basis, const Vec2& k) const;
  /// Smallest eigenvalue of the condensed operator; rigid translations are
  /// deflated at k = 0.
  double condensed_min_eigenvalue(const BoundarySchur& schur, const Vec2& k) const;
  double condensed_min_eigenvalue(const CondensedBasis& basis, const Vec2& k) const;

  /// Smallest eigenpairs of the full Bloch operator, unpinned with
  /// translations deflated at k = 0.
  EigenPairs<cdouble> exact(const std::vector<ElementResult>& elements, const Vec2& k, int count) const;

 private:
  std::shared_ptr<const Model> model_;
  const PeriodicStructure* ps_;
  std::vector<int> boundary_col_;   ///< full dof -> column of S, -1 off the boundary
  std::vector<int> master_cols_;    ///< columns of S kept as coordinates
  std::vector<int> master_index_;   ///< column of S -> condensed index of its master
  std::vector<int> follower_link_;  ///< column of S -> link index, -1 for masters
  double min_eigenvalue(Eigen::MatrixXcd Sk, const Vec2& k, const std::vector<int>& boundary_dofs) const;
  mutable std::unique_ptr<ReducedAssembler<cdouble>> assembler_;
};

struct BlochScan {
  std::vector<BlochSample> samples;
  Vec2 k_star{0.0, 0.0};
  bool surrogate = false;
  double indicator_min = 0.0;   ///< min over samples
  double lambda_min = 0.0;      ///< full-operator eigenvalue at k_star
  Eigen::VectorXcd mode;        ///< full-dof critical mode, unit reduced norm
  bool exact_fallback = false;  ///< condensed path unavailable (K_ii indefinite)
};

/// Scans the grid, the small-k surrogates and one refinement pass, then
/// solves the full Bloch operator at the minimizer. newton_tangent is the
/// pinned periodic tangent used for k = 0.
BlochScan bloch_scan(const BlochAnalyzer& analyzer, const BoundarySchur& schur,
                     const std::vector<ElementResult>& elements, const Eigen::SparseMatrix<double>& newton_tangent,
                     const DofReduction<double>& newton_reduction, const BlochScanConfig& cfg);

/// Wave vectors of the default scan before refinement.
std::vector<BlochSample> scan_points(const BlochScanConfig& cfg);

enum class InstabilityType { kStable, kUnitCellPeriodic, kShortWavelength, kLongWavelength };
std::string to_string(InstabilityType type);

struct StabilityStep {
  double t = 0.0;
  double lambda_min = 0.0;
  double indicator_min = 0.0;
  Vec2 k_star{0.0, 0.0};
  bool surrogate = false;
  double lambda_bar = 0.0;
  double theta = 0.0;
  bool moduli_near_singular = false;
};

struct Classification {
  InstabilityType type = InstabilityType::kStable;
  std::array<double, 2> n{1.0, 1.0};     ///< cells per direction, 2 pi / k_i
  std::array<bool, 2> n_integer{true, true};
  bool disagreement = false;             ///< Bloch long-wavelength while lambda_bar > 0
};

Classification classify(const StabilityStep& step);

struct StabilityReport {
  std::vector<StabilityStep> steps;
  std::optional<std::size_t> critical;   ///< index into steps
  Classification classification;
  double t_crit = 0.0;
  double P11_crit_normalized = 0.0;      ///< P11(t_crit) / gamma of the matrix
  Eigen::VectorXcd mode;
  std::string message;
};

/// Appends one scanned step; the first step with min(lambda_min, lambda_bar)
/// <= 0 becomes the critical record. Returns true when it was critical.
bool track(StabilityReport& report, const StabilityStep& step, double P11_normalized, const Eigen::VectorXcd& mode);

/// n1 x n2 copy of a converged cell state, for supercell checks.
struct Supercell {
  std::shared_ptr<const Model> model;
  Eigen::VectorXd d;
  History history;
};
Supercell make_supercell(const Model& cell, const Eigen::VectorXd& d, const History& history, int n1, int n2);

/// Smallest eigenvalues of the periodic tangent of a supercell, unpinned
/// with rigid translations deflated.
std::vector<double> supercell_spectrum(const Supercell& sc, double tau, int count);

}  // namespace hydrogel
