#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hydrogel/assembly.hpp"
#include "hydrogel/fem.hpp"
#include "hydrogel/homogenization.hpp"
#include "hydrogel/linalg.hpp"

namespace hydrogel {

struct NewtonOptions {
  int max_iterations = 25;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  int max_halvings = 5;
  int max_bisections = 4;
  Execution exec = Execution::kParallel;
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;               ///< residual evaluations, 1 when the guess already converges
  std::vector<double> residuals;    ///< reduced residual norm per iteration
  int halvings = 0;
  std::string failure;
};

/// Newton solver of one implicit step on the periodically constrained cell.
/// Followers are eliminated through the periodic reduction; the constraint
/// reactions remain available in the full residual.
class CellSolver {
 public:
  explicit CellSolver(std::shared_ptr<const Model> model, MacroControl macro = {});

  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }
  const PeriodicStructure& periodic() const { return periodic_; }
  const MacroControl& macro() const { return macro_; }
  void set_macro(const MacroControl& macro) { macro_ = macro; }
  const DofReduction<double>& reduction() const { return reduction_; }

  /// d is the initial guess on entry and the solution on return. Throws
  /// StepRejected when every trial state is inadmissible; returns an
  /// unconverged report when the iteration budget runs out.
  NewtonReport solve(Eigen::VectorXd& d, const History& history, double tau, double mu_applied,
                     const NewtonOptions& opt = {});

  /// Element results (with tangents) and full residual at the last accepted
  /// iterate of solve().
  const std::vector<ElementResult>& elements() const { return elements_; }
  const Eigen::VectorXd& residual() const { return residual_; }

  /// Tangent of the Newton system (periodic, pinned) at the last iterate.
  Eigen::SparseMatrix<double> reduced_tangent(Execution exec = Execution::kParallel) const;
  /// Unconstrained tangent over all dofs at the last iterate.
  Eigen::SparseMatrix<double> full_tangent(Execution exec = Execution::kParallel) const;

 private:
  std::shared_ptr<const Model> model_;
  PeriodicStructure periodic_;
  MacroControl macro_;
  DofReduction<double> reduction_;
  ReducedAssembler<double> assembler_;
  mutable std::unique_ptr<ReducedAssembler<double>> full_assembler_;
  SparseFactor<double> factor_;
  std::vector<ElementResult> elements_, trial_;
  Eigen::VectorXd residual_;
};

struct CellState {
  Eigen::VectorXd d;
  History history;
  double t = 0.0;
};

CellState reference_state(const Model& model);

struct StepOutcome {
  bool ok = false;
  int substeps = 0;
  int newton_iterations = 0;
  double mu_applied = 0.0;     ///< boundary value at the end of the step
  double last_tau = 0.0;       ///< length of the last accepted substep
  SolventBalance balance;       ///< summed over substeps
  double balance_error = 0.0;   ///< largest relative audit mismatch over substeps
  std::string failure;
  std::vector<NewtonReport> reports;
};

/// Advances state by tau with the boundary potential mu_of_t(t_end). A failed
/// Newton solve halves the step, up to opt.max_bisections levels.
StepOutcome advance_step(CellSolver& solver, CellState& state, double tau,
                         const std::function<double(double)>& mu_of_t, const NewtonOptions& opt = {});

}  // namespace hydrogel
