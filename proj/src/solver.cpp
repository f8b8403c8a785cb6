#include "hydrogel/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hydrogel/errors.hpp"

namespace hydrogel {

CellSolver::CellSolver(std::shared_ptr<const Model> model, MacroControl macro)
    : model_(std::move(model)),
      periodic_(*model_),
      macro_(macro),
      reduction_(periodic_reduction(*model_, periodic_, true)),
      assembler_(*model_, reduction_) {}

NewtonReport CellSolver::solve(Eigen::VectorXd& d, const History& history, double tau, double mu_applied,
                               const NewtonOptions& opt) {
  const Model& m = *model_;
  NewtonReport rep;
  const Eigen::VectorXd load = void_load(m, tau, mu_applied);
  apply_macro(m, periodic_, macro_, d);

  evaluate_elements(m, d, history, tau, true, elements_, opt.exec);
  residual_ = assemble_residual(m, elements_) + load;
  double pot = incremental_potential(m, elements_, load, d);
  double r0 = 0.0;
  Eigen::SparseMatrix<double> K;
  Eigen::VectorXd trial_d;
  for (;;) {
    const Eigen::VectorXd r = reduction_.restrict(residual_);
    const double nrm = r.norm();
    rep.residuals.push_back(nrm);
    ++rep.iterations;
    if (rep.iterations == 1) r0 = nrm;
    if (nrm <= std::max(opt.rel_tol * r0, opt.abs_tol)) {
      rep.converged = true;
      return rep;
    }
    if (rep.iterations >= opt.max_iterations) {
      std::ostringstream os;
      os << "no convergence in " << opt.max_iterations << " iterations (residual " << nrm << ", initial " << r0 << ")";
      rep.failure = os.str();
      return rep;
    }
    assembler_.assemble(elements_, K, opt.exec);
    if (!factor_.factor(K)) {
      rep.failure = "singular Newton tangent";
      return rep;
    }
    const Eigen::VectorXd dx = reduction_.expand(Eigen::VectorXd(-factor_.solve(r)));

    double step = 1.0;
    double best_pot = std::numeric_limits<double>::infinity();
    double best_step = 0.0;
    bool accepted = false;
    const double slack = 1e-10 * std::max(1.0, std::abs(pot));
    for (int h = 0; h <= opt.max_halvings; ++h, step *= 0.5) {
      if (h > 0) ++rep.halvings;
      trial_d = d + step * dx;
      try {
        evaluate_elements(m, trial_d, history, tau, true, trial_, opt.exec);
      } catch (const StepRejected&) {
        continue;
      }
      const double p = incremental_potential(m, trial_, load, trial_d);
      if (p < best_pot) {
        best_pot = p;
        best_step = step;
      }
      if (p <= pot + slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (best_step == 0.0) throw StepRejected("every line-search trial left the admissible set");
      step = best_step;
      trial_d = d + step * dx;
      evaluate_elements(m, trial_d, history, tau, true, trial_, opt.exec);
      best_pot = incremental_potential(m, trial_, load, trial_d);
    }
    d = trial_d;
    std::swap(elements_, trial_);
    pot = best_pot;
    residual_ = assemble_residual(m, elements_) + load;
  }
}

Eigen::SparseMatrix<double> CellSolver::reduced_tangent(Execution exec) const {
  Eigen::SparseMatrix<double> K;
  assembler_.assemble(elements_, K, exec);
  return K;
}

Eigen::SparseMatrix<double> CellSolver::full_tangent(Execution exec) const {
  if (!full_assembler_)
    full_assembler_ = std::make_unique<ReducedAssembler<double>>(
        *model_, DofReduction<double>::identity(model_->dofs.size()));
  Eigen::SparseMatrix<double> K;
  full_assembler_->assemble(elements_, K, exec);
  return K;
}

CellState reference_state(const Model& model) {
  CellState s;
  s.d = Eigen::VectorXd::Zero(model.dofs.size());
  s.history = initial_history(model);
  return s;
}

namespace {

bool advance_level(CellSolver& solver, CellState& state, double tau, const std::function<double(double)>& mu_of_t,
                   const NewtonOptions& opt, int level, StepOutcome& out) {
  Eigen::VectorXd d = state.d;
  const double t_end = state.t + tau;
  const double mu = mu_of_t(t_end);
  NewtonReport rep;
  try {
    rep = solver.solve(d, state.history, tau, mu, opt);
  } catch (const StepRejected& e) {
    rep.failure = e.what();
  }
  out.newton_iterations += rep.iterations;
  out.reports.push_back(rep);
  if (rep.converged) {
    const Model& m = solver.model();
    History next = advance_history(m, d, state.history, tau);
    const auto bal = solvent_balance_audit(m, d, next, state.history, tau);
    const double err =
        std::abs(bal.delta_s_total - bal.boundary_influx) / std::max(std::abs(bal.delta_s_total), 1e-14);
    out.balance_error = std::max(out.balance_error, err);
    out.balance.delta_s_total += bal.delta_s_total;
    out.balance.boundary_influx += bal.boundary_influx;
    out.balance.void_influx += bal.void_influx;
    out.balance.external_influx += bal.external_influx;
    state.d = std::move(d);
    state.history = std::move(next);
    state.t = t_end;
    out.mu_applied = mu;
    out.last_tau = tau;
    ++out.substeps;
    return true;
  }
  if (level >= opt.max_bisections) {
    std::ostringstream os;
    os << "step at t = " << t_end << " failed after " << level << " bisections: " << rep.failure;
    out.failure = os.str();
    return false;
  }
  return advance_level(solver, state, 0.5 * tau, mu_of_t, opt, level + 1, out) &&
         advance_level(solver, state, 0.5 * tau, mu_of_t, opt, level + 1, out);
}

}  // namespace

StepOutcome advance_step(CellSolver& solver, CellState& state, double tau,
                         const std::function<double(double)>& mu_of_t, const NewtonOptions& opt) {
  StepOutcome out;
  const double t_target = state.t + tau;
  out.ok = advance_level(solver, state, tau, mu_of_t, opt, 0, out);
  if (out.ok) state.t = t_target;
  return out;
}

}  // namespace hydrogel
