#include <doctest.h>

#include <cmath>
#include <random>

#include "hydrogel/errors.hpp"
#include "hydrogel/homogenization.hpp"
#include "hydrogel/solver.hpp"
#include "test_util.hpp"

using namespace hydrogel;
using hydrogel::test::rel_err;

namespace {

struct Solved {
  std::shared_ptr<const Model> model;
  std::unique_ptr<CellSolver> solver;
  CellState state;
};

// solves one step of length tau with the boundary potential mu from the reference
Solved solve_one(std::shared_ptr<const Model> model, const MacroControl& macro, double tau, double mu) {
  Solved s;
  s.model = model;
  s.solver = std::make_unique<CellSolver>(model, macro);
  s.state = reference_state(*model);
  const auto out = advance_step(*s.solver, s.state, tau, [&](double) { return mu; });
  REQUIRE(out.ok);
  return s;
}

Tensor4 moduli_of(const CellSolver& solver) {
  const auto& model = solver.model();
  const auto schur = boundary_schur(model, solver.full_tangent());
  const auto ops = build_projection_operators(model, solver.periodic());
  return effective_moduli(schur, ops, solver.periodic(), model).A;
}

// central differences of the effective stress under perturbed Fbar, same history
Tensor4 fd_moduli(const std::shared_ptr<const Model>& model, const MacroControl& base, const Eigen::VectorXd& d0,
                  const History& history, double tau, double mu, double h) {
  Tensor4 out;
  for (int j = 0; j < 2; ++j)
    for (int B = 0; B < 2; ++B) {
      Mat2 Pp, Pm;
      for (int sgn : {1, -1}) {
        MacroControl mc = base;
        mc.Fbar(j, B) += sgn * h;
        CellSolver s(model, mc);
        Eigen::VectorXd d = d0;
        const auto rep = s.solve(d, history, tau, mu);
        REQUIRE(rep.converged);
        (sgn > 0 ? Pp : Pm) = effective_stress_and_mu(*model, s.periodic(), s.residual(), tau).P;
      }
      const Mat2 dP = (Pp - Pm) / (2 * h);
      for (int i = 0; i < 2; ++i)
        for (int A = 0; A < 2; ++A) out(flat(i, A), flat(j, B)) = dP(i, A);
    }
  return out;
}

}  // namespace

TEST_SUITE("homogenization") {

TEST_CASE("links cover every external dof except the corner master exactly once") {
  auto model = test::make_model(test::cell_mesh(0.2, 16, 4));
  PeriodicStructure ps(*model);
  int followers = 0;
  for (int g = 0; g < model->dofs.size(); ++g) followers += ps.follower_link[g] >= 0;
  CHECK(followers == static_cast<int>(ps.links.size()));
  CHECK(model->mesh->node_tags[ps.pinned_node] == kTagNone);
  for (const auto& l : ps.links)
    if (l.flux) CHECK(std::abs(l.rho) == 1.0);
}

TEST_CASE("constraint rows have full rank and accept affine fields") {
  auto model = test::make_model(test::cell_mesh(0.3, 16, 4));
  PeriodicStructure ps(*model);
  MacroControl mc;
  mc.Fbar << 1.05, 0.02, -0.01, 0.97;
  const auto rows = build_constraints(*model, ps, mc);
  const Eigen::MatrixXd CCt = Eigen::MatrixXd(rows.C * rows.C.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(CCt);
  CHECK(es.eigenvalues()[0] > 1e-8);

  Eigen::VectorXd d = Eigen::VectorXd::Zero(model->dofs.size());
  for (int n = 0; n < model->mesh->num_nodes(); ++n) {
    const Vec2 u = (mc.Fbar - Mat2::Identity()) * model->mesh->nodes[n];
    d[2 * n] = u.x();
    d[2 * n + 1] = u.y();
  }
  CHECK((rows.C * d - rows.offset).lpNorm<Eigen::Infinity>() < 1e-14);

  Eigen::VectorXd e = Eigen::VectorXd::Random(model->dofs.size());
  apply_macro(*model, ps, mc, e);
  CHECK((rows.C * e - rows.offset).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("jump operator annihilates periodic displacement and antiperiodic flux") {
  auto model = test::make_model(test::cell_mesh(0.2, 16, 4));
  PeriodicStructure ps(*model);
  const auto ops = build_projection_operators(*model, ps);
  Eigen::VectorXd d = Eigen::VectorXd::Random(model->dofs.size());
  apply_macro(*model, ps, MacroControl{}, d);
  Eigen::VectorXd b(static_cast<Eigen::Index>(ops.boundary_dofs.size()));
  for (std::size_t c = 0; c < ops.boundary_dofs.size(); ++c) b[c] = d[ops.boundary_dofs[c]];
  CHECK((ops.P * b).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("geometric operator reproduces the reaction-weighted stress average") {
  auto model = test::make_model(test::cell_mesh(0.2, 16, 4));
  PeriodicStructure ps(*model);
  const auto ops = build_projection_operators(*model, ps);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd R = Eigen::VectorXd::Zero(model->dofs.size());
  Eigen::VectorXd lam(ops.P.rows());
  for (int r = 0; r < lam.size(); ++r) {
    lam[r] = nd(rng);
    R[ps.links[ops.jump_link[r]].follower] =
        ps.links[ops.jump_link[r]].flux ? -lam[r] * ps.links[ops.jump_link[r]].outward_follower * 0.1 : lam[r];
  }
  const auto eff = effective_stress_and_mu(*model, ps, R, 0.1);
  const Eigen::VectorXd gen = ops.Q * lam / ops.cell_volume;
  Mat2 P;
  P << gen[0], gen[1], gen[2], gen[3];
  CHECK(rel_err(P, eff.P) < 1e-13);
  CHECK(std::abs(gen[4] - eff.mu) < 1e-13 * std::max(1.0, std::abs(eff.mu)));
}

TEST_CASE("reference state has zero effective stress") {
  auto model = test::make_model(test::cell_mesh(0.2, 16, 4));
  const double mu0 = initial_state(model->materials[0]).mu0;
  auto s = solve_one(model, {}, 4e-3, mu0);
  const auto eff = effective_stress_and_mu(*model, s.solver->periodic(), s.solver->residual(), 4e-3);
  CHECK(eff.P.norm() < 1e-12);
  CHECK(std::abs(eff.mu - mu0) < 1e-9 * std::abs(mu0));
}

TEST_CASE("homogeneous cell: effective stress and moduli equal the pointwise response") {
  auto mesh = std::make_shared<const UnitCellMesh>(generate_square_cell(1.0, 3));
  auto model = test::make_model(mesh);
  MacroControl mc;
  mc.Fbar << 1.04, 0.015, -0.02, 0.98;
  auto s = solve_one(model, mc, 4e-3, 0.0);
  const double s0 = initial_state(model->materials[0]).s0;
  const auto point = evaluate_material(mc.Fbar, s0, model->materials[0]);
  const auto eff = effective_stress_and_mu(*model, s.solver->periodic(), s.solver->residual(), 4e-3);
  CHECK(rel_err(eff.P, point.stress.P) < 1e-10);
  CHECK(std::abs(eff.mu - point.stress.mu) < 1e-9 * std::abs(point.stress.mu));

  // no solvent can enter a void-free cell without macroscopic flux, so the
  // solvent content stays at s0 and the moduli are those at fixed s
  const Tensor4 A = moduli_of(*s.solver);
  CHECK(rel_err(A, point.tangent.A) < 1e-6);
  const Tensor4 condensed = condensed_point_moduli(mc.Fbar, s0, model->materials[0]);
  CHECK(rel_err(A, condensed) > 1e-5);
}

TEST_CASE("effective stress from reactions equals the volume average") {
  auto model = test::make_model(test::cell_mesh(0.3, 16, 4));
  const double mu0 = initial_state(model->materials[0]).mu0;
  auto s = solve_one(model, {}, 0.1, 0.7 * mu0);
  const auto eff = effective_stress_and_mu(*model, s.solver->periodic(), s.solver->residual(), 0.1);
  const Mat2 avg = volume_average_stress(*model, s.state.d, s.state.history, 0.0);
  CHECK(eff.P.norm() > 1e-6);
  CHECK(rel_err(eff.P, avg) < 1e-8);
}

TEST_CASE("condensed moduli match finite differences of the effective stress") {
  auto model = test::make_model(test::cell_mesh(0.3, 16, 4));
  const double mu0 = initial_state(model->materials[0]).mu0;
  const double tau = 0.1;
  auto s = solve_one(model, {}, tau, 0.7 * mu0);
  const Tensor4 A = moduli_of(*s.solver);
  const History h0 = initial_history(*model);
  const Tensor4 fd = fd_moduli(model, {}, s.state.d, h0, tau, 0.7 * mu0, 1e-5);
  CHECK(rel_err(A, fd) < 1e-4);
  CHECK((A - A.transpose()).norm() <= 1e-8 * A.norm());
}

TEST_CASE("effective stress is the derivative of the minimized potential") {
  auto model = test::make_model(test::cell_mesh(0.3, 16, 4));
  const double mu0 = initial_state(model->materials[0]).mu0;
  const double tau = 0.1, mu = 0.7 * mu0, h = 1e-5;
  auto s = solve_one(model, {}, tau, mu);
  const History h0 = initial_history(*model);
  const auto eff = effective_stress_and_mu(*model, s.solver->periodic(), s.solver->residual(), tau);
  Mat2 dF;
  dF << 0.3, -0.5, 0.2, 0.8;
  double pot[2];
  for (int k = 0; k < 2; ++k) {
    MacroControl mc;
    mc.Fbar += (k == 0 ? h : -h) * dF;
    CellSolver sv(model, mc);
    Eigen::VectorXd d = s.state.d;
    REQUIRE(sv.solve(d, h0, tau, mu).converged);
    pot[k] = incremental_potential(*model, sv.elements(), void_load(*model, tau, mu), d);
  }
  const double fd = (pot[0] - pot[1]) / (2 * h);
  const double an = model->mesh->cell_volume() * (eff.P.array() * dF.array()).sum();
  CHECK(std::abs(fd - an) < 1e-5 * std::abs(an));
}

TEST_CASE("reference moduli of the voided cell have square symmetry") {
  auto model = test::make_model(test::cell_mesh(0.2, 16, 4));
  const double mu0 = initial_state(model->materials[0]).mu0;
  auto s = solve_one(model, {}, 4e-3, mu0);
  const Tensor4 A = moduli_of(*s.solver);
  CHECK(std::abs(A(0, 0) - A(3, 3)) <= 1e-8 * std::abs(A(0, 0)));
  CHECK(std::abs(A(1, 1) - A(2, 2)) <= 1e-8 * std::abs(A(1, 1)));
}

TEST_CASE("bloch reduction rejects wave vectors outside the first quadrant cell") {
  auto model = test::make_model(test::cell_mesh(0.2, 16, 4));
  PeriodicStructure ps(*model);
  CHECK_THROWS_AS(bloch_reduction(*model, ps, Vec2(-0.1, 0.0)), DomainError);
  CHECK_THROWS_AS(bloch_reduction(*model, ps, Vec2(0.0, 3.5)), DomainError);
}

}  // TEST_SUITE
