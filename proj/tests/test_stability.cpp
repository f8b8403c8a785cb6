#include <doctest.h>

#include <cmath>
#include <random>

#include "hydrogel/errors.hpp"
#include "hydrogel/solver.hpp"
#include "hydrogel/stability.hpp"
#include "test_util.hpp"

using namespace hydrogel;
using hydrogel::test::rel_err;

namespace {

// cell after one large step of the ramp; history_prev is the history the
// converged tangent was evaluated with
struct LoadedCell {
  std::shared_ptr<const Model> model;
  std::unique_ptr<CellSolver> solver;
  Eigen::VectorXd d;
  History history_prev;
  double tau = 0.1;
};

LoadedCell loaded_cell(double f0, int circ, int radial, double fraction) {
  LoadedCell c;
  c.model = test::make_model(test::cell_mesh(f0, circ, radial));
  c.solver = std::make_unique<CellSolver>(c.model);
  const double mu0 = initial_state(c.model->materials[0]).mu0;
  auto st = reference_state(*c.model);
  c.history_prev = st.history;
  c.d = st.d;
  REQUIRE(c.solver->solve(c.d, c.history_prev, c.tau, fraction * mu0).converged);
  return c;
}

Tensor4 isotropic_neo_hooke(double gamma) {
  Tensor4 A = Tensor4::Zero();
  for (int i = 0; i < 2; ++i)
    for (int I = 0; I < 2; ++I)
      for (int j = 0; j < 2; ++j)
        for (int J = 0; J < 2; ++J) A(flat(i, I), flat(j, J)) = gamma * ((i == j && I == J) + (i == J && j == I));
  return A;
}

double closest(const std::vector<double>& values, double x) {
  double best = values.front();
  for (double v : values)
    if (std::abs(v - x) < std::abs(best - x)) best = v;
  return best;
}

}  // namespace

TEST_SUITE("stability") {

TEST_CASE("acoustic tensor of the neo-Hookean identity state") {
  const double gamma = 0.01;
  const Tensor4 A = isotropic_neo_hooke(gamma);
  for (double th = 0.0; th < M_PI; th += 0.3) {
    const Vec2 N(std::cos(th), std::sin(th));
    Eigen::SelfAdjointEigenSolver<Mat2> es(acoustic_tensor(A, N));
    CHECK(es.eigenvalues()[0] == doctest::Approx(gamma).epsilon(1e-12));
    CHECK(es.eigenvalues()[1] == doctest::Approx(2 * gamma).epsilon(1e-12));
  }
  const auto r = strong_ellipticity(A);
  CHECK(r.lambda_bar == doctest::Approx(gamma).epsilon(1e-12));
}

TEST_CASE("ellipticity indicator: quadratic in N and quarter-turn invariant for square symmetry") {
  auto c = loaded_cell(0.2, 16, 4, 0.7);
  const auto schur = boundary_schur(*c.model, c.solver->full_tangent());
  const auto ops = build_projection_operators(*c.model, c.solver->periodic());
  const Tensor4 A = effective_moduli(schur, ops, c.solver->periodic(), *c.model).A;
  for (double th = 0.1; th < M_PI; th += 0.37) {
    const Vec2 N(std::cos(th), std::sin(th)), R(-N.y(), N.x());
    CHECK(rel_err(acoustic_tensor(A, N), acoustic_tensor(A, Vec2(-N))) < 1e-14);
    Eigen::SelfAdjointEigenSolver<Mat2> a(acoustic_tensor(A, N)), b(acoustic_tensor(A, R));
    CHECK(a.eigenvalues()[0] == doctest::Approx(b.eigenvalues()[0]).epsilon(1e-8));
  }
  const auto r = strong_ellipticity(A);
  CHECK(r.lambda_bar > 0.0);
  CHECK(r.theta >= 0.0);
  CHECK(r.theta < M_PI);
  // golden-section minimum is not above any sampled direction
  for (double th = 0.0; th < M_PI; th += 0.01) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(acoustic_tensor(A, Vec2(std::cos(th), std::sin(th))));
    CHECK(r.lambda_bar <= es.eigenvalues()[0] + 1e-12 * std::abs(r.lambda_bar));
  }
}

TEST_CASE("asymmetric moduli are rejected") {
  Tensor4 A = isotropic_neo_hooke(1.0);
  A(0, 1) += 0.1;
  CHECK_THROWS_AS(strong_ellipticity(A), DomainError);
}

TEST_CASE("scan grid contains the high-symmetry points exactly") {
  const auto pts = scan_points({});
  auto has = [&](Vec2 k) {
    return std::any_of(pts.begin(), pts.end(), [&](const BlochSample& s) { return s.k == k && !s.surrogate; });
  };
  CHECK(has(Vec2(0, 0)));
  CHECK(has(Vec2(M_PI, 0)));
  CHECK(has(Vec2(0, M_PI)));
  CHECK(has(Vec2(M_PI, M_PI)));
  CHECK(pts.size() == 11 * 11 + 3);
}

TEST_CASE("bloch operator at k = 0 with the pin is the Newton tangent") {
  auto c = loaded_cell(0.2, 16, 4, 0.7);
  BlochAnalyzer an(c.model, c.solver->periodic());
  const auto Kb = an.bloch_operator(c.solver->elements(), Vec2(0, 0), true);
  const auto Kn = c.solver->reduced_tangent();
  CHECK(Kb.imag().norm() == 0.0);
  CHECK((Eigen::SparseMatrix<double>(Kb.real()) - Kn).norm() <= 1e-14 * Kn.norm());
  const double a = smallest_eigenpairs<double>(Kn, 1).values[0];
  const double b = smallest_eigenpairs<cdouble>(Kb, 1).values[0];
  CHECK(a == doctest::Approx(b).epsilon(1e-10));
}

TEST_CASE("bloch operator is Hermitian at random wave vectors") {
  auto c = loaded_cell(0.2, 16, 4, 0.7);
  BlochAnalyzer an(c.model, c.solver->periodic());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, M_PI);
  for (int t = 0; t < 3; ++t) {
    const auto K = an.bloch_operator(c.solver->elements(), Vec2(u(rng), u(rng)));
    const Eigen::SparseMatrix<cdouble> KH = K.adjoint();
    CHECK((K - KH).norm() <= 1e-10 * K.norm());
  }
}

TEST_CASE("condensed operator is the Schur complement of the Bloch operator") {
  auto c = loaded_cell(0.2, 16, 3, 0.7);
  const auto& model = *c.model;
  const auto& ps = c.solver->periodic();
  BlochAnalyzer an(c.model, ps);
  const auto schur = boundary_schur(model, c.solver->full_tangent());
  const Vec2 k(0.7, 2.1);
  const auto red = an.reduction(k);
  const Eigen::MatrixXcd K = Eigen::MatrixXcd(an.bloch_operator(c.solver->elements(), k));
  std::vector<int> bidx, iidx;
  for (int g : model.dofs.boundary)
    if (ps.follower_link[g] < 0) bidx.push_back(red.index[g]);
  for (int g : model.dofs.interior) iidx.push_back(red.index[g]);
  auto block = [&](const std::vector<int>& r, const std::vector<int>& s) {
    Eigen::MatrixXcd out(r.size(), s.size());
    for (std::size_t a = 0; a < r.size(); ++a)
      for (std::size_t b = 0; b < s.size(); ++b) out(a, b) = K(r[a], s[b]);
    return out;
  };
  const Eigen::MatrixXcd Kib = block(iidx, bidx);
  const Eigen::MatrixXcd S = block(bidx, bidx) - Kib.adjoint() * block(iidx, iidx).ldlt().solve(Kib);
  const Eigen::MatrixXcd C = an.condensed_operator(schur, k);
  CHECK((S - C).norm() <= 1e-9 * S.norm());
}

TEST_CASE("phase-class condensed operator matches the direct assembly") {
  auto c = loaded_cell(0.2, 16, 3, 0.7);
  BlochAnalyzer an(c.model, c.solver->periodic());
  const auto schur = boundary_schur(*c.model, c.solver->full_tangent());
  const auto basis = an.condensed_basis(schur);
  CHECK(basis.shifts.size() <= 4);
  for (const Vec2 k : {Vec2(0, 0), Vec2(M_PI, 0), Vec2(0.3, -2.1), Vec2(M_PI, M_PI)}) {
    const Eigen::MatrixXcd a = an.condensed_operator(schur, k);
    const Eigen::MatrixXcd b = an.condensed_operator(basis, k);
    CHECK((a - b).norm() <= 1e-12 * a.norm());
    CHECK(an.condensed_min_eigenvalue(basis, k) ==
          doctest::Approx(an.condensed_min_eigenvalue(schur, k)).epsilon(1e-9));
  }
}

TEST_CASE("bloch eigenvalues match supercell eigenvalues") {
  auto c = loaded_cell(0.3, 16, 4, 0.6);
  BlochAnalyzer an(c.model, c.solver->periodic());
  struct Case {
    Vec2 k;
    int n1, n2;
  };
  for (const auto& cs : {Case{{M_PI, 0}, 2, 1}, Case{{0, M_PI}, 1, 2}, Case{{M_PI, M_PI}, 2, 2},
                         Case{{2 * M_PI / 3, 0}, 3, 1}}) {
    CAPTURE(cs.n1);
    CAPTURE(cs.n2);
    const double lam = an.exact(c.solver->elements(), cs.k, 1).values[0];
    const auto sc = make_supercell(*c.model, c.d, c.history_prev, cs.n1, cs.n2);
    const auto spec = supercell_spectrum(sc, c.tau, 8);
    CHECK(std::abs(closest(spec, lam) - lam) < 1e-6 * std::abs(lam));
  }
}

TEST_CASE("bloch spectrum has the square symmetry of the undeformed cell") {
  auto c = loaded_cell(0.2, 16, 4, 0.7);
  BlochAnalyzer an(c.model, c.solver->periodic());
  const auto schur = boundary_schur(*c.model, c.solver->full_tangent());
  const std::vector<Vec2> ks = {{0.3, 1.1}, {M_PI, 0.0}, {0.5, 2.9}, {1.7, 0.2}, {2.5, M_PI}};
  for (const auto& k : ks) {
    const Vec2 kt(k.y(), k.x());
    CHECK(an.condensed_min_eigenvalue(schur, k) ==
          doctest::Approx(an.condensed_min_eigenvalue(schur, kt)).epsilon(1e-6));
  }
  const double a = an.exact(c.solver->elements(), ks[0], 1).values[0];
  const double b = an.exact(c.solver->elements(), Vec2(ks[0].y(), ks[0].x()), 1).values[0];
  CHECK(a == doctest::Approx(b).epsilon(1e-6));
}

TEST_CASE("reference state is stable on the whole scan") {
  auto c = loaded_cell(0.2, 16, 4, 1.0);
  BlochAnalyzer an(c.model, c.solver->periodic());
  const auto schur = boundary_schur(*c.model, c.solver->full_tangent());
  const auto scan = bloch_scan(an, schur, c.solver->elements(), c.solver->reduced_tangent(),
                               c.solver->reduction(), {});
  CHECK_FALSE(scan.exact_fallback);
  CHECK(scan.indicator_min > 0.0);
  CHECK(scan.lambda_min > 0.0);
  CHECK(scan.mode.size() == c.model->dofs.size());
  for (const auto& s : scan.samples) CHECK(s.value > 0.0);
}

TEST_CASE("classification from the critical wave vector") {
  StabilityStep s;
  s.lambda_bar = 1.0;
  s.lambda_min = 1.0;
  CHECK(classify(s).type == InstabilityType::kStable);

  s.lambda_min = -1.0;
  s.k_star = Vec2(M_PI, M_PI);
  auto c = classify(s);
  CHECK(c.type == InstabilityType::kShortWavelength);
  CHECK(c.n[0] == 2.0);
  CHECK(c.n[1] == 2.0);

  s.k_star = Vec2(M_PI, 0.0);
  c = classify(s);
  CHECK(c.n[0] == 2.0);
  CHECK(c.n[1] == 1.0);

  s.k_star = Vec2(0.9 * M_PI, 0.0);
  c = classify(s);
  CHECK_FALSE(c.n_integer[0]);
  CHECK(c.n[0] == doctest::Approx(2.0 / 0.9));

  s.k_star = Vec2(0.0, 0.0);
  CHECK(classify(s).type == InstabilityType::kUnitCellPeriodic);

  s.k_star = Vec2(0.02 * M_PI, 0.0);
  s.surrogate = true;
  c = classify(s);
  CHECK(c.type == InstabilityType::kLongWavelength);
  CHECK(c.disagreement);

  s.lambda_min = 1.0;
  s.lambda_bar = -1.0;
  c = classify(s);
  CHECK(c.type == InstabilityType::kLongWavelength);
  CHECK_FALSE(c.disagreement);
}

TEST_CASE("tracking keeps the first critical step") {
  StabilityReport rep;
  StabilityStep s;
  s.lambda_min = 1.0;
  s.lambda_bar = 1.0;
  s.t = 0.1;
  CHECK_FALSE(track(rep, s, -0.5, {}));
  s.t = 0.2;
  s.lambda_min = -0.1;
  s.k_star = Vec2(M_PI, M_PI);
  CHECK(track(rep, s, -0.7, {}));
  s.t = 0.3;
  CHECK_FALSE(track(rep, s, -0.9, {}));
  REQUIRE(rep.critical);
  CHECK(*rep.critical == 1);
  CHECK(rep.t_crit == 0.2);
  CHECK(rep.P11_crit_normalized == -0.7);
  CHECK(rep.steps.size() == 3);
}

}  // TEST_SUITE
