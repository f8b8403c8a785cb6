#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "hydrogel/errors.hpp"
#include "hydrogel/material.hpp"
#include "test_util.hpp"

using namespace hydrogel;
using hp = boost::multiprecision::cpp_bin_float_50;

namespace {

hp energy_hp(const Mat2& F, double s_in, const MaterialParams& m) {
  const hp f11 = F(0, 0), f12 = F(0, 1), f21 = F(1, 0), f22 = F(1, 1);
  const hp s = s_in, j0 = m.j0, g = m.gamma, a = m.alpha, chi = m.chi, e = m.epsilon;
  const hp J = f11 * f22 - f12 * f21;
  const hp FF = f11 * f11 + f12 * f12 + f21 * f21 + f22 * f22 + 1;
  const hp j023 = pow(j0, hp(2) / 3);
  const hp pen = J * j0 - 1 - s;
  return g / (2 * j0) * (j023 * FF - 3 - 2 * log(J * j0)) + a / j0 * (s * log(s / (1 + s)) + chi * s / (1 + s)) +
         e / (2 * j0) * pen * pen;
}

Mat2 rotation(double th) {
  Mat2 R;
  R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  return R;
}

struct RandomState {
  Mat2 F;
  double s;
};

RandomState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> det(0.8, 3.0);
  std::uniform_real_distribution<double> ratio(0.6, 1.6);
  std::uniform_real_distribution<double> sol(0.01, 2.0);
  const double J = det(rng);
  const double r = ratio(rng);
  const double l1 = std::sqrt(J * r), l2 = std::sqrt(J / r);
  const Mat2 F = rotation(ang(rng)) * Eigen::Vector2d(l1, l2).asDiagonal() * rotation(ang(rng));
  return {F, sol(rng)};
}

double psi(const Mat2& F, double s, const MaterialParams& m) {
  ConstitutivePoint p;
  p.F = F;
  p.s = s;
  return free_energy(p, m);
}

}  // namespace

TEST_SUITE("material") {
  TEST_CASE("energy matches a 50-digit evaluation at the reference state") {
    const auto m = MaterialParams::reference();
    const auto st = initial_state(m);
    const double e = psi(Mat2::Identity(), st.s0, m);
    const hp ref = energy_hp(Mat2::Identity(), st.s0, m);
    CHECK(std::isfinite(e));
    CHECK(std::abs(e - ref.convert_to<double>()) <= 1e-13 * std::abs(ref.convert_to<double>()));

    std::mt19937_64 rng(7);
    for (int k = 0; k < 20; ++k) {
      const auto rs = random_state(rng);
      const double ref_k = energy_hp(rs.F, rs.s, m).convert_to<double>();
      CHECK(std::abs(psi(rs.F, rs.s, m) - ref_k) <= 1e-12 * std::max(1.0, std::abs(ref_k)));
    }
  }

  TEST_CASE("dry limit energy vanishes") {
    MaterialParams m;
    m.j0 = 1.0;
    CHECK(std::abs(psi(Mat2::Identity(), 1e-12, m)) < 1e-8);
  }

  TEST_CASE("inadmissible states raise domain errors") {
    const auto m = MaterialParams::reference();
    Mat2 F;
    F << 1, 0, 0, -1;
    CHECK_THROWS_AS(psi(F, 0.1, m), DomainError);
    CHECK_THROWS_AS(psi(Mat2::Identity(), 0.0, m), DomainError);
    CHECK_THROWS_AS(evaluate_material(Mat2::Identity(), -0.5, m), DomainError);
  }

  TEST_CASE("objectivity under in-plane rotations") {
    const auto m = MaterialParams::reference();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    CHECK(psi(rotation(std::numbers::pi / 6) * Mat2::Identity() * 1.1, 0.3, m) ==
          doctest::Approx(psi(1.1 * Mat2::Identity(), 0.3, m)).epsilon(1e-12));
    for (int k = 0; k < 50; ++k) {
      const auto rs = random_state(rng);
      const double a = psi(rs.F, rs.s, m);
      const double b = psi(rotation(ang(rng)) * rs.F, rs.s, m);
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }

  TEST_CASE("stress and chemical potential match finite differences of the energy") {
    const auto m = MaterialParams::reference();
    std::mt19937_64 rng(3);
    const double h = 1e-6;
    for (int k = 0; k < 20; ++k) {
      const auto rs = random_state(rng);
      const auto r = evaluate_material(rs.F, rs.s, m);
      Mat2 Pfd;
      for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 2; ++a) {
          Mat2 Fp = rs.F, Fm = rs.F;
          Fp(i, a) += h;
          Fm(i, a) -= h;
          Pfd(i, a) = (psi(Fp, rs.s, m) - psi(Fm, rs.s, m)) / (2 * h);
        }
      const double mufd = (psi(rs.F, rs.s + h, m) - psi(rs.F, rs.s - h, m)) / (2 * h);
      CHECK(test::rel_err(r.stress.P, Pfd) < 1e-6);
      CHECK(std::abs(r.stress.mu - mufd) < 1e-6 * std::abs(r.stress.mu));
    }
  }

  TEST_CASE("tangent blocks match finite differences of stress and chemical potential") {
    const auto m = MaterialParams::reference();
    std::mt19937_64 rng(5);
    const double h = 1e-6;
    for (int k = 0; k < 50; ++k) {
      const auto rs = random_state(rng);
      const auto r = evaluate_material(rs.F, rs.s, m);
      Tensor4 Afd;
      Mat2 Bfd_from_mu;
      for (int j = 0; j < 2; ++j)
        for (int b = 0; b < 2; ++b) {
          Mat2 Fp = rs.F, Fm = rs.F;
          Fp(j, b) += h;
          Fm(j, b) -= h;
          const auto rp = evaluate_material(Fp, rs.s, m);
          const auto rm = evaluate_material(Fm, rs.s, m);
          const Mat2 dP = (rp.stress.P - rm.stress.P) / (2 * h);
          for (int i = 0; i < 2; ++i)
            for (int a = 0; a < 2; ++a) Afd(flat(i, a), flat(j, b)) = dP(i, a);
          Bfd_from_mu(j, b) = (rp.stress.mu - rm.stress.mu) / (2 * h);
        }
      const auto sp = evaluate_material(rs.F, rs.s + h, m);
      const auto sm = evaluate_material(rs.F, rs.s - h, m);
      const Mat2 Bfd = (sp.stress.P - sm.stress.P) / (2 * h);
      const double cfd = (sp.stress.mu - sm.stress.mu) / (2 * h);
      CHECK(test::rel_err(r.tangent.A, Afd) < 1e-5);
      CHECK(test::rel_err(r.tangent.B, Bfd) < 1e-5);
      CHECK(test::rel_err(r.tangent.B, Bfd_from_mu) < 1e-5);
      CHECK(std::abs(r.tangent.c - cfd) < 1e-5 * std::abs(r.tangent.c));
      CHECK((r.tangent.A - r.tangent.A.transpose()).norm() < 1e-12 * r.tangent.A.norm());
    }
  }

  TEST_CASE("neo-Hookean moduli at identity") {
    MaterialParams m;
    m.alpha = 0.0;
    m.epsilon = 0.0;
    m.j0 = 1.0;
    const auto r = evaluate_material(Mat2::Identity(), 0.5, m);
    for (int i = 0; i < 2; ++i)
      for (int a = 0; a < 2; ++a)
        for (int j = 0; j < 2; ++j)
          for (int b = 0; b < 2; ++b) {
            const double expect = m.gamma * ((i == j && a == b) + (i == b && j == a));
            CHECK(r.tangent.A(flat(i, a), flat(j, b)) == doctest::Approx(expect).epsilon(1e-14));
          }
  }

  TEST_CASE("chemical convexity in s for the reference hydrogel") {
    const auto m = MaterialParams::reference();
    for (int k = 1; k <= 5000; ++k) {
      const double s = 5.0 * k / 5000.0;
      CHECK_MESSAGE(evaluate_material(Mat2::Identity(), s, m).tangent.c > 0, "s = ", s);
    }
  }

  TEST_CASE("pre-swollen reference state") {
    const auto m = MaterialParams::reference();
    const auto st = initial_state(m);
    CHECK(st.s0 == doctest::Approx(1.066e-2).epsilon(1e-3));
    const hp j0 = m.j0;
    const hp s0 = hp(m.gamma) / m.epsilon * (pow(j0, hp(-1) / 3) - 1 / j0) + j0 - 1;
    const hp mu0 = -hp(m.epsilon) / j0 * (j0 - 1 - s0) +
                   hp(m.alpha) / j0 * (log(s0 / (1 + s0)) + 1 / (1 + s0) + hp(m.chi) / ((1 + s0) * (1 + s0)));
    CHECK(st.s0 == doctest::Approx(s0.convert_to<double>()).epsilon(1e-14));
    CHECK(st.mu0 == doctest::Approx(mu0.convert_to<double>()).epsilon(1e-13));
    CHECK(st.mu0 < -60.0);
    CHECK(st.mu0 > -80.0);

    const auto r = evaluate_material(Mat2::Identity(), st.s0, m);
    CHECK(r.stress.mu == doctest::Approx(st.mu0).epsilon(1e-13));
    CHECK(r.stress.P.norm() < 1e-15);

    MaterialParams soft = m;
    soft.gamma = 1e-12;
    CHECK(initial_state(soft).s0 == doctest::Approx(soft.j0 - 1.0).epsilon(1e-9));

    MaterialParams dry = m;
    dry.j0 = 1.0;
    CHECK_THROWS_AS(initial_state(dry), ConfigError);
    CHECK_THROWS_AS(dry.validate(), ConfigError);
  }

  TEST_CASE("rotation gives symmetric Kirchhoff stress") {
    MaterialParams m;
    m.j0 = 1.0;
    const Mat2 Q = rotation(0.7);
    const auto r = evaluate_material(Q, 0.05, m);
    const Mat2 tau = r.stress.P * Q.transpose();
    CHECK((tau - tau.transpose()).norm() < 1e-14);
  }

  TEST_CASE("dissipation") {
    const auto m = MaterialParams::reference();
    ConstitutivePoint p;
    p.s_prev = 0.3;
    p.C_prev << 1.2, 0.1, 0.1, 0.9;
    const auto d0 = dissipation(Vec2::Zero(), p, m);
    CHECK(d0.value == 0.0);
    CHECK(d0.dPhi_dH.norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Mat2> es(d0.d2Phi_dH2);
    CHECK(es.eigenvalues().minCoeff() > 0);

    MaterialParams iso = m;
    iso.j0 = 1.0;
    ConstitutivePoint q;
    q.s_prev = 1.0;
    const Vec2 H(0.3, -0.4);
    CHECK(dissipation(H, q, iso).value == doctest::Approx(H.squaredNorm() / (2 * iso.mobility)).epsilon(1e-14));

    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    const double h = 1e-4;
    for (int k = 0; k < 20; ++k) {
      const Vec2 Hr(nd(rng), nd(rng));
      const auto d = dissipation(Hr, p, m);
      CHECK(d.value >= 0);
      Vec2 gfd;
      Mat2 hfd;
      for (int a = 0; a < 2; ++a) {
        Vec2 Hp = Hr, Hm = Hr;
        Hp[a] += h;
        Hm[a] -= h;
        gfd[a] = (dissipation(Hp, p, m).value - dissipation(Hm, p, m).value) / (2 * h);
        hfd.col(a) = (dissipation(Hp, p, m).dPhi_dH - dissipation(Hm, p, m).dPhi_dH) / (2 * h);
      }
      CHECK(test::rel_err(d.dPhi_dH, gfd) < 1e-8);
      CHECK(test::rel_err(d.d2Phi_dH2, hfd) < 1e-8);
    }

    ConstitutivePoint bad = p;
    bad.s_prev = 0.0;
    CHECK_THROWS_AS(dissipation(H, bad, m), DomainError);
  }

  TEST_CASE("penalty residual scales inversely with the penalty modulus") {
    auto solve_g = [](double eps) {
      MaterialParams m;
      m.epsilon = eps;
      const Mat2 F = 1.5 * Mat2::Identity();
      double s = F.determinant() * m.j0 - 1.0;
      for (int it = 0; it < 100; ++it) {
        const auto r = evaluate_material(F, s, m);
        const double ds = -r.stress.mu / r.tangent.c;
        s += ds;
        if (std::abs(ds) < 1e-15 * s) break;
      }
      return F.determinant() * m.j0 - 1.0 - s;
    };
    const double g1 = solve_g(1e3), g2 = solve_g(2e3);
    CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(0.1));
  }
}
