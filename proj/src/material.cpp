#include "hydrogel/material.hpp"

#include <cmath>
#include <sstream>

#include "hydrogel/errors.hpp"

namespace hydrogel {

MaterialParams MaterialParams::reference() { return MaterialParams{}; }

void MaterialParams::validate() const {
  std::ostringstream err;
  if (!(gamma > 0)) err << "gamma must be > 0 (got " << gamma << "); ";
  if (!(alpha > 0)) err << "alpha must be > 0 (got " << alpha << "); ";
  if (!(mobility > 0)) err << "mobility must be > 0 (got " << mobility << "); ";
  if (!(epsilon > 0)) err << "epsilon must be > 0 (got " << epsilon << "); ";
  if (!(j0 > 1.0))
    err << "j0 must be > 1 (got " << j0 << "): the dry state j0 = 1 is singular; ";
  if (!std::isfinite(chi)) err << "chi must be finite; ";
  const auto msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid material parameters: " + msg);
}

namespace {

void check_admissible(double J, double s) {
  if (!(J > 0.0)) {
    std::ostringstream os;
    os << "deformation gradient not admissible: J = " << J << " <= 0";
    throw DomainError(os.str());
  }
  if (!(s > 0.0)) {
    std::ostringstream os;
    os << "solvent content not admissible: s = " << s << " <= 0";
    throw DomainError(os.str());
  }
}

}  // namespace

double free_energy(const ConstitutivePoint& p, const MaterialParams& m) {
  const double J = p.F.determinant();
  const double s = p.s;
  check_admissible(J, s);
  const double j0 = m.j0;
  const double FF = p.F.squaredNorm() + 1.0;  // F33 = 1
  const double mech =
      m.gamma / (2.0 * j0) * (std::cbrt(j0 * j0) * FF - 3.0 - 2.0 * std::log(J * j0));
  const double chem = m.alpha / j0 * (s * std::log(s / (1.0 + s)) + m.chi * s / (1.0 + s));
  const double g = J * j0 - 1.0 - s;
  const double pen = m.epsilon / (2.0 * j0) * g * g;
  const double psi = mech + chem + pen;
  if (!std::isfinite(psi)) throw DomainError("free energy is not finite");
  return psi;
}

MaterialResponse evaluate_material(const Mat2& F, double s, const MaterialParams& m) {
  const double J = F.determinant();
  check_admissible(J, s);
  const double j0 = m.j0;
  const double j023 = std::cbrt(j0 * j0);
  const Mat2 Finv = F.inverse();
  const Mat2 FinvT = Finv.transpose();
  const double g = J * j0 - 1.0 - s;
  const double s1 = 1.0 + s;

  MaterialResponse r;
  const double FF = F.squaredNorm() + 1.0;
  r.psi = m.gamma / (2.0 * j0) * (j023 * FF - 3.0 - 2.0 * std::log(J * j0)) +
          m.alpha / j0 * (s * std::log(s / s1) + m.chi * s / s1) +
          m.epsilon / (2.0 * j0) * g * g;

  r.stress.P = m.gamma / j0 * (j023 * F - FinvT) + m.epsilon * g * J * FinvT;
  r.stress.P33 = m.gamma / j0 * (j023 - 1.0) + m.epsilon * g * J;
  r.stress.mu = m.alpha / j0 * (std::log(s / s1) + 1.0 / s1 + m.chi / (s1 * s1)) -
                m.epsilon / j0 * g;

  const double gprime = m.epsilon * (2.0 * J * j0 - 1.0 - s) * J;
  const double gJ = m.epsilon * g * J;
  Tensor4& A = r.tangent.A;
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a)
      for (int j = 0; j < 2; ++j)
        for (int b = 0; b < 2; ++b) {
          const double dij_dab = (i == j && a == b) ? 1.0 : 0.0;
          const double cross = Finv(a, j) * Finv(b, i);
          A(flat(i, a), flat(j, b)) = m.gamma / j0 * (j023 * dij_dab + cross) +
                                      gprime * FinvT(i, a) * FinvT(j, b) - gJ * cross;
        }
  r.tangent.B = -m.epsilon * J * FinvT;
  r.tangent.c = m.alpha / j0 * (1.0 / (s * s1 * s1) - 2.0 * m.chi / (s1 * s1 * s1)) + m.epsilon / j0;

  if (!std::isfinite(r.psi) || !std::isfinite(r.stress.mu))
    throw DomainError("material response is not finite");
  return r;
}

StressResponse stress_chem_potential(const ConstitutivePoint& p, const MaterialParams& m) {
  return evaluate_material(p.F, p.s, m).stress;
}

TangentModuli tangent_moduli(const ConstitutivePoint& p, const MaterialParams& m) {
  return evaluate_material(p.F, p.s, m).tangent;
}

DissipationResponse dissipation(const Vec2& H, const ConstitutivePoint& p, const MaterialParams& m) {
  if (!(p.s_prev > 0.0)) {
    std::ostringstream os;
    os << "history corrupted: previous solvent content s_n = " << p.s_prev << " <= 0";
    throw DomainError(os.str());
  }
  const double sn = std::max(p.s_prev, kHistorySolventFloor);
  const double k = 1.0 / (std::cbrt(m.j0) * m.mobility * sn);
  DissipationResponse d;
  d.d2Phi_dH2 = k * p.C_prev;
  d.dPhi_dH = d.d2Phi_dH2 * H;
  d.value = 0.5 * H.dot(d.dPhi_dH);
  return d;
}

InitialState initial_state(const MaterialParams& m) {
  if (!(m.j0 > 1.0)) {
    std::ostringstream os;
    os << "j0 = " << m.j0 << " is not allowed: use a pre-swollen reference with j0 > 1";
    throw ConfigError(os.str());
  }
  const double j0 = m.j0;
  InitialState st;
  st.s0 = m.gamma / m.epsilon * (1.0 / std::cbrt(j0) - 1.0 / j0) + j0 - 1.0;
  const double s1 = 1.0 + st.s0;
  st.mu0 = -m.epsilon / j0 * (j0 - 1.0 - st.s0) +
           m.alpha / j0 * (std::log(st.s0 / s1) + 1.0 / s1 + m.chi / (s1 * s1));
  if (!std::isfinite(st.mu0) || !(st.s0 > 0))
    throw ConfigError("pre-swollen reference state is not admissible for these parameters");
  return st;
}

}  // namespace hydrogel
