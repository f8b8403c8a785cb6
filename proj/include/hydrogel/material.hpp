#pragma once

#include <Eigen/Dense>

namespace hydrogel {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

/// Fourth-order 2D tensor A_{iAjB} stored as a 4x4 matrix indexed by
/// flat(i, A) = 2 i + A, i.e. the row-major flattening of a 2x2 tensor.
using Tensor4 = Eigen::Matrix4d;

inline constexpr int flat(int i, int a) { return 2 * i + a; }

/// Constitutive constants of one hydrogel phase. Units: N, mm, s.
struct MaterialParams {
  double gamma = 0.01;     ///< shear modulus
  double alpha = 20.0;     ///< mixing modulus
  double chi = 0.1;        ///< Flory-Huggins interaction parameter
  double mobility = 1e-4;  ///< M [mm^4/(N s)]
  double epsilon = 0.1;    ///< penalty modulus, 10 gamma by default
  double j0 = 1.01;        ///< Jacobian of the pre-swollen reference state

  /// Reference hydrogel used throughout the 2D studies.
  static MaterialParams reference();

  /// Throws ConfigError when a positivity bound is violated or j0 <= 1.
  void validate() const;
};

/// State at one material point. F is the in-plane block of a plane-strain
/// deformation gradient (F33 = 1); s_prev and C_prev are the history of the
/// last converged step and only enter the dissipation.
struct ConstitutivePoint {
  Mat2 F = Mat2::Identity();
  double s = 0.0;
  double s_prev = 0.0;
  Mat2 C_prev = Mat2::Identity();
};

struct StressResponse {
  Mat2 P;        ///< in-plane first Piola-Kirchhoff stress
  double mu;     ///< chemical potential
  double P33;    ///< out-of-plane stress, reported but never assembled
};

struct TangentModuli {
  Tensor4 A;  ///< d2psi/dF dF
  Mat2 B;     ///< d2psi/dF ds
  double c;   ///< d2psi/ds2
};

struct DissipationResponse {
  double value;
  Vec2 dPhi_dH;
  Mat2 d2Phi_dH2;
};

/// Everything the element kernel needs at one quadrature point.
struct MaterialResponse {
  double psi;
  StressResponse stress;
  TangentModuli tangent;
};

/// Floor applied to the previous solvent content inside the dissipation only.
inline constexpr double kHistorySolventFloor = 1e-8;

double free_energy(const ConstitutivePoint& p, const MaterialParams& m);
StressResponse stress_chem_potential(const ConstitutivePoint& p, const MaterialParams& m);
TangentModuli tangent_moduli(const ConstitutivePoint& p, const MaterialParams& m);

/// Energy, first and second derivatives in one pass.
MaterialResponse evaluate_material(const Mat2& F, double s, const MaterialParams& m);

/// Fickian dissipation potential of the flux H, evaluated with the history
/// (s_prev, C_prev) of p. The value is not multiplied by the time step.
DissipationResponse dissipation(const Vec2& H, const ConstitutivePoint& p, const MaterialParams& m);

struct InitialState {
  double s0;   ///< stress-free solvent content of the pre-swollen reference
  double mu0;  ///< chemical potential at that state
};

/// Throws ConfigError for j0 <= 1, where the chemical term is singular.
InitialState initial_state(const MaterialParams& m);

}  // namespace hydrogel
