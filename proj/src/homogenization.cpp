#include "hydrogel/homogenization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hydrogel/errors.hpp"
#include "hydrogel/linalg.hpp"

namespace hydrogel {

PeriodicStructure::PeriodicStructure(const Model& model) {
  const auto& mesh = *model.mesh;
  const auto& dofs = model.dofs;
  corner_master = mesh.pairs.corner_master;
  for (const auto& l : mesh.pairs.nodes)
    for (int i = 0; i < 2; ++i) {
      DofLink d;
      d.follower = dofs.disp(l.follower, i);
      d.master = dofs.disp(l.master, i);
      d.shift = l.shift;
      d.flux = false;
      d.comp = i;
      links.push_back(d);
    }
  for (const auto& l : mesh.pairs.edges) {
    DofLink d;
    d.follower = dofs.flux(l.follower);
    d.master = dofs.flux(l.master);
    d.shift = l.shift;
    d.flux = true;
    d.outward_follower = model.boundary_edge_sign[l.follower];
    d.outward_master = model.boundary_edge_sign[l.master];
    d.rho = -d.outward_follower * d.outward_master;
    const auto& ed = mesh.edges[l.follower];
    d.edge_length = (mesh.nodes[ed.ends[1]] - mesh.nodes[ed.ends[0]]).norm();
    d.normal_plus = l.shift.normalized();
    links.push_back(d);
  }

  follower_link.assign(dofs.size(), -1);
  std::ostringstream dup;
  for (std::size_t k = 0; k < links.size(); ++k) {
    if (follower_link[links[k].follower] >= 0) dup << " dof " << links[k].follower << " (links " << follower_link[links[k].follower] << ", " << k << ")";
    follower_link[links[k].follower] = static_cast<int>(k);
  }
  for (std::size_t k = 0; k < links.size(); ++k)
    if (follower_link[links[k].master] >= 0) dup << " master dof " << links[k].master << " is itself a follower;";
  if (!dup.str().empty()) throw ConfigError("redundant periodic constraints:" + dup.str());

  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (mesh.node_tags[n] == kTagNone) {
      pinned_node = n;
      break;
    }
  if (pinned_node < 0) throw MeshError("mesh has no interior node to pin against translation");
}

std::vector<int> PeriodicStructure::pinned_dofs(const Model& model) const {
  return {model.dofs.disp(pinned_node, 0), model.dofs.disp(pinned_node, 1)};
}

ConstraintRows build_constraints(const Model& model, const PeriodicStructure& ps, const MacroControl& macro) {
  ConstraintRows out;
  std::vector<Eigen::Triplet<double>> t;
  out.offset.resize(static_cast<Eigen::Index>(ps.links.size()));
  for (std::size_t r = 0; r < ps.links.size(); ++r) {
    const auto& l = ps.links[r];
    t.emplace_back(static_cast<int>(r), l.follower, 1.0);
    t.emplace_back(static_cast<int>(r), l.master, -l.rho);
    if (l.flux)
      out.offset[r] = l.outward_follower * 0.5 * macro.macro_div_flux * l.normal_plus.dot(l.shift) * l.edge_length;
    else
      out.offset[r] = ((macro.Fbar - Mat2::Identity()) * l.shift)[l.comp];
  }
  out.C.resize(static_cast<Eigen::Index>(ps.links.size()), model.dofs.size());
  out.C.setFromTriplets(t.begin(), t.end());
  return out;
}

namespace {

template <class Scalar, class Coef>
DofReduction<Scalar> reduction_with(const Model& model, const PeriodicStructure& ps, bool pin, Coef coef) {
  const int n = model.dofs.size();
  DofReduction<Scalar> r;
  r.index.assign(n, -1);
  r.coef.assign(n, Scalar(1));
  std::vector<char> fixed(n, 0);
  if (pin)
    for (int g : ps.pinned_dofs(model)) fixed[g] = 1;
  for (int g = 0; g < n; ++g)
    if (ps.follower_link[g] < 0 && !fixed[g]) r.index[g] = r.size++;
  for (const auto& l : ps.links) {
    r.index[l.follower] = r.index[l.master];
    r.coef[l.follower] = coef(l);
  }
  return r;
}

}  // namespace

DofReduction<double> periodic_reduction(const Model& model, const PeriodicStructure& ps, bool pin) {
  return reduction_with<double>(model, ps, pin, [](const DofLink& l) { return l.rho; });
}

DofReduction<cdouble> bloch_reduction(const Model& model, const PeriodicStructure& ps, const Vec2& k, bool pin) {
  if (k.x() < 0 || k.y() < 0 || k.x() > M_PI + 1e-12 || k.y() > M_PI + 1e-12) {
    std::ostringstream os;
    os << "wave vector (" << k.x() << ", " << k.y() << ") outside [0, pi]^2";
    throw DomainError(os.str());
  }
  const Vec2 ext = model.mesh->extent;
  return reduction_with<cdouble>(model, ps, pin, [&](const DofLink& l) {
    const double phase = k.x() * l.shift.x() / ext.x() + k.y() * l.shift.y() / ext.y();
    return l.rho * std::polar(1.0, phase);
  });
}

void apply_macro(const Model&, const PeriodicStructure& ps, const MacroControl& macro, Eigen::VectorXd& d) {
  const Mat2 G = macro.Fbar - Mat2::Identity();
  for (const auto& l : ps.links) {
    if (l.flux)
      d[l.follower] = l.rho * d[l.master] +
                      l.outward_follower * 0.5 * macro.macro_div_flux * l.normal_plus.dot(l.shift) * l.edge_length;
    else
      d[l.follower] = d[l.master] + (G * l.shift)[l.comp];
  }
}

EffectiveResponse effective_stress_and_mu(const Model& model, const PeriodicStructure& ps,
                                          const Eigen::VectorXd& residual, double tau) {
  if (residual.size() != model.dofs.size()) throw Error("effective_stress_and_mu needs the full residual vector");
  EffectiveResponse out;
  const double vol = model.mesh->cell_volume();
  for (const auto& l : ps.links) {
    if (l.flux) {
      const double lambda_mu = -l.outward_follower * residual[l.follower] / tau;
      out.mu += lambda_mu * l.normal_plus.dot(l.shift) * l.edge_length;
    } else {
      for (int A = 0; A < 2; ++A) out.P(l.comp, A) += residual[l.follower] * l.shift[A];
    }
  }
  out.P /= vol;
  out.mu /= 2.0 * vol;
  return out;
}

Mat2 volume_average_stress(const Model& model, const Eigen::VectorXd& d, const History& history, double tau) {
  Mat2 sum = Mat2::Zero();
  for (int e = 0; e < model.num_elements(); ++e)
    for (int q = 0; q < kQuadPoints; ++q) {
      const auto st = qp_state(model, e, q, d, history, tau);
      sum += model.geometry[e].qp[q].wj * evaluate_material(st.F, st.s, model.material(e)).stress.P;
    }
  return sum / model.mesh->cell_volume();
}

ProjectionOperators build_projection_operators(const Model& model, const PeriodicStructure& ps) {
  ProjectionOperators ops;
  ops.boundary_dofs = model.dofs.boundary;
  ops.cell_volume = model.mesh->cell_volume();
  std::vector<int> col(model.dofs.size(), -1);
  for (std::size_t c = 0; c < ops.boundary_dofs.size(); ++c) col[ops.boundary_dofs[c]] = static_cast<int>(c);

  std::vector<int> order;
  for (std::size_t k = 0; k < ps.links.size(); ++k)
    if (!ps.links[k].flux) order.push_back(static_cast<int>(k));
  for (std::size_t k = 0; k < ps.links.size(); ++k)
    if (ps.links[k].flux) order.push_back(static_cast<int>(k));
  const int nj = static_cast<int>(order.size());
  std::vector<Eigen::Triplet<double>> t;
  ops.Q = Eigen::MatrixXd::Zero(5, nj);
  for (int r = 0; r < nj; ++r) {
    const auto& l = ps.links[order[r]];
    if (col[l.follower] < 0 || col[l.master] < 0) throw MeshError("periodic link touches a non-boundary dof");
    if (l.flux) {
      t.emplace_back(r, col[l.follower], l.outward_follower);
      t.emplace_back(r, col[l.master], l.outward_master);
      ops.Q(4, r) = 0.5 * l.normal_plus.dot(l.shift) * l.edge_length;
    } else {
      t.emplace_back(r, col[l.follower], 1.0);
      t.emplace_back(r, col[l.master], -1.0);
      for (int A = 0; A < 2; ++A) ops.Q(flat(l.comp, A), r) = l.shift[A];
    }
  }
  ops.P.resize(nj, static_cast<Eigen::Index>(ops.boundary_dofs.size()));
  ops.P.setFromTriplets(t.begin(), t.end());
  ops.jump_link = order;
  ops.L = Eigen::MatrixXd::Zero(4, 5);
  ops.L.leftCols(4).setIdentity();
  return ops;
}

BoundarySchur boundary_schur(const Model& model, const Eigen::SparseMatrix<double>& K) {
  const auto& in = model.dofs.interior;
  const auto& bd = model.dofs.boundary;
  const int n = model.dofs.size();
  std::vector<int> where(n), local(n);
  for (std::size_t k = 0; k < in.size(); ++k) {
    where[in[k]] = 0;
    local[in[k]] = static_cast<int>(k);
  }
  for (std::size_t k = 0; k < bd.size(); ++k) {
    where[bd[k]] = 1;
    local[bd[k]] = static_cast<int>(k);
  }
  std::vector<Eigen::Triplet<double>> tii, tib;
  const int nb = static_cast<int>(bd.size());
  BoundarySchur out;
  out.boundary_dofs = bd;
  out.S = Eigen::MatrixXd::Zero(nb, nb);
  for (int c = 0; c < K.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, c); it; ++it) {
      const int r = static_cast<int>(it.row());
      if (where[r] == 0 && where[c] == 0) tii.emplace_back(local[r], local[c], it.value());
      else if (where[r] == 0 && where[c] == 1) tib.emplace_back(local[r], local[c], it.value());
      else if (where[r] == 1 && where[c] == 1) out.S(local[r], local[c]) += it.value();
    }
  Eigen::SparseMatrix<double> Kii(static_cast<Eigen::Index>(in.size()), static_cast<Eigen::Index>(in.size()));
  Eigen::SparseMatrix<double> Kib(static_cast<Eigen::Index>(in.size()), nb);
  Kii.setFromTriplets(tii.begin(), tii.end());
  Kib.setFromTriplets(tib.begin(), tib.end());
  SparseFactor<double> fac;
  if (!fac.factor(Kii)) throw SolverError("interior block of the tangent is singular");
  out.interior_positive_definite = fac.positive_definite();
  const Eigen::SparseMatrix<double> Kbi = Kib.transpose();
  constexpr int kBlock = 64;
  for (int c0 = 0; c0 < nb; c0 += kBlock) {
    const int w = std::min(kBlock, nb - c0);
    const Eigen::MatrixXd rhs = Eigen::MatrixXd(Kib.middleCols(c0, w));
    const Eigen::MatrixXd X = fac.solve(rhs);
    out.S.middleCols(c0, w) -= Kbi * X;
  }
  out.S = 0.5 * (out.S + out.S.transpose()).eval();
  return out;
}

EffectiveModuli effective_moduli(const BoundarySchur& schur, const ProjectionOperators& ops,
                                 const PeriodicStructure& ps, const Model& model) {
  // Minimizes the boundary energy under prescribed jumps with d_b = E j + Z a:
  // E puts each jump on its follower, Z spans the periodic boundary fields
  // (masters with their followers, corner master fixed). This equals
  // [P S^-1 P^T]^-1 whenever S is invertible and stays defined when S is
  // singular for non-periodic modes such as rotations of a stress-free cell.
  const int nb = static_cast<int>(schur.boundary_dofs.size());
  const int nj = static_cast<int>(ops.jump_link.size());
  std::vector<int> col(model.dofs.size(), -1);
  for (int c = 0; c < nb; ++c) col[schur.boundary_dofs[c]] = c;
  std::vector<int> zcol(nb, -1);
  int nz = 0;
  const int corner0 = model.dofs.disp(ps.corner_master, 0), corner1 = model.dofs.disp(ps.corner_master, 1);
  for (int c = 0; c < nb; ++c) {
    const int g = schur.boundary_dofs[c];
    if (ps.follower_link[g] < 0 && g != corner0 && g != corner1) zcol[c] = nz++;
  }
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(nb, nz);
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(nb, nj);
  for (int c = 0; c < nb; ++c)
    if (zcol[c] >= 0) Z(c, zcol[c]) = 1.0;
  for (const auto& l : ps.links)
    if (zcol[col[l.master]] >= 0) Z(col[l.follower], zcol[col[l.master]]) = l.rho;
  for (int r = 0; r < nj; ++r) {
    const auto& l = ps.links[ops.jump_link[r]];
    E(col[l.follower], r) = l.flux ? l.outward_follower : 1.0;
  }
  const Eigen::MatrixXd SZ = schur.S * Z;
  const Eigen::MatrixXd SE = schur.S * E;
  Eigen::MatrixXd Kzz = Z.transpose() * SZ;
  Kzz = 0.5 * (Kzz + Kzz.transpose()).eval();
  const Eigen::MatrixXd Kze = Z.transpose() * SE;
  Eigen::LDLT<Eigen::MatrixXd> fac(Kzz);
  EffectiveModuli out;
  out.rcond = fac.rcond();
  Eigen::MatrixXd M = E.transpose() * SE - Kze.transpose() * fac.solve(Kze);
  M = 0.5 * (M + M.transpose()).eval();
  const Eigen::MatrixXd LQ = ops.L * ops.Q;
  out.A = LQ * M * LQ.transpose() / ops.cell_volume;
  out.A = 0.5 * (out.A + out.A.transpose()).eval();
  if (!(out.rcond > 1e-13)) {
    out.near_singular = true;
    std::ostringstream os;
    os << "effective moduli: periodic boundary operator near singular (rcond " << out.rcond << ")";
    out.warning = os.str();
  }
  return out;
}

Tensor4 condensed_point_moduli(const Mat2& F, double s, const MaterialParams& m) {
  const auto r = evaluate_material(F, s, m);
  Eigen::Vector4d b;
  for (int i = 0; i < 2; ++i)
    for (int A = 0; A < 2; ++A) b[flat(i, A)] = r.tangent.B(i, A);
  return r.tangent.A - b * b.transpose() / r.tangent.c;
}

}  // namespace hydrogel
