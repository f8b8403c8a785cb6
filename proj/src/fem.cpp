#include "hydrogel/fem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <exception>
#include <mutex>
#include <sstream>

#include "hydrogel/errors.hpp"
#include "hydrogel/shape.hpp"

namespace hydrogel {

DofMap::DofMap(const UnitCellMesh& mesh) : num_nodes(mesh.num_nodes()), num_edges(mesh.num_edges()) {
  for (int n = 0; n < num_nodes; ++n)
    for (int i = 0; i < 2; ++i)
      ((mesh.node_tags[n] & kTagExternal) ? boundary : interior).push_back(disp(n, i));
  for (int e = 0; e < num_edges; ++e) ((mesh.edge_tags[e] & kTagExternal) ? boundary : interior).push_back(flux(e));
  std::sort(interior.begin(), interior.end());
  std::sort(boundary.begin(), boundary.end());
}

Model Model::build(std::shared_ptr<const UnitCellMesh> mesh, const MaterialParams& matrix,
                   const MaterialParams& coating) {
  matrix.validate();
  coating.validate();
  Model model;
  model.materials = {matrix, coating};
  model.dofs = DofMap(*mesh);
  const auto rule = shape::gauss3x3();
  const int ne = mesh->num_elements();
  model.geometry.resize(ne);
  model.element_dofs.resize(ne);
  model.element_signs.resize(ne);
  model.boundary_edge_sign.assign(mesh->num_edges(), 0);
  for (int e = 0; e < ne; ++e) {
    const auto& el = mesh->elements[e];
    for (int a = 0; a < 9; ++a)
      for (int i = 0; i < 2; ++i) {
        model.element_dofs[e][2 * a + i] = model.dofs.disp(el.nodes[a], i);
        model.element_signs[e][2 * a + i] = 1;
      }
    for (int k = 0; k < 4; ++k) {
      model.element_dofs[e][18 + k] = model.dofs.flux(el.edges[k]);
      model.element_signs[e][18 + k] = el.edge_sign[k];
      if (mesh->edge_tags[el.edges[k]] != kTagNone) model.boundary_edge_sign[el.edges[k]] = el.edge_sign[k];
    }
    for (int q = 0; q < kQuadPoints; ++q) {
      const auto sv = shape::q9(rule[q].xi, rule[q].eta);
      Mat2 J = Mat2::Zero();
      Vec2 X = Vec2::Zero();
      for (int a = 0; a < 9; ++a) {
        J += mesh->nodes[el.nodes[a]] * sv.dN[a].transpose();
        X += sv.N[a] * mesh->nodes[el.nodes[a]];
      }
      const double j = J.determinant();
      if (!(j > 0)) {
        std::ostringstream os;
        os << "element " << e << " is inverted: Jacobian " << j << " at quadrature point " << q;
        throw MeshError(os.str());
      }
      const Mat2 JinvT = J.inverse().transpose();
      auto& g = model.geometry[e].qp[q];
      g.wj = rule[q].weight * j;
      g.div_unit = shape::kRt0Divergence / j;
      g.X = X;
      for (int a = 0; a < 9; ++a) {
        g.N[a] = sv.N[a];
        g.dN[a] = JinvT * sv.dN[a];
      }
      const auto rt = shape::rt0(rule[q].xi, rule[q].eta);
      for (int k = 0; k < 4; ++k) g.Bh[k] = J * rt[k] / j;
    }
  }
  model.mesh = std::move(mesh);
  return model;
}

const MaterialParams& Model::void_material() const {
  for (int e = 0; e < mesh->num_elements(); ++e)
    for (int k = 0; k < 4; ++k)
      if (mesh->edge_tags[mesh->elements[e].edges[k]] & kTagVoid) return material(e);
  return materials[0];
}

ElementVector gather(const Model& model, int element, const Eigen::VectorXd& d) {
  ElementVector de;
  const auto& dofs = model.element_dofs[element];
  const auto& signs = model.element_signs[element];
  for (int l = 0; l < kElementDofs; ++l) de[l] = signs[l] * d[dofs[l]];
  return de;
}

namespace {

struct QpLocal {
  Mat2 F;
  Vec2 H;
  double divH;
};

QpLocal local_fields(const QuadratureGeometry& g, const ElementVector& de) {
  QpLocal out;
  out.F = Mat2::Identity();
  for (int a = 0; a < 9; ++a) out.F += Vec2(de[2 * a], de[2 * a + 1]) * g.dN[a].transpose();
  out.H = Vec2::Zero();
  double qsum = 0.0;
  for (int k = 0; k < 4; ++k) {
    out.H += de[18 + k] * g.Bh[k];
    qsum += de[18 + k];
  }
  out.divH = g.div_unit * qsum;
  return out;
}

[[noreturn]] void reject(int element, int q, const std::string& why) {
  std::ostringstream os;
  os << "element " << element << ", quadrature point " << q << ": " << why;
  throw StepRejected(os.str());
}

}  // namespace

void element_kernel(const ElementGeometry& geo, const QpHistory* history, const MaterialParams& m,
                    const ElementVector& de, double tau, bool want_tangent, ElementResult& out, int element_id) {
  out.energy = 0.0;
  out.r.setZero();
  if (want_tangent) out.K.setZero();
  const double diss_scale = 1.0 / (std::cbrt(m.j0) * m.mobility);
  for (int q = 0; q < kQuadPoints; ++q) {
    const auto& g = geo.qp[q];
    const auto& h = history[q];
    const QpLocal f = local_fields(g, de);
    const double s = h.s - tau * f.divH;
    if (!(s >= kSolventFloor)) reject(element_id, q, "solvent content below floor (s = " + std::to_string(s) + ")");
    MaterialResponse mr;
    try {
      mr = evaluate_material(f.F, s, m);
    } catch (const DomainError& e) {
      reject(element_id, q, e.what());
    }
    const Mat2 D = diss_scale / std::max(h.s, kHistorySolventFloor) * h.C;
    const Vec2 DH = D * f.H;
    const double gk = -tau * g.div_unit;  // ds/dq for every local flux dof
    const double wj = g.wj;
    out.energy += wj * (mr.psi + 0.5 * tau * f.H.dot(DH));

    const Mat2& P = mr.stress.P;
    for (int a = 0; a < 9; ++a) {
      const Vec2 t = P * g.dN[a];
      out.r[2 * a] += wj * t[0];
      out.r[2 * a + 1] += wj * t[1];
    }
    for (int k = 0; k < 4; ++k) out.r[18 + k] += wj * (mr.stress.mu * gk + tau * DH.dot(g.Bh[k]));

    if (!want_tangent) continue;
    Eigen::Matrix<double, 4, 18> B = Eigen::Matrix<double, 4, 18>::Zero();
    for (int a = 0; a < 9; ++a)
      for (int i = 0; i < 2; ++i)
        for (int A = 0; A < 2; ++A) B(flat(i, A), 2 * a + i) = g.dN[a][A];
    const Eigen::Matrix<double, 4, 18> AB = mr.tangent.A * B;
    out.K.topLeftCorner<18, 18>().noalias() += wj * B.transpose() * AB;
    Eigen::Matrix<double, 4, 1> bvec;
    for (int i = 0; i < 2; ++i)
      for (int A = 0; A < 2; ++A) bvec[flat(i, A)] = mr.tangent.B(i, A);
    const Eigen::Matrix<double, 18, 1> kuq = wj * gk * (B.transpose() * bvec);
    for (int k = 0; k < 4; ++k) {
      out.K.block<18, 1>(0, 18 + k) += kuq;
      out.K.block<1, 18>(18 + k, 0) += kuq.transpose();
      for (int l = 0; l < 4; ++l)
        out.K(18 + k, 18 + l) += wj * (mr.tangent.c * gk * gk + tau * g.Bh[k].dot(D * g.Bh[l]));
    }
  }
}

void evaluate_elements(const Model& model, const Eigen::VectorXd& d, const History& history, double tau,
                       bool want_tangent, std::vector<ElementResult>& out, Execution exec) {
  const int ne = model.num_elements();
  out.resize(ne);
  if (exec == Execution::kSerial) {
    for (int e = 0; e < ne; ++e)
      element_kernel(model.geometry[e], &history[e * kQuadPoints], model.material(e), gather(model, e, d), tau,
                     want_tangent, out[e], e);
    return;
  }
  std::exception_ptr failure;
  int failed_element = ne;
  std::mutex guard;
#pragma omp parallel for schedule(static)
  for (int e = 0; e < ne; ++e) {
    try {
      element_kernel(model.geometry[e], &history[e * kQuadPoints], model.material(e), gather(model, e, d), tau,
                     want_tangent, out[e], e);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (e < failed_element) {
        failed_element = e;
        failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

Eigen::VectorXd void_load(const Model& model, double tau, double mu_applied) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(model.dofs.size());
  const auto& mesh = *model.mesh;
  for (int e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge_tags[e] & kTagVoid) f[model.dofs.flux(e)] = tau * mu_applied * model.boundary_edge_sign[e];
  return f;
}

Eigen::VectorXd assemble_residual(const Model& model, const std::vector<ElementResult>& elements) {
  Eigen::VectorXd R = Eigen::VectorXd::Zero(model.dofs.size());
  for (int e = 0; e < model.num_elements(); ++e) {
    const auto& dofs = model.element_dofs[e];
    const auto& signs = model.element_signs[e];
    for (int l = 0; l < kElementDofs; ++l) R[dofs[l]] += signs[l] * elements[e].r[l];
  }
  return R;
}

double incremental_potential(const Model& model, const std::vector<ElementResult>& elements,
                             const Eigen::VectorXd& load, const Eigen::VectorXd& d) {
  double total = 0.0;
  for (int e = 0; e < model.num_elements(); ++e) total += elements[e].energy;
  return total + load.dot(d);
}

History initial_history(const Model& model) {
  History h(static_cast<std::size_t>(model.num_elements()) * kQuadPoints);
  for (int e = 0; e < model.num_elements(); ++e) {
    const double s0 = initial_state(model.material(e)).s0;
    for (int q = 0; q < kQuadPoints; ++q) h[e * kQuadPoints + q].s = s0;
  }
  return h;
}

QpState qp_state(const Model& model, int element, int q, const Eigen::VectorXd& d, const History& history,
                 double tau) {
  const QpLocal f = local_fields(model.geometry[element].qp[q], gather(model, element, d));
  return {f.F, history[element * kQuadPoints + q].s - tau * f.divH, f.H};
}

History advance_history(const Model& model, const Eigen::VectorXd& d, const History& history, double tau) {
  History next(history.size());
  for (int e = 0; e < model.num_elements(); ++e) {
    const ElementVector de = gather(model, e, d);
    for (int q = 0; q < kQuadPoints; ++q) {
      const QpLocal f = local_fields(model.geometry[e].qp[q], de);
      auto& h = next[e * kQuadPoints + q];
      h.s = history[e * kQuadPoints + q].s - tau * f.divH;
      h.F = f.F;
      h.C = f.F.transpose() * f.F;
    }
  }
  return next;
}

SolventBalance solvent_balance_audit(const Model& model, const Eigen::VectorXd& d, const History& current,
                                     const History& previous, double tau) {
  SolventBalance b;
  for (int e = 0; e < model.num_elements(); ++e)
    for (int q = 0; q < kQuadPoints; ++q) {
      const std::size_t i = static_cast<std::size_t>(e) * kQuadPoints + q;
      b.delta_s_total += model.geometry[e].qp[q].wj * (current[i].s - previous[i].s);
    }
  const auto& mesh = *model.mesh;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    if (mesh.edge_tags[e] == kTagNone) continue;
    const double influx = -tau * model.boundary_edge_sign[e] * d[model.dofs.flux(e)];
    if (mesh.edge_tags[e] & kTagVoid) b.void_influx += influx;
    else b.external_influx += influx;
  }
  b.boundary_influx = b.void_influx + b.external_influx;
  return b;
}

Eigen::VectorXd nodal_chemical_potential(const Model& model, const Eigen::VectorXd& d, const History& current) {
  const int nn = model.mesh->num_nodes();
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nn);
  for (int e = 0; e < model.num_elements(); ++e) {
    const auto& el = model.mesh->elements[e];
    const ElementVector de = gather(model, e, d);
    for (int q = 0; q < kQuadPoints; ++q) {
      const auto& g = model.geometry[e].qp[q];
      const QpLocal f = local_fields(g, de);
      const double mu = evaluate_material(f.F, current[e * kQuadPoints + q].s, model.material(e)).stress.mu;
      for (int a = 0; a < 9; ++a) {
        rhs[el.nodes[a]] += g.wj * g.N[a] * mu;
        for (int b = 0; b < 9; ++b) trip.emplace_back(el.nodes[a], el.nodes[b], g.wj * g.N[a] * g.N[b]);
      }
    }
  }
  Eigen::SparseMatrix<double> M(nn, nn);
  M.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(M);
  if (solver.info() != Eigen::Success) throw SolverError("mass matrix factorization failed in nodal projection");
  return solver.solve(rhs);
}

}  // namespace hydrogel
