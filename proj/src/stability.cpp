#include "hydrogel/stability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hydrogel/errors.hpp"

namespace hydrogel {

Mat2 acoustic_tensor(const Tensor4& A, const Vec2& N) {
  Mat2 Q = Mat2::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int I = 0; I < 2; ++I)
        for (int J = 0; J < 2; ++J) Q(a, b) += A(flat(a, I), flat(b, J)) * N[I] * N[J];
  return Q;
}

namespace {

double min_eig2(const Mat2& Q) {
  const double m = 0.5 * (Q(0, 0) + Q(1, 1));
  const double d = std::hypot(0.5 * (Q(0, 0) - Q(1, 1)), 0.5 * (Q(0, 1) + Q(1, 0)));
  return m - d;
}

double ellipticity_at(const Tensor4& A, double theta) {
  return min_eig2(acoustic_tensor(A, Vec2(std::cos(theta), std::sin(theta))));
}

}  // namespace

EllipticityResult strong_ellipticity(const Tensor4& A) {
  if ((A - A.transpose()).norm() > 1e-8 * std::max(A.norm(), 1e-300)) {
    std::ostringstream os;
    os << "effective moduli lack major symmetry (asymmetry " << (A - A.transpose()).norm() / A.norm() << ")";
    throw DomainError(os.str());
  }
  const double step = M_PI / 180.0;
  int best = 0;
  double best_val = ellipticity_at(A, 0.0);
  for (int i = 1; i < 180; ++i) {
    const double v = ellipticity_at(A, i * step);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  // golden section on [theta - 1 deg, theta + 1 deg]
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = (best - 1) * step, b = (best + 1) * step;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = ellipticity_at(A, c), fd = ellipticity_at(A, d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = ellipticity_at(A, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = ellipticity_at(A, d);
    }
  }
  double theta = 0.5 * (a + b);
  double val = ellipticity_at(A, theta);
  if (best_val < val) {
    val = best_val;
    theta = best * step;
  }
  theta = std::fmod(theta + M_PI, M_PI);
  EllipticityResult out;
  out.lambda_bar = val;
  out.theta = theta;
  out.N = Vec2(std::cos(theta), std::sin(theta));
  Eigen::SelfAdjointEigenSolver<Mat2> es(acoustic_tensor(A, out.N));
  out.n = es.eigenvectors().col(0);
  return out;
}

BlochAnalyzer::BlochAnalyzer(std::shared_ptr<const Model> model, const PeriodicStructure& ps)
    : model_(std::move(model)), ps_(&ps) {
  const auto& bd = model_->dofs.boundary;
  boundary_col_.assign(model_->dofs.size(), -1);
  for (std::size_t c = 0; c < bd.size(); ++c) boundary_col_[bd[c]] = static_cast<int>(c);
  master_index_.assign(bd.size(), -1);
  follower_link_.assign(bd.size(), -1);
  for (std::size_t c = 0; c < bd.size(); ++c)
    if (ps.follower_link[bd[c]] < 0) {
      master_index_[c] = static_cast<int>(master_cols_.size());
      master_cols_.push_back(static_cast<int>(c));
    }
  for (std::size_t c = 0; c < bd.size(); ++c) {
    const int l = ps.follower_link[bd[c]];
    if (l < 0) continue;
    follower_link_[c] = l;
    master_index_[c] = master_index_[boundary_col_[ps.links[l].master]];
  }
}

DofReduction<cdouble> BlochAnalyzer::reduction(const Vec2& k, bool pin) const {
  return bloch_reduction(*model_, *ps_, k, pin);
}

Eigen::SparseMatrix<cdouble> BlochAnalyzer::bloch_operator(const std::vector<ElementResult>& elements, const Vec2& k,
                                                           bool pin) const {
  const auto red = reduction(k, pin);
  Eigen::SparseMatrix<cdouble> K;
  if (pin) {
    ReducedAssembler<cdouble>(*model_, red).assemble(elements, K);
    return K;
  }
  if (!assembler_) assembler_ = std::make_unique<ReducedAssembler<cdouble>>(*model_, red);
  else assembler_->set_coefficients(red);
  assembler_->assemble(elements, K);
  return K;
}

Eigen::MatrixXcd BlochAnalyzer::condensed_operator(const BoundarySchur& schur, const Vec2& k) const {
  const int nb = static_cast<int>(schur.boundary_dofs.size());
  const int nm = static_cast<int>(master_cols_.size());
  const Vec2 ext = model_->mesh->extent;
  std::vector<cdouble> coef(nb, cdouble(1.0));
  for (int c = 0; c < nb; ++c) {
    const int l = follower_link_[c];
    if (l < 0) continue;
    const auto& link = ps_->links[l];
    const double phase = k.x() * link.shift.x() / ext.x() + k.y() * link.shift.y() / ext.y();
    coef[c] = link.rho * std::polar(1.0, phase);
  }
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(nm, nm);
  for (int b = 0; b < nb; ++b) {
    const int mb = master_index_[b];
    const cdouble cb = coef[b];
    for (int a = 0; a < nb; ++a) out(master_index_[a], mb) += std::conj(coef[a]) * schur.S(a, b) * cb;
  }
  return 0.5 * (out + out.adjoint());
}

BlochAnalyzer::CondensedBasis BlochAnalyzer::condensed_basis(const BoundarySchur& schur) const {
  const int nb = static_cast<int>(schur.boundary_dofs.size());
  const int nm = static_cast<int>(master_cols_.size());
  const Vec2 ext = model_->mesh->extent;
  CondensedBasis basis;
  basis.shifts.push_back(Vec2::Zero());
  std::vector<int> cls(nb, 0);
  std::vector<double> rho(nb, 1.0);
  for (int c = 0; c < nb; ++c) {
    const int l = follower_link_[c];
    if (l < 0) continue;
    const auto& link = ps_->links[l];
    const Vec2 sh(std::round(link.shift.x() / ext.x()), std::round(link.shift.y() / ext.y()));
    auto it = std::find(basis.shifts.begin(), basis.shifts.end(), sh);
    cls[c] = static_cast<int>(it - basis.shifts.begin());
    if (it == basis.shifts.end()) basis.shifts.push_back(sh);
    rho[c] = link.rho;
  }
  const int nc = static_cast<int>(basis.shifts.size());
  basis.blocks.assign(nc * nc, Eigen::MatrixXd::Zero(nm, nm));
  for (int b = 0; b < nb; ++b)
    for (int a = 0; a < nb; ++a)
      basis.blocks[cls[a] * nc + cls[b]](master_index_[a], master_index_[b]) += rho[a] * schur.S(a, b) * rho[b];
  return basis;
}

Eigen::MatrixXcd BlochAnalyzer::condensed_operator(const CondensedBasis& basis, const Vec2& k) const {
  const int nc = static_cast<int>(basis.shifts.size());
  const Eigen::Index nm = basis.blocks.front().rows();
  std::vector<cdouble> e(nc);
  for (int p = 0; p < nc; ++p) e[p] = std::polar(1.0, k.dot(basis.shifts[p]));
  Eigen::MatrixXd re = Eigen::MatrixXd::Zero(nm, nm), im = Eigen::MatrixXd::Zero(nm, nm);
  for (int p = 0; p < nc; ++p)
    for (int q = 0; q < nc; ++q) {
      const cdouble w = std::conj(e[p]) * e[q];
      re.noalias() += w.real() * basis.blocks[p * nc + q];
      if (w.imag() != 0.0) im.noalias() += w.imag() * basis.blocks[p * nc + q];
    }
  Eigen::MatrixXcd out(nm, nm);
  out.real() = 0.5 * (re + re.transpose());
  out.imag() = 0.5 * (im - im.transpose());
  return out;
}

double BlochAnalyzer::min_eigenvalue(Eigen::MatrixXcd Sk, const Vec2& k, const std::vector<int>& boundary_dofs) const {
  if (k.norm() == 0.0) {
    const int nm = static_cast<int>(master_cols_.size());
    Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(nm, 2);
    for (int m = 0; m < nm; ++m) {
      const int g = boundary_dofs[master_cols_[m]];
      if (!model_->dofs.is_flux(g)) V(m, g % 2) = 1.0;
    }
    V.col(0).normalize();
    V.col(1).normalize();
    const double lift = 10.0 * (1.0 + Sk.cwiseAbs().rowwise().sum().maxCoeff());
    Sk += lift * V * V.adjoint();
  }
  return dense_min_eigenvalue<cdouble>(Sk);
}

double BlochAnalyzer::condensed_min_eigenvalue(const BoundarySchur& schur, const Vec2& k) const {
  return min_eigenvalue(condensed_operator(schur, k), k, schur.boundary_dofs);
}

double BlochAnalyzer::condensed_min_eigenvalue(const CondensedBasis& basis, const Vec2& k) const {
  return min_eigenvalue(condensed_operator(basis, k), k, model_->dofs.boundary);
}

EigenPairs<cdouble> BlochAnalyzer::exact(const std::vector<ElementResult>& elements, const Vec2& k,
                                         int count) const {
  const auto K = bloch_operator(elements, k, false);
  if (k.norm() != 0.0) return smallest_eigenpairs<cdouble>(K, count);
  const auto red = reduction(k, false);
  MatrixX<cdouble> V = MatrixX<cdouble>::Zero(red.size, 2);
  for (int n = 0; n < model_->dofs.num_nodes; ++n)
    for (int i = 0; i < 2; ++i) {
      const int g = model_->dofs.disp(n, i);
      if (ps_->follower_link[g] < 0) V(red.index[g], i) = 1.0;
    }
  V.col(0).normalize();
  V.col(1).normalize();
  return smallest_eigenpairs<cdouble>(K, count, {}, &V);
}

std::vector<BlochSample> scan_points(const BlochScanConfig& cfg) {
  if (cfg.grid < 2) throw ConfigError("Bloch grid needs at least 2 points per axis");
  std::vector<BlochSample> pts;
  const double h = M_PI / (cfg.grid - 1);
  for (int j = 0; j < cfg.grid; ++j)
    for (int i = 0; i < cfg.grid; ++i) {
      const double k1 = i == cfg.grid - 1 ? M_PI : i * h;
      const double k2 = j == cfg.grid - 1 ? M_PI : j * h;
      pts.push_back({Vec2(k1, k2), 0.0, false});
    }
  const double s = cfg.small_k;
  pts.push_back({Vec2(s, 0.0), 0.0, true});
  pts.push_back({Vec2(0.0, s), 0.0, true});
  pts.push_back({Vec2(s, s), 0.0, true});
  return pts;
}

namespace {

std::size_t argmin(const std::vector<BlochSample>& s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i].value < s[best].value) best = i;
  return best;
}

}  // namespace

BlochScan bloch_scan(const BlochAnalyzer& analyzer, const BoundarySchur& schur,
                     const std::vector<ElementResult>& elements, const Eigen::SparseMatrix<double>& newton_tangent,
                     const DofReduction<double>& newton_reduction, const BlochScanConfig& cfg) {
  BlochScan out;
  out.exact_fallback = !schur.interior_positive_definite;
  BlochAnalyzer::CondensedBasis basis;
  if (!out.exact_fallback) basis = analyzer.condensed_basis(schur);
  auto evaluate = [&](const Vec2& k) {
    if (!out.exact_fallback) return analyzer.condensed_min_eigenvalue(basis, k);
    if (k.norm() == 0.0) return smallest_eigenpairs<double>(newton_tangent, 1).values[0];
    return analyzer.exact(elements, k, 1).values[0];
  };
  out.samples = scan_points(cfg);
  const int n = static_cast<int>(out.samples.size());
  if (out.exact_fallback) {
    for (auto& s : out.samples) s.value = evaluate(s.k);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) out.samples[i].value = evaluate(out.samples[i].k);
  }
  std::size_t best = argmin(out.samples);
  if (cfg.refine && !out.samples[best].surrogate) {
    const double h = 0.5 * M_PI / (cfg.grid - 1);
    const Vec2 c = out.samples[best].k;
    for (int b = -1; b <= 1; ++b)
      for (int a = -1; a <= 1; ++a) {
        if (a == 0 && b == 0) continue;
        const Vec2 k(c.x() + a * h, c.y() + b * h);
        if (k.x() < 0 || k.y() < 0 || k.x() > M_PI + 1e-12 || k.y() > M_PI + 1e-12) continue;
        out.samples.push_back({k.cwiseMin(M_PI), evaluate(k.cwiseMin(M_PI)), false});
      }
    best = argmin(out.samples);
  }
  out.k_star = out.samples[best].k;
  out.surrogate = out.samples[best].surrogate;
  out.indicator_min = out.samples[best].value;

  if (out.k_star.norm() == 0.0) {
    const auto ep = smallest_eigenpairs<double>(newton_tangent, std::max(1, cfg.eig_count));
    out.lambda_min = ep.values[0];
    const Eigen::VectorXd v = newton_reduction.expand(Eigen::VectorXd(ep.vectors.col(0)));
    out.mode = v.cast<cdouble>();
  } else {
    const auto ep = analyzer.exact(elements, out.k_star, std::max(1, cfg.eig_count));
    out.lambda_min = ep.values[0];
    out.mode = analyzer.reduction(out.k_star).expand(Eigen::VectorXcd(ep.vectors.col(0)));
  }
  return out;
}

std::string to_string(InstabilityType type) {
  switch (type) {
    case InstabilityType::kStable: return "stable";
    case InstabilityType::kUnitCellPeriodic: return "unit-cell-periodic";
    case InstabilityType::kShortWavelength: return "short-wavelength";
    case InstabilityType::kLongWavelength: return "long-wavelength";
  }
  return "unknown";
}

Classification classify(const StabilityStep& step) {
  Classification c;
  const bool bloch_unstable = step.lambda_min <= 0.0;
  const bool material_unstable = step.lambda_bar <= 0.0;
  if (!bloch_unstable && !material_unstable) return c;
  if (bloch_unstable && !step.surrogate) {
    if (step.k_star.norm() == 0.0) {
      c.type = InstabilityType::kUnitCellPeriodic;
      return c;
    }
    c.type = InstabilityType::kShortWavelength;
    for (int i = 0; i < 2; ++i) {
      if (step.k_star[i] <= 0.0) continue;
      const double ni = 2.0 * M_PI / step.k_star[i];
      const double r = std::round(ni);
      c.n_integer[i] = std::abs(ni - r) <= 0.05 * ni;
      c.n[i] = c.n_integer[i] ? r : ni;
    }
    return c;
  }
  c.type = InstabilityType::kLongWavelength;
  c.disagreement = bloch_unstable && !material_unstable;
  return c;
}

bool track(StabilityReport& report, const StabilityStep& step, double P11_normalized, const Eigen::VectorXcd& mode) {
  report.steps.push_back(step);
  if (report.critical) return false;
  if (std::min(step.lambda_min, step.lambda_bar) > 0.0) return false;
  report.critical = report.steps.size() - 1;
  report.classification = classify(step);
  report.t_crit = step.t;
  report.P11_crit_normalized = P11_normalized;
  report.mode = mode;
  return true;
}

Supercell make_supercell(const Model& cell, const Eigen::VectorXd& d, const History& history, int n1, int n2) {
  auto mesh = std::make_shared<const UnitCellMesh>(replicate(*cell.mesh, n1, n2));
  Supercell sc;
  sc.model = std::make_shared<const Model>(Model::build(mesh, cell.materials[0], cell.materials[1]));
  const Model& m = *sc.model;
  const int ne = cell.num_elements();
  sc.d = Eigen::VectorXd::Zero(m.dofs.size());
  sc.history.resize(static_cast<std::size_t>(m.num_elements()) * kQuadPoints);
  for (int c = 0; c < n1 * n2; ++c)
    for (int e = 0; e < ne; ++e) {
      const int es = c * ne + e;
      const ElementVector local = gather(cell, e, d);
      for (int l = 0; l < kElementDofs; ++l) sc.d[m.element_dofs[es][l]] = m.element_signs[es][l] * local[l];
      for (int q = 0; q < kQuadPoints; ++q)
        sc.history[static_cast<std::size_t>(es) * kQuadPoints + q] = history[static_cast<std::size_t>(e) * kQuadPoints + q];
    }
  return sc;
}

std::vector<double> supercell_spectrum(const Supercell& sc, double tau, int count) {
  const Model& m = *sc.model;
  std::vector<ElementResult> el;
  evaluate_elements(m, sc.d, sc.history, tau, true, el);
  PeriodicStructure ps(m);
  const auto red = periodic_reduction(m, ps, false);
  Eigen::SparseMatrix<double> K;
  ReducedAssembler<double>(m, red).assemble(el, K);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(red.size, 2);
  for (int n = 0; n < m.dofs.num_nodes; ++n)
    for (int i = 0; i < 2; ++i) {
      const int g = m.dofs.disp(n, i);
      if (ps.follower_link[g] < 0) V(red.index[g], i) = 1.0;
    }
  V.col(0).normalize();
  V.col(1).normalize();
  return smallest_eigenpairs<double>(K, count, {}, &V).values;
}

}  // namespace hydrogel
