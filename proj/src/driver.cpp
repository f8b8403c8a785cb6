#include "hydrogel/driver.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "hydrogel/errors.hpp"

namespace hydrogel {

using ojson = nlohmann::ordered_json;

double ramp_factor(double t, double ramp) { return t < ramp ? 1.0 - t / ramp : 0.0; }

Simulation::Simulation(SimulationConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.threads > 0) omp_set_num_threads(cfg_.threads);
  const UnitCellGeometry g = cfg_.resolved_geometry();
  auto mesh = std::make_shared<const UnitCellMesh>(generate_unit_cell(g));
  model_ = std::make_shared<const Model>(Model::build(mesh, cfg_.matrix_params(), cfg_.coating_params()));
  solver_ = std::make_unique<CellSolver>(model_, cfg_.macro);
  analyzer_ = std::make_unique<BlochAnalyzer>(model_, solver_->periodic());
  ops_ = build_projection_operators(*model_, solver_->periodic());

  record_.config = cfg_;
  record_.config_hash = cfg_.hash();
  record_.version = HYDROGEL_VERSION;
  record_.mesh.nodes = mesh->num_nodes();
  record_.mesh.elements = mesh->num_elements();
  record_.mesh.edges = mesh->num_edges();
  record_.mesh.dofs = model_->dofs.size();
  record_.mesh.coating_elements = static_cast<int>(std::count_if(
      mesh->elements.begin(), mesh->elements.end(), [](const Element& e) { return e.phase == Phase::kCoating; }));
  record_.mesh.min_jacobian = min_jacobian(*mesh);
  record_.r_initial = g.void_radius();
  record_.mu0 = initial_state(model_->void_material()).mu0;
  steps_total_ = cfg_.total_time > 0 ? static_cast<int>(std::ceil(cfg_.total_time / cfg_.tau - 1e-9)) : 0;
  state_ = reference_state(*model_);
}

double Simulation::mu_applied(double t) const { return ramp_factor(t, cfg_.ramp) * record_.mu0; }

double Simulation::step_time(int n) const { return std::min(n * cfg_.tau, cfg_.total_time); }

StepRecord Simulation::measure(int step, double mu, double tau) const {
  const UnitCellMesh& mesh = *model_->mesh;
  StepRecord r;
  r.step = step;
  r.t = state_.t;
  r.mu_applied = mu;
  if (mesh.probe_node >= 0) {
    const int c0 = mesh.pairs.corner_master;
    auto u = [&](int n) { return Vec2(state_.d[model_->dofs.disp(n, 0)], state_.d[model_->dofs.disp(n, 1)]); };
    const Vec2 center = mesh.nodes[c0] + u(c0) + cfg_.macro.Fbar * (mesh.center() - mesh.nodes[c0]);
    r.r_A = (mesh.nodes[mesh.probe_node] + u(mesh.probe_node) - center).norm();
    r.delta_r_A = r.r_A - record_.r_initial;
  }
  const auto eff = effective_stress_and_mu(*model_, solver_->periodic(), solver_->residual(), tau);
  r.P = eff.P;
  r.mu_bar = eff.mu;
  return r;
}

ScanRecord Simulation::scan(int step, double t, Eigen::VectorXcd& mode) {
  const Execution exec = cfg_.solver.exec;
  const auto schur = boundary_schur(*model_, solver_->full_tangent(exec));
  const auto mod = effective_moduli(schur, ops_, solver_->periodic(), *model_);
  ScanRecord s;
  s.step = step;
  s.A = mod.A;
  s.rcond = mod.rcond;
  s.near_singular = mod.near_singular;
  EllipticityResult ell;
  try {
    ell = strong_ellipticity(mod.A);
  } catch (const DomainError& e) {
    record_.warnings.push_back("t = " + std::to_string(t) + ": " + e.what() + "; symmetric part used");
    ell = strong_ellipticity(Tensor4(0.5 * (mod.A + mod.A.transpose())));
  }
  const auto bloch = bloch_scan(*analyzer_, schur, solver_->elements(), solver_->reduced_tangent(exec),
                                solver_->reduction(), cfg_.stability.bloch);
  s.exact_fallback = bloch.exact_fallback;
  auto& st = s.stability;
  st.t = t;
  st.lambda_min = bloch.lambda_min;
  st.indicator_min = bloch.indicator_min;
  st.k_star = bloch.k_star;
  st.surrogate = bloch.surrogate;
  st.lambda_bar = ell.lambda_bar;
  st.theta = ell.theta;
  st.moduli_near_singular = mod.near_singular;
  mode = bloch.mode;
  return s;
}

bool Simulation::event_in(const ScanRecord& s) const {
  return (s.stability.lambda_min <= 0.0 && !record_.t_bloch_loss) ||
         (s.stability.lambda_bar <= 0.0 && !record_.t_ellipticity_loss);
}

void Simulation::initialize() {
  if (initialized_) return;
  initialized_ = true;
  if (steps_total_ == 0) {
    finished_ = true;
    return;
  }
  Eigen::VectorXd d = state_.d;
  const auto rep = solver_->solve(d, state_.history, cfg_.tau, record_.mu0, cfg_.solver);
  if (!rep.converged) throw SolverError("reference equilibrium did not converge: " + rep.failure);
  state_.d = d;
  state_.t = 0.0;
  record_.series.push_back(measure(0, record_.mu0, cfg_.tau));
  Eigen::VectorXcd mode;
  ScanRecord s = scan(0, 0.0, mode);
  s.P = record_.series.back().P;
  s.mu_bar = record_.series.back().mu_bar;
  register_scan(s, mode, state_);
}

void Simulation::register_scan(const ScanRecord& s, const Eigen::VectorXcd& mode, const CellState& before) {
  StepRecord& row = record_.series.back();
  row.scanned = true;
  row.lambda_min = s.stability.lambda_min;
  row.lambda_bar = s.stability.lambda_bar;
  record_.scans.push_back(s);
  if (s.stability.lambda_min <= 0.0 && !record_.t_bloch_loss) record_.t_bloch_loss = s.stability.t;
  if (s.stability.lambda_bar <= 0.0 && !record_.t_ellipticity_loss) record_.t_ellipticity_loss = s.stability.t;
  if (s.near_singular)
    record_.warnings.push_back("t = " + std::to_string(s.stability.t) + ": effective moduli near singular");

  const double gamma = cfg_.matrix_params().gamma;
  if (!track(record_.stability, s.stability, row.P(0, 0) / gamma, mode)) return;
  critical_state_ = state_;
  mode_ = mode;
  std::ostringstream msg;
  msg << to_string(record_.stability.classification.type) << " instability at t = " << s.stability.t;
  record_.stability.message = msg.str();
  if (model_->mesh->has_coating() && mode.size() > 0) record_.wrinkle_count = wrinkle_count(*model_->mesh, mode);
  if (cfg_.stability.refine_critical && s.step > 0) refine_critical(before, s.step);
  if (cfg_.stability.stop_at_instability) {
    record_.status = "critical";
    finished_ = true;
  } else {
    record_.warnings.push_back("continued past the critical point at t = " + std::to_string(s.stability.t) +
                               "; later steps follow the unit-cell periodic branch");
  }
}

void Simulation::refine_critical(const CellState& before, int step) {
  CellState st = before;
  const double t_end = step_time(step);
  const double dt = (t_end - before.t) / 8.0;
  for (int i = 1; i <= 8; ++i) {
    const auto out = advance_step(*solver_, st, dt, [this](double t) { return mu_applied(t); }, cfg_.solver);
    if (!out.ok) {
      record_.warnings.push_back("critical refinement stopped: " + out.failure);
      return;
    }
    st.t = i == 8 ? t_end : before.t + i * dt;
    Eigen::VectorXcd mode;
    const ScanRecord s = scan(step, st.t, mode);
    if (std::min(s.stability.lambda_min, s.stability.lambda_bar) <= 0.0) {
      record_.t_crit_refined = st.t;
      return;
    }
  }
  record_.t_crit_refined = t_end;
}

bool Simulation::advance() {
  if (!initialized_) initialize();
  if (finished_) return false;
  const int n = step_ + 1;
  const double t_end = step_time(n);
  const double dt = t_end - state_.t;
  CellState before = state_;
  const std::size_t series_before = record_.series.size(), scans_before = record_.scans.size();
  const auto out = advance_step(*solver_, state_, dt, [this](double t) { return mu_applied(t); }, cfg_.solver);
  if (!out.ok) {
    state_ = std::move(before);
    record_.status = "failed";
    record_.failure = out.failure;
    finished_ = true;
    return false;
  }
  state_.t = t_end;
  step_ = n;
  StepRecord row = measure(n, out.mu_applied, out.last_tau);
  row.h_void = out.balance.void_influx / dt;
  row.balance_error = out.balance_error;
  row.newton_iterations = out.newton_iterations;
  row.substeps = out.substeps;
  record_.series.push_back(row);

  const bool last = n >= steps_total_;
  const bool scheduled = n % cfg_.stability.scan_every == 0 || last || n <= backfill_until_;
  if (!scheduled) {
    pending_.push_back({std::move(before), series_before, scans_before});
    return true;
  }
  Eigen::VectorXcd mode;
  ScanRecord s = scan(n, t_end, mode);
  s.P = row.P;
  s.mu_bar = row.mu_bar;
  if (event_in(s) && !pending_.empty()) {
    // replay the unscanned steps since the last scan, scanning each of them
    Snapshot first = std::move(pending_.front());
    pending_.clear();
    state_ = std::move(first.state);
    record_.series.resize(first.series_size);
    record_.scans.resize(first.scans_size);
    step_ = record_.series.back().step;
    backfill_until_ = n;
    return true;
  }
  pending_.clear();
  register_scan(s, mode, before);
  if (last) finished_ = true;
  return !finished_;
}

RunRecord Simulation::run() {
  try {
    while (advance()) {
    }
  } catch (const SolverError& e) {
    record_.status = "failed";
    record_.failure = e.what();
    finished_ = true;
  } catch (const DomainError& e) {
    record_.status = "failed";
    record_.failure = e.what();
    finished_ = true;
  }
  return record_;
}

StoredStates Simulation::stored() const {
  StoredStates s;
  if (!record_.series.empty()) s.final_state = state_;
  s.critical_state = critical_state_;
  s.mode = mode_;
  return s;
}

int wrinkle_count(const UnitCellMesh& mesh, const Eigen::VectorXcd& mode) {
  if (!mesh.has_coating()) throw ConfigError("wrinkle count needs a two-phase mesh with a coating");
  if (mode.size() < 2 * mesh.num_nodes()) throw ConfigError("wrinkle count: mode vector shorter than the mesh");
  const double r_mid = 0.5 * (mesh.void_radius + mesh.coating_outer_radius);
  const double tol = 1e-8 * mesh.extent.x();
  const Vec2 c = mesh.center();
  std::vector<double> theta;
  std::vector<cdouble> ur;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const Vec2 x = mesh.nodes[n] - c;
    if (std::abs(x.norm() - r_mid) > tol) continue;
    const Vec2 e = x.normalized();
    theta.push_back(std::atan2(x.y(), x.x()));
    ur.push_back(e.x() * mode[2 * n] + e.y() * mode[2 * n + 1]);
  }
  if (theta.size() < 8) throw ConfigError("wrinkle count: coating mid-circle has too few nodes");
  cdouble sq = 0.0;
  for (const auto& v : ur) sq += v * v;
  const cdouble rot = std::polar(1.0, -0.5 * std::arg(sq));
  std::vector<double> u(ur.size());
  for (std::size_t j = 0; j < ur.size(); ++j) u[j] = std::real(ur[j] * rot);

  const int max_m = static_cast<int>(theta.size()) / 2;
  int best = 1;
  double best_amp = -1.0;
  for (int m = 1; m <= max_m; ++m) {
    cdouble cm = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) cm += u[j] * std::polar(1.0, -m * theta[j]);
    if (std::abs(cm) > best_amp * (1.0 + 1e-12)) {
      best_amp = std::abs(cm);
      best = m;
    }
  }
  return best;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

ojson mat_json(const Mat2& P) { return ojson::array({P(0, 0), P(0, 1), P(1, 0), P(1, 1)}); }

Mat2 mat_from(const ojson& j) {
  Mat2 P;
  P << j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>();
  return P;
}

template <class T>
ojson opt_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

template <class T>
std::optional<T> opt_from(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

InstabilityType type_from(const std::string& s) {
  for (auto t : {InstabilityType::kStable, InstabilityType::kUnitCellPeriodic, InstabilityType::kShortWavelength,
                 InstabilityType::kLongWavelength})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown instability type '" + s + "'");
}

const char* kCsvNames[4] = {"P11", "P12", "P21", "P22"};

}  // namespace

std::string record_to_json(const RunRecord& rec) {
  ojson j;
  j["version"] = rec.version;
  j["config_hash"] = rec.config_hash;
  ojson cfg = ojson::object();
  for (const auto& [k, v] : rec.config.entries()) cfg[k] = v;
  j["config"] = cfg;
  j["status"] = rec.status;
  j["failure"] = rec.failure;
  j["warnings"] = rec.warnings;
  j["mesh"] = {{"nodes", rec.mesh.nodes},
               {"elements", rec.mesh.elements},
               {"coating_elements", rec.mesh.coating_elements},
               {"edges", rec.mesh.edges},
               {"dofs", rec.mesh.dofs},
               {"min_jacobian", rec.mesh.min_jacobian}};
  j["r_initial"] = rec.r_initial;
  j["mu0"] = rec.mu0;
  ojson series = ojson::array();
  for (const auto& r : rec.series)
    series.push_back({{"step", r.step},
                      {"t", r.t},
                      {"mu_applied", r.mu_applied},
                      {"r_A", r.r_A},
                      {"delta_r_A", r.delta_r_A},
                      {"h_void", r.h_void},
                      {"P", mat_json(r.P)},
                      {"mu_bar", r.mu_bar},
                      {"balance_error", r.balance_error},
                      {"newton_iterations", r.newton_iterations},
                      {"substeps", r.substeps},
                      {"scanned", r.scanned},
                      {"lambda_min", r.lambda_min},
                      {"lambda_bar", r.lambda_bar}});
  j["series"] = series;
  ojson scans = ojson::array();
  for (const auto& s : rec.scans) {
    ojson A = ojson::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) A.push_back(s.A(r, c));
    scans.push_back({{"step", s.step},
                     {"t", s.stability.t},
                     {"lambda_min", s.stability.lambda_min},
                     {"indicator_min", s.stability.indicator_min},
                     {"k_star", {s.stability.k_star.x(), s.stability.k_star.y()}},
                     {"surrogate", s.stability.surrogate},
                     {"lambda_bar", s.stability.lambda_bar},
                     {"theta", s.stability.theta},
                     {"P", mat_json(s.P)},
                     {"mu_bar", s.mu_bar},
                     {"A", A},
                     {"rcond", s.rcond},
                     {"near_singular", s.near_singular},
                     {"exact_fallback", s.exact_fallback}});
  }
  j["scans"] = scans;
  const auto& st = rec.stability;
  const auto& c = st.classification;
  j["stability"] = {{"critical_scan", st.critical ? ojson(*st.critical) : ojson(nullptr)},
                    {"classification", to_string(c.type)},
                    {"n", {c.n[0], c.n[1]}},
                    {"n_integer", {c.n_integer[0], c.n_integer[1]}},
                    {"disagreement", c.disagreement},
                    {"t_crit", st.t_crit},
                    {"P11_crit_normalized", st.P11_crit_normalized},
                    {"message", st.message}};
  j["t_crit_refined"] = opt_json(rec.t_crit_refined);
  j["t_bloch_loss"] = opt_json(rec.t_bloch_loss);
  j["t_ellipticity_loss"] = opt_json(rec.t_ellipticity_loss);
  j["wrinkle_count"] = opt_json(rec.wrinkle_count);
  return j.dump(1) + "\n";
}

RunRecord record_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("run record is not valid JSON: ") + e.what());
  }
  RunRecord rec;
  try {
    rec.version = j.at("version").get<std::string>();
    rec.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) rec.config.set(k, v.get<std::string>());
    rec.status = j.at("status").get<std::string>();
    rec.failure = j.at("failure").get<std::string>();
    rec.warnings = j.at("warnings").get<std::vector<std::string>>();
    const auto& m = j.at("mesh");
    rec.mesh = {m.at("nodes").get<int>(),  m.at("elements").get<int>(), m.at("coating_elements").get<int>(),
                m.at("edges").get<int>(),  m.at("dofs").get<int>(),     m.at("min_jacobian").get<double>()};
    rec.r_initial = j.at("r_initial").get<double>();
    rec.mu0 = j.at("mu0").get<double>();
    for (const auto& r : j.at("series")) {
      StepRecord s;
      s.step = r.at("step").get<int>();
      s.t = r.at("t").get<double>();
      s.mu_applied = r.at("mu_applied").get<double>();
      s.r_A = r.at("r_A").get<double>();
      s.delta_r_A = r.at("delta_r_A").get<double>();
      s.h_void = r.at("h_void").get<double>();
      s.P = mat_from(r.at("P"));
      s.mu_bar = r.at("mu_bar").get<double>();
      s.balance_error = r.at("balance_error").get<double>();
      s.newton_iterations = r.at("newton_iterations").get<int>();
      s.substeps = r.at("substeps").get<int>();
      s.scanned = r.at("scanned").get<bool>();
      s.lambda_min = r.at("lambda_min").get<double>();
      s.lambda_bar = r.at("lambda_bar").get<double>();
      rec.series.push_back(s);
    }
    for (const auto& r : j.at("scans")) {
      ScanRecord s;
      s.step = r.at("step").get<int>();
      auto& st = s.stability;
      st.t = r.at("t").get<double>();
      st.lambda_min = r.at("lambda_min").get<double>();
      st.indicator_min = r.at("indicator_min").get<double>();
      st.k_star = Vec2(r.at("k_star").at(0).get<double>(), r.at("k_star").at(1).get<double>());
      st.surrogate = r.at("surrogate").get<bool>();
      st.lambda_bar = r.at("lambda_bar").get<double>();
      st.theta = r.at("theta").get<double>();
      s.P = mat_from(r.at("P"));
      s.mu_bar = r.at("mu_bar").get<double>();
      for (int a = 0; a < 16; ++a) s.A(a / 4, a % 4) = r.at("A").at(a).get<double>();
      s.rcond = r.at("rcond").get<double>();
      s.near_singular = r.at("near_singular").get<bool>();
      st.moduli_near_singular = s.near_singular;
      s.exact_fallback = r.at("exact_fallback").get<bool>();
      rec.scans.push_back(s);
      rec.stability.steps.push_back(st);
    }
    const auto& st = j.at("stability");
    if (!st.at("critical_scan").is_null()) rec.stability.critical = st.at("critical_scan").get<std::size_t>();
    auto& c = rec.stability.classification;
    c.type = type_from(st.at("classification").get<std::string>());
    c.n = {st.at("n").at(0).get<double>(), st.at("n").at(1).get<double>()};
    c.n_integer = {st.at("n_integer").at(0).get<bool>(), st.at("n_integer").at(1).get<bool>()};
    c.disagreement = st.at("disagreement").get<bool>();
    rec.stability.t_crit = st.at("t_crit").get<double>();
    rec.stability.P11_crit_normalized = st.at("P11_crit_normalized").get<double>();
    rec.stability.message = st.at("message").get<std::string>();
    rec.t_crit_refined = opt_from<double>(j.at("t_crit_refined"));
    rec.t_bloch_loss = opt_from<double>(j.at("t_bloch_loss"));
    rec.t_ellipticity_loss = opt_from<double>(j.at("t_ellipticity_loss"));
    rec.wrinkle_count = opt_from<int>(j.at("wrinkle_count"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run record is incomplete: ") + e.what());
  }
  return rec;
}

void write_timeseries_csv(std::ostream& os, const RunRecord& rec) {
  const double gamma = rec.config.matrix_params().gamma;
  os << "step,t,mu_applied,r_A,delta_r_A,h_void,P11,P12,P21,P22,P11_over_gamma,mu_bar,balance_error,"
        "newton_iterations,substeps,lambda_min,lambda_bar\n";
  for (const auto& r : rec.series) {
    os << r.step << ',' << num(r.t) << ',' << num(r.mu_applied) << ',' << num(r.r_A) << ',' << num(r.delta_r_A)
       << ',' << num(r.h_void);
    for (int a = 0; a < 4; ++a) os << ',' << num(r.P(a / 2, a % 2));
    os << ',' << num(r.P(0, 0) / gamma) << ',' << num(r.mu_bar) << ',' << num(r.balance_error) << ','
       << r.newton_iterations << ',' << r.substeps << ',';
    if (r.scanned) os << num(r.lambda_min) << ',' << num(r.lambda_bar);
    else os << ',';
    os << '\n';
  }
}

void write_homogenization_csv(std::ostream& os, const RunRecord& rec) {
  os << "step,t";
  for (auto n : kCsvNames) os << ',' << n;
  os << ",mu_bar";
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) os << ",A" << r / 2 + 1 << r % 2 + 1 << c / 2 + 1 << c % 2 + 1;
  os << ",rcond,near_singular\n";
  for (const auto& s : rec.scans) {
    os << s.step << ',' << num(s.stability.t);
    for (int a = 0; a < 4; ++a) os << ',' << num(s.P(a / 2, a % 2));
    os << ',' << num(s.mu_bar);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) os << ',' << num(s.A(r, c));
    os << ',' << num(s.rcond) << ',' << (s.near_singular ? 1 : 0) << '\n';
  }
}

void write_stability_csv(std::ostream& os, const RunRecord& rec) {
  os << "step,t,lambda_min,indicator_min,k1,k2,surrogate,lambda_bar,theta,classification,exact_fallback\n";
  for (const auto& s : rec.scans) {
    const auto& st = s.stability;
    os << s.step << ',' << num(st.t) << ',' << num(st.lambda_min) << ',' << num(st.indicator_min) << ','
       << num(st.k_star.x()) << ',' << num(st.k_star.y()) << ',' << (st.surrogate ? 1 : 0) << ','
       << num(st.lambda_bar) << ',' << num(st.theta) << ',' << to_string(classify(st).type) << ','
       << (s.exact_fallback ? 1 : 0) << '\n';
  }
}

namespace {

void vtk_grid(std::ostream& os, const UnitCellMesh& mesh, const std::string& title) {
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_nodes() << " double\n";
  for (const auto& x : mesh.nodes) os << num(x.x()) << ' ' << num(x.y()) << " 0\n";
  os << "CELLS " << mesh.num_elements() << ' ' << 10 * mesh.num_elements() << '\n';
  for (const auto& e : mesh.elements) {
    os << 9;
    for (int n : e.nodes) os << ' ' << n;
    os << '\n';
  }
  os << "CELL_TYPES " << mesh.num_elements() << '\n';
  for (int e = 0; e < mesh.num_elements(); ++e) os << "28\n";
}

void vtk_phase(std::ostream& os, const UnitCellMesh& mesh) {
  os << "SCALARS phase int 1\nLOOKUP_TABLE default\n";
  for (const auto& e : mesh.elements) os << static_cast<int>(e.phase) << '\n';
}

}  // namespace

void write_vtk_mesh(std::ostream& os, const UnitCellMesh& mesh) {
  vtk_grid(os, mesh, "hydrogel unit cell mesh");
  os << "CELL_DATA " << mesh.num_elements() << '\n';
  vtk_phase(os, mesh);
  os << "POINT_DATA " << mesh.num_nodes() << "\nSCALARS boundary_tag int 1\nLOOKUP_TABLE default\n";
  for (auto t : mesh.node_tags) os << static_cast<int>(t) << '\n';
}

void write_vtk_state(std::ostream& os, const Model& model, const CellState& state, const std::string& title) {
  const UnitCellMesh& mesh = *model.mesh;
  vtk_grid(os, mesh, title);
  os << "CELL_DATA " << mesh.num_elements() << '\n';
  vtk_phase(os, mesh);
  std::vector<double> s(mesh.num_elements(), 0.0), J(mesh.num_elements(), 0.0);
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int q = 0; q < kQuadPoints; ++q) {
      const auto& h = state.history[static_cast<std::size_t>(e) * kQuadPoints + q];
      s[e] += h.s / kQuadPoints;
      J[e] += h.F.determinant() / kQuadPoints;
    }
  os << "SCALARS solvent_content double 1\nLOOKUP_TABLE default\n";
  for (double v : s) os << num(v) << '\n';
  os << "SCALARS jacobian double 1\nLOOKUP_TABLE default\n";
  for (double v : J) os << num(v) << '\n';
  const Eigen::VectorXd mu = nodal_chemical_potential(model, state.d, state.history);
  os << "POINT_DATA " << mesh.num_nodes() << "\nVECTORS displacement double\n";
  for (int n = 0; n < mesh.num_nodes(); ++n)
    os << num(state.d[model.dofs.disp(n, 0)]) << ' ' << num(state.d[model.dofs.disp(n, 1)]) << " 0\n";
  os << "SCALARS chemical_potential double 1\nLOOKUP_TABLE default\n";
  for (int n = 0; n < mesh.num_nodes(); ++n) os << num(mu[n]) << '\n';
}

void write_vtk_mode(std::ostream& os, const Model& model, const Eigen::VectorXcd& mode) {
  const UnitCellMesh& mesh = *model.mesh;
  vtk_grid(os, mesh, "critical bloch mode");
  os << "CELL_DATA " << mesh.num_elements() << '\n';
  vtk_phase(os, mesh);
  os << "POINT_DATA " << mesh.num_nodes() << '\n';
  for (int part = 0; part < 2; ++part) {
    os << "VECTORS " << (part == 0 ? "mode_real" : "mode_imag") << " double\n";
    for (int n = 0; n < mesh.num_nodes(); ++n) {
      const cdouble a = mode[model.dofs.disp(n, 0)], b = mode[model.dofs.disp(n, 1)];
      os << num(part == 0 ? a.real() : a.imag()) << ' ' << num(part == 0 ? b.real() : b.imag()) << " 0\n";
    }
  }
}

namespace {

constexpr char kStateMagic[8] = {'H', 'G', 'S', 'T', 'A', 'T', 'E', '1'};

void put(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

template <class T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ConfigError("state file truncated");
  return v;
}

void put_state(std::ostream& os, const std::optional<CellState>& s) {
  put(os, std::int64_t(s ? 1 : 0));
  if (!s) return;
  put(os, s->t);
  put(os, std::int64_t(s->d.size()));
  for (Eigen::Index i = 0; i < s->d.size(); ++i) put(os, s->d[i]);
  put(os, std::int64_t(s->history.size()));
  for (const auto& h : s->history) {
    put(os, h.s);
    for (int a = 0; a < 4; ++a) put(os, h.F(a / 2, a % 2));
    for (int a = 0; a < 4; ++a) put(os, h.C(a / 2, a % 2));
  }
}

std::optional<CellState> take_state(std::istream& is) {
  if (take<std::int64_t>(is) == 0) return std::nullopt;
  CellState s;
  s.t = take<double>(is);
  s.d.resize(take<std::int64_t>(is));
  for (Eigen::Index i = 0; i < s.d.size(); ++i) s.d[i] = take<double>(is);
  s.history.resize(static_cast<std::size_t>(take<std::int64_t>(is)));
  for (auto& h : s.history) {
    h.s = take<double>(is);
    for (int a = 0; a < 4; ++a) h.F(a / 2, a % 2) = take<double>(is);
    for (int a = 0; a < 4; ++a) h.C(a / 2, a % 2) = take<double>(is);
  }
  return s;
}

template <class F>
void write_file(const std::filesystem::path& path, F&& body, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  body(os);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_tables_and_vtk(const std::filesystem::path& dir, const RunRecord& rec, const Model& model,
                          const StoredStates& states, bool vtk) {
  write_file(dir / "timeseries.csv", [&](std::ostream& os) { write_timeseries_csv(os, rec); });
  write_file(dir / "homogenization.csv", [&](std::ostream& os) { write_homogenization_csv(os, rec); });
  write_file(dir / "stability.csv", [&](std::ostream& os) { write_stability_csv(os, rec); });
  if (!vtk) return;
  write_file(dir / "mesh.vtk", [&](std::ostream& os) { write_vtk_mesh(os, *model.mesh); });
  if (states.final_state)
    write_file(dir / "final.vtk",
               [&](std::ostream& os) { write_vtk_state(os, model, *states.final_state, "final state"); });
  if (states.critical_state)
    write_file(dir / "critical.vtk",
               [&](std::ostream& os) { write_vtk_state(os, model, *states.critical_state, "critical state"); });
  if (states.mode.size() == model.dofs.size())
    write_file(dir / "mode.vtk", [&](std::ostream& os) { write_vtk_mode(os, model, states.mode); });
}

}  // namespace

void write_states(const std::string& path, const StoredStates& states) {
  write_file(
      path,
      [&](std::ostream& os) {
        os.write(kStateMagic, sizeof kStateMagic);
        put_state(os, states.final_state);
        put_state(os, states.critical_state);
        put(os, std::int64_t(states.mode.size()));
        for (Eigen::Index i = 0; i < states.mode.size(); ++i) {
          put(os, states.mode[i].real());
          put(os, states.mode[i].imag());
        }
      },
      true);
}

StoredStates read_states(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read state file '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + 8, kStateMagic)) throw ConfigError("'" + path + "' is not a state file");
  StoredStates s;
  s.final_state = take_state(is);
  s.critical_state = take_state(is);
  s.mode.resize(take<std::int64_t>(is));
  for (Eigen::Index i = 0; i < s.mode.size(); ++i) {
    const double re = take<double>(is);
    s.mode[i] = cdouble(re, take<double>(is));
  }
  return s;
}

void write_run_outputs(const std::string& dir, const RunRecord& rec, const Model& model, const StoredStates& states) {
  const std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  write_file(p / "run.json", [&](std::ostream& os) { os << record_to_json(rec); });
  write_states((p / "state.bin").string(), states);
  write_tables_and_vtk(p, rec, model, states, rec.config.vtk);
}

RunRecord post_process(const std::string& dir) {
  const std::filesystem::path p(dir);
  RunRecord rec = record_from_json(read_file(p / "run.json"));
  const StoredStates states = read_states((p / "state.bin").string());
  auto mesh = std::make_shared<const UnitCellMesh>(generate_unit_cell(rec.config.resolved_geometry()));
  const Model model = Model::build(mesh, rec.config.matrix_params(), rec.config.coating_params());
  if (states.final_state && states.final_state->d.size() != model.dofs.size())
    throw ConfigError("state file does not match the mesh of the run record");
  write_tables_and_vtk(p, rec, model, states, true);
  return rec;
}

std::vector<SweepPoint> sweep_points(const SimulationConfig& cfg) {
  auto axis = [](const std::vector<double>& v, double base) { return v.empty() ? std::vector<double>{base} : v; };
  const MaterialParams m = cfg.matrix_params();
  const auto f0 = axis(cfg.sweep.void_fraction, cfg.geometry.void_fraction);
  const auto om = axis(cfg.sweep.coating_thickness, cfg.geometry.coating_thickness);
  const auto gr = axis(cfg.sweep.gamma_ratio, cfg.coating.gamma_ratio);
  const auto mr = axis(cfg.sweep.mobility_ratio, cfg.coating.mobility_ratio);
  const auto mo = axis(cfg.sweep.mobility, m.mobility);
  const auto al = axis(cfg.sweep.alpha, m.alpha);
  std::vector<SweepPoint> out;
  for (double a : f0)
    for (double b : om)
      for (double c : gr)
        for (double d : mr)
          for (double e : mo)
            for (double f : al) out.push_back({a, b, c, d, e, f});
  return out;
}

SimulationConfig sweep_config(const SimulationConfig& base, const SweepPoint& p, std::size_t index) {
  SimulationConfig c = base;
  c.geometry.void_fraction = p.void_fraction;
  c.geometry.coating_thickness = p.coating_thickness;
  c.coating.gamma_ratio = p.gamma_ratio;
  c.coating.mobility_ratio = p.mobility_ratio;
  c.matrix.mobility = p.mobility;
  c.matrix.alpha = p.alpha;
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%04zu", index);
  c.output_dir = (std::filesystem::path(base.output_dir) / buf).string();
  c.sweep = SweepAxes{};
  return c;
}

std::vector<SweepResult> run_sweep(const SimulationConfig& cfg, bool write_outputs) {
  cfg.validate();
  cfg.validate_sweep();
  const auto points = sweep_points(cfg);
  std::vector<SweepResult> results(points.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::min<int>(cfg.sweep.workers, static_cast<int>(points.size()));
  auto work = [&] {
    if (workers > 1) omp_set_num_threads(1);
    for (std::size_t i = next++; i < points.size(); i = next++) {
      const SimulationConfig c = sweep_config(cfg, points[i], i);
      results[i].point = points[i];
      try {
        Simulation sim(c);
        results[i].record = sim.run();
        if (write_outputs) write_run_outputs(c.output_dir, results[i].record, *sim.model(), sim.stored());
      } catch (const Error& e) {
        results[i].record.config = c;
        results[i].record.config_hash = c.hash();
        results[i].record.status = "failed";
        results[i].record.failure = e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (write_outputs) {
    std::filesystem::create_directories(cfg.output_dir);
    write_file(std::filesystem::path(cfg.output_dir) / "summary.csv",
               [&](std::ostream& os) { write_summary_csv(os, results); });
  }
  return results;
}

void write_summary_csv(std::ostream& os, const std::vector<SweepResult>& results) {
  os << "index,void_fraction,coating_thickness,gamma_ratio,mobility_ratio,mobility,alpha,status,t_crit,"
        "P11_crit_over_gamma,classification,k1,k2,n1,n2,t_bloch_loss,t_ellipticity_loss,wrinkle_count,steps\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& p = results[i].point;
    const auto& r = results[i].record;
    os << i << ',' << num(p.void_fraction) << ',' << num(p.coating_thickness) << ',' << num(p.gamma_ratio) << ','
       << num(p.mobility_ratio) << ',' << num(p.mobility) << ',' << num(p.alpha) << ',' << r.status << ',';
    const auto& st = r.stability;
    if (st.critical) {
      const auto& k = st.steps[*st.critical].k_star;
      os << num(st.t_crit) << ',' << num(st.P11_crit_normalized) << ',' << to_string(st.classification.type) << ','
         << num(k.x()) << ',' << num(k.y()) << ',' << num(st.classification.n[0]) << ','
         << num(st.classification.n[1]) << ',';
    } else {
      os << ",," << to_string(InstabilityType::kStable) << ",,,,,";
    }
    os << (r.t_bloch_loss ? num(*r.t_bloch_loss) : "") << ','
       << (r.t_ellipticity_loss ? num(*r.t_ellipticity_loss) : "") << ','
       << (r.wrinkle_count ? std::to_string(*r.wrinkle_count) : "") << ',' << r.series.size() << '\n';
  }
}

}  // namespace hydrogel
