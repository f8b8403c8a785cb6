#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hydrogel/config.hpp"
#include "hydrogel/fem.hpp"
#include "hydrogel/homogenization.hpp"
#include "hydrogel/solver.hpp"
#include "hydrogel/stability.hpp"

namespace hydrogel {

/// Load factor of the void boundary potential: 1 - t / ramp up to the knot,
/// 0 afterwards.
double ramp_factor(double t, double ramp);

struct StepRecord {
  int step = 0;
  double t = 0.0;
  double mu_applied = 0.0;
  double r_A = 0.0;
  double delta_r_A = 0.0;
  double h_void = 0.0;          ///< solvent volume rate entering through the void boundary
  Mat2 P = Mat2::Zero();        ///< effective first Piola-Kirchhoff stress
  double mu_bar = 0.0;
  double balance_error = 0.0;
  int newton_iterations = 0;
  int substeps = 0;
  bool scanned = false;
  double lambda_min = 0.0;      ///< valid when scanned
  double lambda_bar = 0.0;
};

struct ScanRecord {
  int step = 0;
  StabilityStep stability;
  Mat2 P = Mat2::Zero();
  double mu_bar = 0.0;
  Tensor4 A = Tensor4::Zero();
  double rcond = 1.0;
  bool near_singular = false;
  bool exact_fallback = false;
};

struct MeshStats {
  int nodes = 0;
  int elements = 0;
  int coating_elements = 0;
  int edges = 0;
  int dofs = 0;
  double min_jacobian = 0.0;
};

struct RunRecord {
  SimulationConfig config;
  std::string config_hash;
  std::string version;
  MeshStats mesh;
  double r_initial = 0.0;
  double mu0 = 0.0;
  std::vector<StepRecord> series;
  std::vector<ScanRecord> scans;
  StabilityReport stability;           ///< mode is kept in the stored states, not here
  std::optional<double> t_crit_refined;
  std::optional<double> t_bloch_loss;  ///< first scanned time with lambda_min <= 0
  std::optional<double> t_ellipticity_loss;
  std::optional<int> wrinkle_count;
  std::string status = "completed";    ///< completed | critical | failed
  std::string failure;
  std::vector<std::string> warnings;
};

/// Converged fields kept for post-processing.
struct StoredStates {
  std::optional<CellState> final_state;
  std::optional<CellState> critical_state;
  Eigen::VectorXcd mode;                 ///< critical Bloch mode over all dofs
};

/// Time stepping of one cell under the ramped void potential with periodic
/// stability scans.
class Simulation {
 public:
  explicit Simulation(SimulationConfig cfg);

  const SimulationConfig& config() const { return cfg_; }
  std::shared_ptr<const Model> model() const { return model_; }
  double mu_applied(double t) const;

  /// Equilibrium and scan at t = 0. Called by the first advance() if needed.
  void initialize();
  /// One time step (with backfill scans when an event is found between
  /// scans). Returns false once the run has finished.
  bool advance();
  bool finished() const { return finished_; }

  const RunRecord& record() const { return record_; }
  const CellState& state() const { return state_; }
  StoredStates stored() const;

  /// Runs to completion. Solver failures end the run with status "failed".
  RunRecord run();

 private:
  struct Snapshot {
    CellState state;
    std::size_t series_size;
    std::size_t scans_size;
  };

  StepRecord measure(int step, double mu, double tau) const;
  ScanRecord scan(int step, double t, Eigen::VectorXcd& mode);
  bool event_in(const ScanRecord& s) const;
  void register_scan(const ScanRecord& s, const Eigen::VectorXcd& mode, const CellState& before);
  void refine_critical(const CellState& before, int step);
  double step_time(int n) const;

  SimulationConfig cfg_;
  std::shared_ptr<const Model> model_;
  std::unique_ptr<CellSolver> solver_;
  std::unique_ptr<BlochAnalyzer> analyzer_;
  ProjectionOperators ops_;
  RunRecord record_;
  CellState state_;
  std::optional<CellState> critical_state_;
  Eigen::VectorXcd mode_;
  std::vector<Snapshot> pending_;
  int step_ = 0;
  int steps_total_ = 0;
  int backfill_until_ = -1;
  bool initialized_ = false;
  bool finished_ = false;
};

/// Dominant angular harmonic (>= 1) of the radial component of a mode along
/// the coating mid-circle. Throws ConfigError on a mesh without coating.
int wrinkle_count(const UnitCellMesh& mesh, const Eigen::VectorXcd& mode);

std::string record_to_json(const RunRecord& rec);
RunRecord record_from_json(const std::string& text);

void write_timeseries_csv(std::ostream& os, const RunRecord& rec);
void write_homogenization_csv(std::ostream& os, const RunRecord& rec);
void write_stability_csv(std::ostream& os, const RunRecord& rec);

void write_vtk_mesh(std::ostream& os, const UnitCellMesh& mesh);
/// Reference nodes with displacement and nodal chemical potential; solvent
/// content and Jacobian averaged per cell.
void write_vtk_state(std::ostream& os, const Model& model, const CellState& state, const std::string& title);
void write_vtk_mode(std::ostream& os, const Model& model, const Eigen::VectorXcd& mode);

void write_states(const std::string& path, const StoredStates& states);
StoredStates read_states(const std::string& path);

/// Writes the CSV tables, run.json, the state file and, when enabled, VTK.
void write_run_outputs(const std::string& dir, const RunRecord& rec, const Model& model, const StoredStates& states);
/// Re-emits CSV and VTK from a directory written by write_run_outputs.
RunRecord post_process(const std::string& dir);

struct SweepPoint {
  double void_fraction, coating_thickness, gamma_ratio, mobility_ratio, mobility, alpha;
};

/// Cartesian product of the sweep axes, last axis fastest; empty axes take
/// the base value.
std::vector<SweepPoint> sweep_points(const SimulationConfig& cfg);
SimulationConfig sweep_config(const SimulationConfig& base, const SweepPoint& p, std::size_t index);

struct SweepResult {
  SweepPoint point;
  RunRecord record;
};

/// One run per grid point on sweep.workers threads; results in grid order.
/// With write_outputs each run writes to <output.dir>/run_<index>, and
/// summary.csv lands in output.dir.
std::vector<SweepResult> run_sweep(const SimulationConfig& cfg, bool write_outputs);
void write_summary_csv(std::ostream& os, const std::vector<SweepResult>& results);

}  // namespace hydrogel
