#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hydrogel/homogenization.hpp"
#include "hydrogel/material.hpp"
#include "hydrogel/mesh.hpp"
#include "hydrogel/solver.hpp"
#include "hydrogel/stability.hpp"

namespace hydrogel {

/// Coating constants: unset entries follow the matrix, with gamma and the
/// mobility scaled by their ratios and epsilon = 10 gamma.
struct CoatingConfig {
  double gamma_ratio = 1.0;
  double mobility_ratio = 1.0;
  std::optional<double> gamma, alpha, chi, mobility, epsilon, j0;
};

struct StabilityConfig {
  int scan_every = 1;
  BlochScanConfig bloch;
  bool stop_at_instability = true;
  bool refine_critical = false;   ///< re-run the critical step with tau / 8
};

struct SweepAxes {
  std::vector<double> void_fraction, coating_thickness, gamma_ratio, mobility_ratio, mobility, alpha;
  int workers = 1;

  bool empty() const;
  std::size_t points() const;
};

struct SimulationConfig {
  UnitCellGeometry geometry;
  std::string mesh_preset = "coarse";   ///< coarse | paper | fine | custom
  MaterialParams matrix;
  bool matrix_epsilon_set = false;      ///< otherwise epsilon = 10 gamma
  CoatingConfig coating;
  double tau = 4e-3;
  double total_time = 1.5;
  double ramp = 1.0;
  StabilityConfig stability;
  NewtonOptions solver;
  int threads = 0;                      ///< 0 keeps the OpenMP default
  std::string output_dir = "out";
  bool vtk = true;
  MacroControl macro;
  SweepAxes sweep;

  MaterialParams matrix_params() const;
  MaterialParams coating_params() const;
  /// Geometry with the density preset applied.
  UnitCellGeometry resolved_geometry() const;

  /// Throws ConfigError on violated bounds.
  void validate() const;
  void validate_sweep() const;

  /// Sets one dotted key from its text value. Throws ConfigError for unknown
  /// keys and malformed values.
  void set(const std::string& key, const std::string& value);
  /// key = value lines in a fixed order, doubles in round-trip precision.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string canonical_text() const;
  /// FNV-1a 64 of the canonical text, hex.
  std::string hash() const;
};

/// Flat text format: one "dotted.key = value" per line, '#' starts a
/// comment, list values are comma separated.
SimulationConfig parse_config(const std::string& text, const std::string& origin = "<string>");
SimulationConfig load_config(const std::string& path);

/// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

}  // namespace hydrogel
