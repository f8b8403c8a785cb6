#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hydrogel/material.hpp"

namespace hydrogel {

enum class Phase : std::uint8_t { kMatrix = 0, kCoating = 1 };

/// Boundary tags, combinable as bit flags (corner nodes carry two sides).
enum BoundaryTag : std::uint8_t {
  kTagNone = 0,
  kTagLeft = 1,
  kTagRight = 2,
  kTagBottom = 4,
  kTagTop = 8,
  kTagVoid = 16,
};
inline constexpr std::uint8_t kTagExternal = kTagLeft | kTagRight | kTagBottom | kTagTop;

enum class MeshPreset { kCoarse, kPaper, kFine };

MeshPreset parse_mesh_preset(const std::string& name);
std::string to_string(MeshPreset preset);

struct UnitCellGeometry {
  double cell_size = 1.0;
  double void_fraction = 0.2;
  double coating_thickness = 0.0;
  int radial_layers = 15;
  int circumferential_divisions = 80;
  int coating_layers = 2;

  double void_radius() const;
  bool two_phase() const { return coating_thickness > 0.0; }
  void apply_preset(MeshPreset preset);
  void validate() const;
};

/// Mid-side edge entity. ends are corner node ids with ends[0] < ends[1];
/// the global normal is the counterclockwise rotation of ends[0] -> ends[1].
struct Edge {
  std::array<int, 2> ends;
  int mid;
};

/// 9-node quadrilateral. Node order: corners counterclockwise, then the
/// mid-side nodes of edges (0,1), (1,2), (2,3), (3,0), then the center.
struct Element {
  std::array<int, 9> nodes;
  std::array<int, 4> edges;
  /// +1 when the global edge normal points out of this element.
  std::array<int, 4> edge_sign;
  Phase phase = Phase::kMatrix;
};

/// follower = master + shift on the reference configuration.
struct PeriodicLink {
  int master;
  int follower;
  Vec2 shift;
};

struct PeriodicPairs {
  std::vector<PeriodicLink> nodes;  ///< includes three links for the corner group
  std::vector<PeriodicLink> edges;
  int corner_master = -1;
};

struct UnitCellMesh {
  Vec2 extent{1.0, 1.0};  ///< cell is [0, extent.x] x [0, extent.y]
  double void_radius = 0.0;
  double coating_outer_radius = 0.0;
  std::vector<Vec2> nodes;
  std::vector<Element> elements;
  std::vector<Edge> edges;
  std::vector<std::uint8_t> node_tags;
  std::vector<std::uint8_t> edge_tags;
  PeriodicPairs pairs;
  int probe_node = -1;  ///< point A on the void boundary, -1 without void

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  double cell_volume() const { return extent.x() * extent.y(); }
  Vec2 center() const { return 0.5 * extent; }
  bool has_void() const { return void_radius > 0.0; }
  bool has_coating() const;

  /// Builds edges, edge signs, boundary tags and periodic pairs from raw
  /// node coordinates and element connectivity.
  static UnitCellMesh assemble(Vec2 extent, std::vector<Vec2> nodes,
                               const std::vector<std::array<int, 9>>& connectivity,
                               const std::vector<Phase>& phases, double pair_tol);

  /// Area by 3x3 Gauss quadrature of the isoparametric map.
  double area() const;
};

/// Structured O-grid around a circular void, blended to the square frame.
UnitCellMesh generate_unit_cell(const UnitCellGeometry& g);

/// Void-free n x n cell of side a, used for homogeneous-material checks.
UnitCellMesh generate_square_cell(double a, int n);

/// n1 x n2 tiling of a cell with coincident nodes merged.
UnitCellMesh replicate(const UnitCellMesh& cell, int n1, int n2);

/// Pairs opposite external faces. Throws MeshError listing unmatched entities.
PeriodicPairs find_periodic_pairs(const UnitCellMesh& mesh, double tol);

/// Smallest element Jacobian determinant over all 3x3 Gauss points.
double min_jacobian(const UnitCellMesh& mesh);

void write_mesh(std::ostream& os, const UnitCellMesh& mesh);
UnitCellMesh read_mesh(std::istream& is);

}  // namespace hydrogel
