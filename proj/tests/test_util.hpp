#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <string>

#include "hydrogel/fem.hpp"
#include "hydrogel/mesh.hpp"

namespace hydrogel::test {

template <class A, class B>
double rel_err(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline std::shared_ptr<const UnitCellMesh> cell_mesh(double f0, int circumferential, int radial,
                                                     double omega = 0.0, int coating_layers = 2) {
  UnitCellGeometry g;
  g.void_fraction = f0;
  g.coating_thickness = omega;
  g.circumferential_divisions = circumferential;
  g.radial_layers = radial;
  g.coating_layers = coating_layers;
  return std::make_shared<const UnitCellMesh>(generate_unit_cell(g));
}

inline std::shared_ptr<const UnitCellMesh> preset_mesh(double f0, MeshPreset preset) {
  UnitCellGeometry g;
  g.void_fraction = f0;
  g.apply_preset(preset);
  return std::make_shared<const UnitCellMesh>(generate_unit_cell(g));
}

inline std::shared_ptr<const Model> make_model(std::shared_ptr<const UnitCellMesh> mesh,
                                               const MaterialParams& m = MaterialParams::reference()) {
  return std::make_shared<const Model>(Model::build(std::move(mesh), m));
}

}  // namespace hydrogel::test
