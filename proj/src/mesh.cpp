#include "hydrogel/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "hydrogel/errors.hpp"
#include "hydrogel/shape.hpp"

namespace hydrogel {

MeshPreset parse_mesh_preset(const std::string& name) {
  if (name == "coarse") return MeshPreset::kCoarse;
  if (name == "paper") return MeshPreset::kPaper;
  if (name == "fine") return MeshPreset::kFine;
  throw ConfigError("unknown mesh preset '" + name + "' (expected coarse, paper or fine)");
}

std::string to_string(MeshPreset preset) {
  switch (preset) {
    case MeshPreset::kCoarse: return "coarse";
    case MeshPreset::kPaper: return "paper";
    case MeshPreset::kFine: return "fine";
  }
  return "coarse";
}

double UnitCellGeometry::void_radius() const {
  return cell_size * std::sqrt(void_fraction / std::numbers::pi);
}

void UnitCellGeometry::apply_preset(MeshPreset preset) {
  switch (preset) {
    case MeshPreset::kCoarse:
      circumferential_divisions = 80;
      radial_layers = 15;
      break;
    case MeshPreset::kPaper:
      circumferential_divisions = 160;
      radial_layers = 38;
      break;
    case MeshPreset::kFine:
      circumferential_divisions = 224;
      radial_layers = 54;
      break;
  }
}

void UnitCellGeometry::validate() const {
  std::ostringstream err;
  if (!(cell_size > 0)) err << "cell_size must be > 0; ";
  if (!(void_fraction > 0 && void_fraction < std::numbers::pi / 4))
    err << "void_fraction must lie in (0, pi/4), got " << void_fraction << "; ";
  if (coating_thickness < 0) err << "coating_thickness must be >= 0; ";
  if (void_fraction > 0 && !(void_radius() + coating_thickness < 0.5 * cell_size))
    err << "void radius " << void_radius() << " plus coating " << coating_thickness
        << " does not fit in half the cell (" << 0.5 * cell_size << "); ";
  if (circumferential_divisions < 8 || circumferential_divisions % 8 != 0)
    err << "circumferential_divisions must be a positive multiple of 8; ";
  if (radial_layers < 3) err << "radial_layers must be >= 3; ";
  if (two_phase()) {
    if (coating_layers < 2) err << "coating needs at least 2 element layers; ";
    if (radial_layers - coating_layers < 2) err << "need at least 2 matrix layers outside the coating; ";
  }
  const auto msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid unit-cell geometry: " + msg);
}

bool UnitCellMesh::has_coating() const {
  return std::any_of(elements.begin(), elements.end(),
                     [](const Element& e) { return e.phase == Phase::kCoating; });
}

namespace {

Mat2 element_jacobian(const UnitCellMesh& mesh, const Element& el, const shape::Q9Values& sv) {
  Mat2 J = Mat2::Zero();
  for (int a = 0; a < 9; ++a) J += mesh.nodes[el.nodes[a]] * sv.dN[a].transpose();
  return J;
}

struct SideEntity {
  int id;
  Vec2 x;
};

// Matches minus-side entities to plus-side entities shifted by `shift`,
// sorting along the coordinate `axis` that varies along the face.
void match_faces(std::vector<SideEntity> minus, std::vector<SideEntity> plus, const Vec2& shift, int axis,
                 double tol, std::vector<PeriodicLink>& out, std::vector<std::string>& offenders,
                 const char* what) {
  auto by_axis = [axis](const SideEntity& a, const SideEntity& b) { return a.x[axis] < b.x[axis]; };
  std::sort(minus.begin(), minus.end(), by_axis);
  std::sort(plus.begin(), plus.end(), by_axis);
  std::vector<bool> used(plus.size(), false);
  for (const auto& m : minus) {
    const Vec2 target = m.x + shift;
    auto it = std::lower_bound(plus.begin(), plus.end(), target[axis] - tol,
                               [axis](const SideEntity& p, double v) { return p.x[axis] < v; });
    bool found = false;
    for (; it != plus.end() && it->x[axis] <= target[axis] + tol; ++it) {
      const auto k = static_cast<std::size_t>(it - plus.begin());
      if (!used[k] && (it->x - target).cwiseAbs().maxCoeff() <= tol) {
        used[k] = true;
        out.push_back({m.id, it->id, shift});
        found = true;
        break;
      }
    }
    if (!found) {
      std::ostringstream os;
      os << what << " " << m.id << " at (" << m.x.x() << ", " << m.x.y() << ")";
      offenders.push_back(os.str());
    }
  }
  for (std::size_t k = 0; k < plus.size(); ++k)
    if (!used[k]) {
      std::ostringstream os;
      os << what << " " << plus[k].id << " at (" << plus[k].x.x() << ", " << plus[k].x.y() << ")";
      offenders.push_back(os.str());
    }
}

}  // namespace

double UnitCellMesh::area() const {
  const auto rule = shape::gauss3x3();
  double total = 0.0;
  for (const auto& el : elements)
    for (const auto& qp : rule) total += qp.weight * element_jacobian(*this, el, shape::q9(qp.xi, qp.eta)).determinant();
  return total;
}

double min_jacobian(const UnitCellMesh& mesh) {
  const auto rule = shape::gauss3x3();
  double jmin = std::numeric_limits<double>::infinity();
  for (const auto& el : mesh.elements)
    for (const auto& qp : rule)
      jmin = std::min(jmin, element_jacobian(mesh, el, shape::q9(qp.xi, qp.eta)).determinant());
  return jmin;
}

UnitCellMesh UnitCellMesh::assemble(Vec2 extent, std::vector<Vec2> nodes,
                                    const std::vector<std::array<int, 9>>& connectivity,
                                    const std::vector<Phase>& phases, double pair_tol) {
  UnitCellMesh mesh;
  mesh.extent = extent;
  mesh.nodes = std::move(nodes);
  mesh.elements.resize(connectivity.size());

  std::map<std::pair<int, int>, int> edge_index;
  std::vector<int> edge_uses;
  for (std::size_t e = 0; e < connectivity.size(); ++e) {
    Element& el = mesh.elements[e];
    el.nodes = connectivity[e];
    el.phase = phases.empty() ? Phase::kMatrix : phases[e];
    for (int k = 0; k < 4; ++k) {
      const int a = el.nodes[shape::kQ9Edges[k][0]];
      const int b = el.nodes[shape::kQ9Edges[k][1]];
      const int m = el.nodes[shape::kQ9Edges[k][2]];
      const auto key = std::minmax(a, b);
      auto [it, inserted] = edge_index.try_emplace({key.first, key.second}, mesh.num_edges());
      if (inserted) {
        mesh.edges.push_back({{key.first, key.second}, m});
        edge_uses.push_back(0);
      }
      el.edges[k] = it->second;
      el.edge_sign[k] = a > b ? 1 : -1;
      ++edge_uses[it->second];
    }
  }

  mesh.node_tags.assign(mesh.nodes.size(), kTagNone);
  mesh.edge_tags.assign(mesh.edges.size(), kTagNone);
  auto side_tag = [&](const Vec2& x) {
    std::uint8_t t = kTagNone;
    if (std::abs(x.x()) <= pair_tol) t |= kTagLeft;
    if (std::abs(x.x() - extent.x()) <= pair_tol) t |= kTagRight;
    if (std::abs(x.y()) <= pair_tol) t |= kTagBottom;
    if (std::abs(x.y() - extent.y()) <= pair_tol) t |= kTagTop;
    return t;
  };
  for (int e = 0; e < mesh.num_edges(); ++e) {
    if (edge_uses[e] != 1) continue;
    const auto& ed = mesh.edges[e];
    const std::array<int, 3> ids{ed.ends[0], ed.ends[1], ed.mid};
    std::uint8_t common = kTagExternal;
    for (int id : ids) common &= side_tag(mesh.nodes[id]);
    if (common != kTagNone) {
      mesh.edge_tags[e] = common;
      for (int id : ids) mesh.node_tags[id] |= side_tag(mesh.nodes[id]);
    } else {
      mesh.edge_tags[e] = kTagVoid;
      for (int id : ids) mesh.node_tags[id] |= kTagVoid;
    }
  }
  mesh.pairs = find_periodic_pairs(mesh, pair_tol);
  return mesh;
}

PeriodicPairs find_periodic_pairs(const UnitCellMesh& mesh, double tol) {
  PeriodicPairs pairs;
  std::vector<std::string> offenders;
  const Vec2 sx(mesh.extent.x(), 0.0);
  const Vec2 sy(0.0, mesh.extent.y());

  std::vector<SideEntity> left, right, bottom, top;
  int c_lb = -1, c_rb = -1, c_lt = -1, c_rt = -1;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const auto t = mesh.node_tags[n];
    const bool l = t & kTagLeft, r = t & kTagRight, b = t & kTagBottom, tp = t & kTagTop;
    if (l && b) c_lb = n;
    else if (r && b) c_rb = n;
    else if (l && tp) c_lt = n;
    else if (r && tp) c_rt = n;
    else if (l) left.push_back({n, mesh.nodes[n]});
    else if (r) right.push_back({n, mesh.nodes[n]});
    else if (b) bottom.push_back({n, mesh.nodes[n]});
    else if (tp) top.push_back({n, mesh.nodes[n]});
  }
  if (c_lb < 0 || c_rb < 0 || c_lt < 0 || c_rt < 0) throw MeshError("external boundary is missing a corner node");
  pairs.corner_master = c_lb;
  const Vec2 x0 = mesh.nodes[c_lb];
  for (auto [id, shift] : {std::pair{c_rb, sx}, std::pair{c_lt, sy}, std::pair{c_rt, Vec2(sx + sy)}}) {
    if ((mesh.nodes[id] - x0 - shift).cwiseAbs().maxCoeff() > tol) {
      std::ostringstream os;
      os << "corner node " << id;
      offenders.push_back(os.str());
    }
    pairs.nodes.push_back({c_lb, id, shift});
  }
  match_faces(left, right, sx, 1, tol, pairs.nodes, offenders, "node");
  match_faces(bottom, top, sy, 0, tol, pairs.nodes, offenders, "node");

  std::vector<SideEntity> el, er, eb, et;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const auto t = mesh.edge_tags[e];
    const SideEntity ent{e, mesh.nodes[mesh.edges[e].mid]};
    if (t & kTagLeft) el.push_back(ent);
    else if (t & kTagRight) er.push_back(ent);
    else if (t & kTagBottom) eb.push_back(ent);
    else if (t & kTagTop) et.push_back(ent);
  }
  match_faces(el, er, sx, 1, tol, pairs.edges, offenders, "edge");
  match_faces(eb, et, sy, 0, tol, pairs.edges, offenders, "edge");

  if (!offenders.empty()) {
    std::ostringstream os;
    os << "periodic pairing failed, mesh is not periodic within tol " << tol << "; unmatched:";
    const std::size_t shown = std::min<std::size_t>(offenders.size(), 20);
    for (std::size_t k = 0; k < shown; ++k) os << (k ? ", " : " ") << offenders[k];
    if (shown < offenders.size()) os << " ... (" << offenders.size() << " total)";
    throw MeshError(os.str());
  }
  return pairs;
}

UnitCellMesh generate_unit_cell(const UnitCellGeometry& g) {
  g.validate();
  const double a = g.cell_size;
  const double r0 = g.void_radius();
  const double r1 = r0 + g.coating_thickness;
  const int nt = g.circumferential_divisions;
  const int nr = g.radial_layers;
  const int nc = g.two_phase() ? g.coating_layers : 0;
  const int nm = nr - nc;
  const int ni = 2 * nt;      // nodes around
  const int nj = 2 * nr + 1;  // nodes across
  const Vec2 c(0.5 * a, 0.5 * a);
  constexpr double pi = std::numbers::pi;

  auto square_point = [&](int i) {
    // perimeter walked counterclockwise from the (0, 0) corner, equal spacing per side
    const int per_side = ni / 4;
    const int side = i / per_side;
    const double t = static_cast<double>(i % per_side) / per_side;
    switch (side) {
      case 0: return Vec2(t * a, 0.0);
      case 1: return Vec2(a, t * a);
      case 2: return Vec2(a - t * a, a);
      default: return Vec2(0.0, a - t * a);
    }
  };
  auto ray = [&](int i) {
    const double th = 1.25 * pi + pi * static_cast<double>(i) / nt;
    return Vec2(std::cos(th), std::sin(th));
  };

  std::vector<Vec2> nodes(static_cast<std::size_t>(ni) * nj);
  for (int j = 0; j < nj; ++j)
    for (int i = 0; i < ni; ++i) {
      Vec2 x;
      if (j <= 2 * nc && nc > 0) {
        const double r = r0 + (r1 - r0) * static_cast<double>(j) / (2 * nc);
        x = c + r * ray(i);
      } else {
        const double rho = static_cast<double>(j - 2 * nc) / (2 * nm);
        x = (1.0 - rho) * (c + r1 * ray(i)) + rho * square_point(i);
      }
      nodes[static_cast<std::size_t>(j) * ni + i] = x;
    }
  // exact coordinates on the frame so that opposite faces pair bit-for-bit
  for (int i = 0; i < ni; ++i) nodes[static_cast<std::size_t>(nj - 1) * ni + i] = square_point(i);

  auto id = [&](int i, int j) { return j * ni + ((i % ni) + ni) % ni; };
  std::vector<std::array<int, 9>> conn;
  std::vector<Phase> phases;
  conn.reserve(static_cast<std::size_t>(nt) * nr);
  for (int je = 0; je < nr; ++je)
    for (int ie = 0; ie < nt; ++ie) {
      const int i0 = 2 * ie, j0 = 2 * je;
      // local xi runs outward, local eta counterclockwise
      conn.push_back({id(i0, j0), id(i0, j0 + 2), id(i0 + 2, j0 + 2), id(i0 + 2, j0), id(i0, j0 + 1),
                      id(i0 + 1, j0 + 2), id(i0 + 2, j0 + 1), id(i0 + 1, j0), id(i0 + 1, j0 + 1)});
      phases.push_back(je < nc ? Phase::kCoating : Phase::kMatrix);
    }

  UnitCellMesh mesh = UnitCellMesh::assemble(Vec2(a, a), std::move(nodes), conn, phases, 1e-9 * a);
  mesh.void_radius = r0;
  mesh.coating_outer_radius = nc > 0 ? r1 : r0;
  mesh.probe_node = id(3 * nt / 4, 0);
  const double jmin = min_jacobian(mesh);
  if (!(jmin > 0)) {
    std::ostringstream os;
    os << "tangled blending: minimum element Jacobian " << jmin
       << " <= 0; increase radial_layers or circumferential_divisions";
    throw MeshError(os.str());
  }
  return mesh;
}

UnitCellMesh generate_square_cell(double a, int n) {
  if (n < 1 || !(a > 0)) throw ConfigError("square cell needs a > 0 and n >= 1");
  const int m = 2 * n + 1;
  std::vector<Vec2> nodes(static_cast<std::size_t>(m) * m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i)
      nodes[static_cast<std::size_t>(j) * m + i] = Vec2(a * i / (m - 1), a * j / (m - 1));
  auto id = [m](int i, int j) { return j * m + i; };
  std::vector<std::array<int, 9>> conn;
  for (int je = 0; je < n; ++je)
    for (int ie = 0; ie < n; ++ie) {
      const int i0 = 2 * ie, j0 = 2 * je;
      conn.push_back({id(i0, j0), id(i0 + 2, j0), id(i0 + 2, j0 + 2), id(i0, j0 + 2), id(i0 + 1, j0),
                      id(i0 + 2, j0 + 1), id(i0 + 1, j0 + 2), id(i0, j0 + 1), id(i0 + 1, j0 + 1)});
    }
  return UnitCellMesh::assemble(Vec2(a, a), std::move(nodes), conn, {}, 1e-9 * a);
}

UnitCellMesh replicate(const UnitCellMesh& cell, int n1, int n2) {
  if (n1 < 1 || n2 < 1) throw ConfigError("replication counts must be >= 1");
  const double q = 1e-7 * std::max(cell.extent.x(), cell.extent.y());
  std::map<std::pair<long long, long long>, int> lookup;
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 9>> conn;
  std::vector<Phase> phases;
  int probe = -1;
  for (int c2 = 0; c2 < n2; ++c2)
    for (int c1 = 0; c1 < n1; ++c1) {
      const Vec2 shift(c1 * cell.extent.x(), c2 * cell.extent.y());
      std::vector<int> remap(cell.nodes.size());
      for (std::size_t n = 0; n < cell.nodes.size(); ++n) {
        const Vec2 x = cell.nodes[n] + shift;
        const std::pair<long long, long long> key{std::llround(x.x() / q), std::llround(x.y() / q)};
        auto [it, inserted] = lookup.try_emplace(key, static_cast<int>(nodes.size()));
        if (inserted) nodes.push_back(x);
        remap[n] = it->second;
      }
      if (c1 == 0 && c2 == 0 && cell.probe_node >= 0) probe = remap[cell.probe_node];
      for (const auto& el : cell.elements) {
        std::array<int, 9> c{};
        for (int k = 0; k < 9; ++k) c[k] = remap[el.nodes[k]];
        conn.push_back(c);
        phases.push_back(el.phase);
      }
    }
  const Vec2 extent(n1 * cell.extent.x(), n2 * cell.extent.y());
  UnitCellMesh out = UnitCellMesh::assemble(extent, std::move(nodes), conn, phases, 1e-9 * extent.maxCoeff());
  out.void_radius = cell.void_radius;
  out.coating_outer_radius = cell.coating_outer_radius;
  out.probe_node = probe;
  return out;
}

void write_mesh(std::ostream& os, const UnitCellMesh& mesh) {
  os << "hydrogel-mesh 1\n" << std::setprecision(17);
  os << "extent " << mesh.extent.x() << ' ' << mesh.extent.y() << '\n';
  os << "void_radius " << mesh.void_radius << '\n';
  os << "coating_outer_radius " << mesh.coating_outer_radius << '\n';
  os << "probe " << mesh.probe_node << '\n';
  os << "nodes " << mesh.num_nodes() << '\n';
  for (int n = 0; n < mesh.num_nodes(); ++n) os << n << ' ' << mesh.nodes[n].x() << ' ' << mesh.nodes[n].y() << '\n';
  os << "elements " << mesh.num_elements() << '\n';
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    os << e << ' ' << (el.phase == Phase::kCoating ? "coating" : "matrix");
    for (int n : el.nodes) os << ' ' << n;
    os << '\n';
  }
  os << "edges " << mesh.num_edges() << '\n';
  for (int e = 0; e < mesh.num_edges(); ++e)
    os << e << ' ' << mesh.edges[e].ends[0] << ' ' << mesh.edges[e].ends[1] << ' ' << mesh.edges[e].mid << '\n';
  int ntags = 0;
  for (auto t : mesh.node_tags) ntags += t != kTagNone;
  for (auto t : mesh.edge_tags) ntags += t != kTagNone;
  os << "tags " << ntags << '\n';
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (mesh.node_tags[n] != kTagNone) os << "node " << n << ' ' << int(mesh.node_tags[n]) << '\n';
  for (int e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge_tags[e] != kTagNone) os << "edge " << e << ' ' << int(mesh.edge_tags[e]) << '\n';
  os << "end\n";
}

namespace {

void expect(std::istream& is, const std::string& word) {
  std::string got;
  if (!(is >> got) || got != word) throw MeshError("mesh file: expected '" + word + "', got '" + got + "'");
}

}  // namespace

UnitCellMesh read_mesh(std::istream& is) {
  expect(is, "hydrogel-mesh");
  int version = 0;
  is >> version;
  if (version != 1) throw MeshError("mesh file: unsupported version");
  double ex = 0, ey = 0, rv = 0, rc = 0;
  int probe = -1, nn = 0, ne = 0, ned = 0, ntags = 0;
  expect(is, "extent");
  is >> ex >> ey;
  expect(is, "void_radius");
  is >> rv;
  expect(is, "coating_outer_radius");
  is >> rc;
  expect(is, "probe");
  is >> probe;
  expect(is, "nodes");
  is >> nn;
  std::vector<Vec2> nodes(nn);
  for (int n = 0; n < nn; ++n) {
    int id = 0;
    is >> id >> nodes[n].x() >> nodes[n].y();
    if (id != n) throw MeshError("mesh file: node ids must be consecutive");
  }
  expect(is, "elements");
  is >> ne;
  std::vector<std::array<int, 9>> conn(ne);
  std::vector<Phase> phases(ne);
  for (int e = 0; e < ne; ++e) {
    int id = 0;
    std::string phase;
    is >> id >> phase;
    if (id != e) throw MeshError("mesh file: element ids must be consecutive");
    phases[e] = phase == "coating" ? Phase::kCoating : Phase::kMatrix;
    for (auto& n : conn[e]) {
      is >> n;
      if (n < 0 || n >= nn) throw MeshError("mesh file: element references unknown node");
    }
  }
  expect(is, "edges");
  is >> ned;
  std::vector<Edge> edges(ned);
  for (int e = 0; e < ned; ++e) {
    int id = 0;
    is >> id >> edges[e].ends[0] >> edges[e].ends[1] >> edges[e].mid;
  }
  expect(is, "tags");
  is >> ntags;
  std::vector<std::pair<std::string, std::pair<int, int>>> tags(ntags);
  for (auto& t : tags) is >> t.first >> t.second.first >> t.second.second;
  expect(is, "end");
  if (!is) throw MeshError("mesh file: truncated input");

  UnitCellMesh mesh = UnitCellMesh::assemble(Vec2(ex, ey), std::move(nodes), conn, phases, 1e-9 * std::max(ex, ey));
  if (mesh.num_edges() != ned) throw MeshError("mesh file: edge table inconsistent with elements");
  for (int e = 0; e < ned; ++e)
    if (mesh.edges[e].ends != edges[e].ends || mesh.edges[e].mid != edges[e].mid)
      throw MeshError("mesh file: edge table inconsistent with elements");
  for (const auto& [kind, v] : tags) {
    const auto& stored = kind == "node" ? mesh.node_tags : mesh.edge_tags;
    if (v.first < 0 || v.first >= static_cast<int>(stored.size()) || stored[v.first] != v.second)
      throw MeshError("mesh file: tag table inconsistent with geometry");
  }
  mesh.void_radius = rv;
  mesh.coating_outer_radius = rc;
  mesh.probe_node = probe;
  return mesh;
}

}  // namespace hydrogel
