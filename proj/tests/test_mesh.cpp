#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "hydrogel/errors.hpp"
#include "hydrogel/mesh.hpp"
#include "hydrogel/shape.hpp"

using namespace hydrogel;

namespace {

UnitCellGeometry small_geometry(double f0 = 0.2, double omega = 0.0) {
  UnitCellGeometry g;
  g.void_fraction = f0;
  g.coating_thickness = omega;
  g.circumferential_divisions = 16;
  g.radial_layers = 4;
  return g;
}

std::pair<long long, long long> key(const Vec2& x) {
  return {std::llround(x.x() * 1e7), std::llround(x.y() * 1e7)};
}

Vec2 rotate90(const Vec2& x, const Vec2& c) { return c + Vec2(-(x.y() - c.y()), x.x() - c.x()); }
Vec2 mirror_x(const Vec2& x, const Vec2& c) { return Vec2(2 * c.x() - x.x(), x.y()); }
Vec2 mirror_diag(const Vec2& x, const Vec2&) { return Vec2(x.y(), x.x()); }

int count_external_nodes(const UnitCellMesh& m) {
  int n = 0;
  for (auto t : m.node_tags) n += (t & kTagExternal) != 0;
  return n;
}

}  // namespace

TEST_SUITE("mesh") {
  TEST_CASE("reference Q9 and RT0 bases") {
    for (int a = 0; a < 9; ++a) {
      const auto v = shape::q9(shape::kQ9Nodes[a][0], shape::kQ9Nodes[a][1]);
      for (int b = 0; b < 9; ++b) CHECK(v.N[b] == doctest::Approx(a == b ? 1.0 : 0.0));
    }
    const auto v = shape::q9(0.3, -0.2);
    double sum = 0;
    Vec2 dsum = Vec2::Zero();
    for (int a = 0; a < 9; ++a) {
      sum += v.N[a];
      dsum += v.dN[a];
    }
    CHECK(sum == doctest::Approx(1.0));
    CHECK(dsum.norm() < 1e-14);

    // unit outward flux through its own edge, none through the others
    const Vec2 normals[4] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
    for (int k = 0; k < 4; ++k)
      for (int e = 0; e < 4; ++e) {
        double flux = 0;
        for (int q = 0; q < 3; ++q) {
          const Vec2 x = shape::edge_point(e, shape::kGauss3Points[q]);
          flux += shape::kGauss3Weights[q] * shape::rt0(x.x(), x.y())[k].dot(normals[e]);
        }
        CHECK(flux == doctest::Approx(k == e ? 1.0 : 0.0));
      }
  }

  TEST_CASE("paper preset density and invariants") {
    UnitCellGeometry g;
    g.void_fraction = 0.2;
    g.apply_preset(MeshPreset::kPaper);
    const auto m = generate_unit_cell(g);
    CHECK(m.num_elements() >= 5000);
    CHECK(m.num_elements() <= 9000);
    CHECK(min_jacobian(m) > 0);
    CHECK(m.has_void());
    CHECK_FALSE(m.has_coating());

    g.apply_preset(MeshPreset::kCoarse);
    const auto c = generate_unit_cell(g);
    CHECK(c.num_elements() == doctest::Approx(1200).epsilon(0.2));
    g.apply_preset(MeshPreset::kFine);
    CHECK(generate_unit_cell(g).num_elements() == doctest::Approx(12000).epsilon(0.2));
  }

  TEST_CASE("probe point sits on the void boundary on the +x axis") {
    const auto m = generate_unit_cell(small_geometry());
    const Vec2 x = m.nodes[m.probe_node];
    CHECK(x.y() == doctest::Approx(0.5));
    CHECK(x.x() > 0.5);
    CHECK((x - m.center()).norm() == doctest::Approx(std::sqrt(0.2 / std::numbers::pi)));
    CHECK((m.node_tags[m.probe_node] & kTagVoid) != 0);
  }

  TEST_CASE("coating band") {
    auto g = small_geometry(0.2, 0.02);
    g.coating_layers = 2;
    const auto m = generate_unit_cell(g);
    const double r0 = g.void_radius();
    int coated = 0;
    for (const auto& el : m.elements) {
      if (el.phase != Phase::kCoating) continue;
      ++coated;
      const double r = (m.nodes[el.nodes[8]] - m.center()).norm();
      CHECK(r > r0);
      CHECK(r < r0 + 0.02);
    }
    CHECK(coated == 2 * g.circumferential_divisions);
    CHECK(m.has_coating());
    CHECK(m.coating_outer_radius == doctest::Approx(r0 + 0.02));
  }

  TEST_CASE("large void ligament is resolved") {
    auto g = small_geometry(0.5);
    const auto m = generate_unit_cell(g);
    CHECK(g.void_radius() == doctest::Approx(0.3989).epsilon(1e-4));
    CHECK(0.5 - g.void_radius() == doctest::Approx(0.1011).epsilon(1e-3));
    int on_ligament = 0;
    for (const auto& x : m.nodes) on_ligament += std::abs(x.y() - 0.5) < 1e-12 && x.x() > 0.5;
    const int elements_across = (on_ligament - 1) / 2;
    CHECK(elements_across >= 3);
    CHECK(min_jacobian(m) > 0);
  }

  TEST_CASE("invalid geometry is rejected") {
    auto g = small_geometry(0.8);
    CHECK_THROWS_AS(generate_unit_cell(g), ConfigError);
    g = small_geometry(0.5, 0.15);
    CHECK_THROWS_AS(generate_unit_cell(g), ConfigError);
    g = small_geometry();
    g.circumferential_divisions = 12;
    CHECK_THROWS_AS(generate_unit_cell(g), ConfigError);
    CHECK_THROWS_AS(parse_mesh_preset("huge"), ConfigError);
  }

  TEST_CASE("D4 symmetry of the node set") {
    const auto m = generate_unit_cell(small_geometry(0.3, 0.03));
    std::set<std::pair<long long, long long>> keys;
    for (const auto& x : m.nodes) keys.insert(key(x));
    for (auto op : {rotate90, mirror_x, mirror_diag}) {
      int missing = 0;
      for (const auto& x : m.nodes) missing += !keys.count(key(op(x, m.center())));
      CHECK(missing == 0);
    }
  }

  TEST_CASE("edge orientation is globally consistent") {
    const auto m = generate_unit_cell(small_geometry(0.2, 0.02));
    std::vector<int> uses(m.num_edges(), 0), sign_sum(m.num_edges(), 0);
    for (const auto& el : m.elements) {
      Vec2 centroid = m.nodes[el.nodes[8]];
      for (int k = 0; k < 4; ++k) {
        const auto& ed = m.edges[el.edges[k]];
        ++uses[el.edges[k]];
        sign_sum[el.edges[k]] += el.edge_sign[k];
        const Vec2 d = m.nodes[ed.ends[1]] - m.nodes[ed.ends[0]];
        const Vec2 n(-d.y(), d.x());
        const double outward = n.dot(m.nodes[ed.mid] - centroid);
        CHECK((outward > 0 ? 1 : -1) == el.edge_sign[k]);
      }
    }
    for (int e = 0; e < m.num_edges(); ++e) {
      if (uses[e] == 2) CHECK(sign_sum[e] == 0);
      else {
        CHECK(uses[e] == 1);
        CHECK(m.edge_tags[e] != kTagNone);
      }
      CHECK(m.edges[e].ends[0] < m.edges[e].ends[1]);
    }
  }

  TEST_CASE("periodic pairing") {
    const auto m = generate_unit_cell(small_geometry());
    const auto& p = m.pairs;
    CHECK(static_cast<int>(p.nodes.size()) == (count_external_nodes(m) - 4) / 2 + 3);
    std::map<int, int> partner;
    std::set<int> followers;
    for (const auto& l : p.nodes) {
      CHECK(followers.insert(l.follower).second);
      const Vec2 d = m.nodes[l.follower] - m.nodes[l.master] - l.shift;
      CHECK(d.cwiseAbs().maxCoeff() <= 1e-9);
      const bool lattice = (l.shift - Vec2(1, 0)).norm() < 1e-15 || (l.shift - Vec2(0, 1)).norm() < 1e-15 ||
                           (l.shift - Vec2(1, 1)).norm() < 1e-15;
      CHECK(lattice);
      if (l.master != p.corner_master) {
        partner[l.master] = l.follower;
        partner[l.follower] = l.master;
      }
    }
    for (const auto& [a, b] : partner) CHECK(partner.at(b) == a);
    CHECK(m.nodes[p.corner_master].norm() < 1e-15);

    int external_edges = 0;
    for (auto t : m.edge_tags) external_edges += (t & kTagExternal) != 0;
    CHECK(static_cast<int>(p.edges.size()) * 2 == external_edges);
    for (const auto& l : p.edges) {
      const Vec2 d = m.nodes[m.edges[l.follower].mid] - m.nodes[m.edges[l.master].mid] - l.shift;
      CHECK(d.cwiseAbs().maxCoeff() <= 1e-9);
    }
  }

  TEST_CASE("perturbed boundary node breaks pairing") {
    auto m = generate_unit_cell(small_geometry());
    int victim = -1;
    for (int n = 0; n < m.num_nodes(); ++n)
      if (m.node_tags[n] == kTagRight) {
        victim = n;
        break;
      }
    REQUIRE(victim >= 0);
    m.nodes[victim].y() += 10 * 1e-9;
    CHECK_THROWS_AS(find_periodic_pairs(m, 1e-9), MeshError);
    try {
      find_periodic_pairs(m, 1e-9);
    } catch (const MeshError& e) {
      CHECK(std::string(e.what()).find("node " + std::to_string(victim)) != std::string::npos);
    }
  }

  TEST_CASE("pairs map onto pairs of the rotated mesh") {
    const auto m = generate_unit_cell(small_geometry());
    std::vector<Vec2> rotated;
    for (const auto& x : m.nodes) rotated.push_back(rotate90(x, m.center()));
    std::vector<std::array<int, 9>> conn;
    std::vector<Phase> phases;
    for (const auto& el : m.elements) {
      conn.push_back(el.nodes);
      phases.push_back(el.phase);
    }
    const auto r = UnitCellMesh::assemble(m.extent, rotated, conn, phases, 1e-9);
    auto pair_set = [](const UnitCellMesh& mesh, bool rotate) {
      std::set<std::pair<std::pair<long long, long long>, std::pair<long long, long long>>> s;
      for (const auto& l : mesh.pairs.nodes) {
        Vec2 a = mesh.nodes[l.master], b = mesh.nodes[l.follower];
        if (rotate) {
          a = rotate90(a, mesh.center());
          b = rotate90(b, mesh.center());
        }
        auto ka = key(a), kb = key(b);
        if (kb < ka) std::swap(ka, kb);
        s.insert({ka, kb});
      }
      return s;
    };
    const auto original_rotated = pair_set(m, true);
    const auto of_rotated = pair_set(r, false);
    // corner group links differ by choice of master; compare the face pairs
    int matched = 0;
    for (const auto& pr : of_rotated) matched += original_rotated.count(pr);
    CHECK(matched >= static_cast<int>(of_rotated.size()) - 3);
  }

  TEST_CASE("area and void convergence") {
    auto void_error = [](int nt) {
      UnitCellGeometry g;
      g.void_fraction = 0.2;
      g.circumferential_divisions = nt;
      g.radial_layers = nt / 4;
      const auto m = generate_unit_cell(g);
      const double void_area = 1.0 - m.area();
      return std::abs(void_area - std::numbers::pi * g.void_radius() * g.void_radius());
    };
    const double e1 = void_error(16), e2 = void_error(32);
    CHECK(e1 < 1e-2);
    CHECK(e1 / e2 > 3.5);

    const auto sq = generate_square_cell(2.0, 3);
    CHECK(sq.area() == doctest::Approx(4.0).epsilon(1e-14));
    CHECK_FALSE(sq.has_void());
  }

  TEST_CASE("replication merges shared faces") {
    const auto m = generate_unit_cell(small_geometry());
    const auto s = replicate(m, 2, 1);
    CHECK(s.num_elements() == 2 * m.num_elements());
    int left = 0;
    for (auto t : m.node_tags) left += (t & kTagLeft) != 0;
    CHECK(s.num_nodes() == 2 * m.num_nodes() - left);
    CHECK(s.extent.x() == doctest::Approx(2.0));
    CHECK(s.area() == doctest::Approx(2.0 * m.area()).epsilon(1e-12));
    const auto q = replicate(m, 2, 2);
    CHECK(q.pairs.nodes.size() > 0);
    CHECK(q.num_elements() == 4 * m.num_elements());
    CHECK(q.probe_node == m.probe_node);
  }

  TEST_CASE("text round trip") {
    const auto m = generate_unit_cell(small_geometry(0.2, 0.02));
    std::stringstream ss;
    write_mesh(ss, m);
    const auto r = read_mesh(ss);
    REQUIRE(r.num_nodes() == m.num_nodes());
    for (int n = 0; n < m.num_nodes(); ++n) CHECK(r.nodes[n] == m.nodes[n]);
    CHECK(r.num_edges() == m.num_edges());
    CHECK(r.probe_node == m.probe_node);
    CHECK(r.void_radius == m.void_radius);
    CHECK(r.pairs.nodes.size() == m.pairs.nodes.size());
    for (int e = 0; e < m.num_elements(); ++e) CHECK(r.elements[e].phase == m.elements[e].phase);

    std::stringstream bad("hydrogel-mesh 1\nextent 1 1\nnonsense");
    CHECK_THROWS_AS(read_mesh(bad), MeshError);
  }
}
