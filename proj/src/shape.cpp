#include "hydrogel/shape.hpp"

namespace hydrogel::shape {

namespace {

struct Lagrange3 {
  std::array<double, 3> v;
  std::array<double, 3> d;
};

Lagrange3 lagrange3(double x) {
  return {{0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)},
          {x - 0.5, -2.0 * x, x + 0.5}};
}

// (xi index, eta index) into the 1D quadratic basis for each Q9 node
constexpr std::array<std::array<int, 2>, 9> kTensorIndex{
    {{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 0}, {2, 1}, {1, 2}, {0, 1}, {1, 1}}};

}  // namespace

std::array<QuadPoint, 9> gauss3x3() {
  std::array<QuadPoint, 9> q{};
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i)
      q[3 * j + i] = {kGauss3Points[i], kGauss3Points[j], kGauss3Weights[i] * kGauss3Weights[j]};
  return q;
}

Q9Values q9(double xi, double eta) {
  const auto lx = lagrange3(xi);
  const auto ly = lagrange3(eta);
  Q9Values out;
  for (int a = 0; a < 9; ++a) {
    const auto [ix, iy] = kTensorIndex[a];
    out.N[a] = lx.v[ix] * ly.v[iy];
    out.dN[a] = Vec2(lx.d[ix] * ly.v[iy], lx.v[ix] * ly.d[iy]);
  }
  return out;
}

std::array<Vec2, 4> rt0(double xi, double eta) {
  return {Vec2(0.0, -0.25 * (1.0 - eta)), Vec2(0.25 * (1.0 + xi), 0.0), Vec2(0.0, 0.25 * (1.0 + eta)),
          Vec2(-0.25 * (1.0 - xi), 0.0)};
}

Vec2 edge_point(int e, double t) {
  switch (e) {
    case 0: return {t, -1.0};
    case 1: return {1.0, t};
    case 2: return {-t, 1.0};
    default: return {-1.0, -t};
  }
}

}  // namespace hydrogel::shape
