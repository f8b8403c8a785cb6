#pragma once

#include <array>

#include "hydrogel/material.hpp"

namespace hydrogel::shape {

/// 3-point Gauss-Legendre rule on [-1, 1].
inline constexpr std::array<double, 3> kGauss3Points{-0.774596669241483377, 0.0, 0.774596669241483377};
inline constexpr std::array<double, 3> kGauss3Weights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

struct QuadPoint {
  double xi;
  double eta;
  double weight;
};

/// Tensor-product 3x3 rule, xi fastest.
std::array<QuadPoint, 9> gauss3x3();

/// Reference coordinates of the nine nodes.
inline constexpr std::array<std::array<double, 2>, 9> kQ9Nodes{{{-1, -1},
                                                                 {1, -1},
                                                                 {1, 1},
                                                                 {-1, 1},
                                                                 {0, -1},
                                                                 {1, 0},
                                                                 {0, 1},
                                                                 {-1, 0},
                                                                 {0, 0}}};

/// Local node pairs (corner, corner, mid) of the four edges.
inline constexpr std::array<std::array<int, 3>, 4> kQ9Edges{{{0, 1, 4}, {1, 2, 5}, {2, 3, 6}, {3, 0, 7}}};

struct Q9Values {
  std::array<double, 9> N;
  std::array<Vec2, 9> dN;  ///< derivatives with respect to (xi, eta)
};

Q9Values q9(double xi, double eta);

/// Lowest-order Raviart-Thomas basis on the reference square. Function k
/// carries unit outward flux through local edge k and zero through the others.
std::array<Vec2, 4> rt0(double xi, double eta);

/// Reference divergence of every rt0 function.
inline constexpr double kRt0Divergence = 0.25;

/// Reference position of a point on local edge e at edge parameter t in [-1, 1],
/// running from the first to the second corner of the edge.
Vec2 edge_point(int e, double t);

}  // namespace hydrogel::shape
