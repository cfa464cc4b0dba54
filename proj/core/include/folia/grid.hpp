#pragma once

#include <vector>

#include "folia/types.hpp"

namespace folia {

enum class GridDirection { Forward, Backward };

struct GridSpec {
  int N = 128;             ///< number of segments (N+1 nodes), N >= 32
  double T = 0.0;          ///< horizon; <=0 means 14/sigma
  double first_step = 0.0; ///< target step at t=0; <=0 means 0.01/sigma
};

/// Discretized exponentially weighted trajectory. Forward grids run over
/// [0, T] with nodes clustered at 0; backward grids over [-T, 0] with nodes
/// clustered at 0. Component values are ambient n-vectors lying in the
/// respective spectral subspaces.
struct TrajectoryGrid {
  GridDirection direction = GridDirection::Forward;
  double sigma = 0.0;
  std::vector<double> nodes;
  std::vector<Vector> x, y, z;

  int segments() const { return static_cast<int>(nodes.size()) - 1; }
  double horizon() const;

  /// max_j e^{sigma |t_j|} (|x_j| + |y_j| + |z_j|).
  double weighted_norm() const;
};

/// Geometric node layout t_j = T (q^j - 1)/(q^N - 1) (mirrored for backward
/// grids), with q chosen so the step at t = 0 matches spec.first_step.
/// Values are zero-initialized n-vectors. Requires N >= 32 and T >= 10/sigma.
TrajectoryGrid make_grid(GridDirection direction, double sigma, const GridSpec& spec,
                         int n);

namespace quadrature {

/// phi1(z) = (e^z - 1)/z, phi2(z) = (e^z - 1 - z)/z^2, and matrix versions.
double phi1(double z);
double phi2(double z);
Matrix phi1(const Matrix& Z);
Matrix phi2(const Matrix& Z);

/// C_j ~= integral of R over [t_j, t_N] on a forward grid, integrating the
/// weighted linear interpolant e^{-sigma t} * lin(e^{sigma t} R) exactly on
/// each cell. Exact whenever R(t) = e^{-sigma t} * (a + b t).
std::vector<Vector> integral_to_horizon(const std::vector<double>& nodes,
                                        const std::vector<Vector>& R, double sigma);

}  // namespace quadrature

}  // namespace folia
