#include "folia/grid.hpp"

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace folia {

double TrajectoryGrid::horizon() const {
  if (nodes.empty()) return 0.0;
  return direction == GridDirection::Forward ? nodes.back() : -nodes.front();
}

double TrajectoryGrid::weighted_norm() const {
  double norm = 0.0;
  for (size_t j = 0; j < nodes.size(); ++j) {
    double w = std::exp(sigma * std::abs(nodes[j]));
    norm = std::max(norm, w * (x[j].norm() + y[j].norm() + z[j].norm()));
  }
  return norm;
}

TrajectoryGrid make_grid(GridDirection direction, double sigma, const GridSpec& spec,
                         int n) {
  if (sigma <= 0.0) throw Error("make_grid: sigma must be positive");
  const int N = spec.N;
  if (N < 32) throw Error("make_grid: N must be at least 32");
  const double T = spec.T > 0.0 ? spec.T : 14.0 / sigma;
  if (T < 10.0 / sigma - 1e-12) throw Error("make_grid: T must be at least 10/sigma");
  const double h0 = spec.first_step > 0.0 ? spec.first_step : 0.01 / sigma;

  // Geometric ratio with first step h0: T (q-1)/(q^N - 1) = h0.
  std::vector<double> nodes(N + 1);
  if (h0 >= T / N * (1.0 - 1e-12)) {
    for (int j = 0; j <= N; ++j) nodes[j] = T * j / N;
  } else {
    auto first_step = [&](double q) {
      return T * (q - 1.0) / (std::pow(q, N) - 1.0);
    };
    double lo = 1.0 + 1e-14, hi = 2.0;
    while (first_step(hi) > h0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (first_step(mid) > h0 ? lo : hi) = mid;
    }
    const double q = 0.5 * (lo + hi);
    const double denom = std::pow(q, N) - 1.0;
    double qj = 1.0;
    for (int j = 0; j <= N; ++j) {
      nodes[j] = T * (qj - 1.0) / denom;
      qj *= q;
    }
    nodes[N] = T;
  }

  TrajectoryGrid grid;
  grid.direction = direction;
  grid.sigma = sigma;
  grid.nodes.resize(N + 1);
  if (direction == GridDirection::Forward) {
    grid.nodes = nodes;
  } else {
    for (int j = 0; j <= N; ++j) grid.nodes[j] = -nodes[N - j];
    grid.nodes[N] = 0.0;
  }
  grid.x.assign(N + 1, Vector::Zero(n));
  grid.y.assign(N + 1, Vector::Zero(n));
  grid.z.assign(N + 1, Vector::Zero(n));
  return grid;
}

namespace quadrature {

double phi1(double z) {
  if (z == 0.0) return 1.0;
  return std::expm1(z) / z;
}

double phi2(double z) {
  if (std::abs(z) < 0.5) {
    // sum_{k>=0} z^k / (k+2)!
    double term = 0.5, sum = 0.5;
    for (int k = 1; k <= 18; ++k) {
      term *= z / (k + 2);
      sum += term;
    }
    return sum;
  }
  return (std::expm1(z) - z) / (z * z);
}

// exp of [[Z, I, 0], [0, 0, I], [0, 0, 0]] carries phi1(Z) and phi2(Z) in its
// top-row blocks.
static std::pair<Matrix, Matrix> phi_pair(const Matrix& Z) {
  const auto k = Z.rows();
  if (k == 0) return {Matrix(0, 0), Matrix(0, 0)};
  Matrix Aug = Matrix::Zero(3 * k, 3 * k);
  Aug.topLeftCorner(k, k) = Z;
  Aug.block(0, k, k, k).setIdentity();
  Aug.block(k, 2 * k, k, k).setIdentity();
  Matrix E = Aug.exp();
  return {E.block(0, k, k, k), E.block(0, 2 * k, k, k)};
}

Matrix phi1(const Matrix& Z) { return phi_pair(Z).first; }
Matrix phi2(const Matrix& Z) { return phi_pair(Z).second; }

std::vector<Vector> integral_to_horizon(const std::vector<double>& nodes,
                                        const std::vector<Vector>& R, double sigma) {
  const int N = static_cast<int>(nodes.size()) - 1;
  std::vector<Vector> C(N + 1);
  C[N] = Vector::Zero(R[N].size());
  for (int j = N - 1; j >= 0; --j) {
    double h = nodes[j + 1] - nodes[j];
    double x = sigma * h;
    double p1 = phi1(-x), p2 = phi2(-x);
    C[j] = C[j + 1] + h * p2 * R[j] + h * (p1 - p2) * std::exp(x) * R[j + 1];
  }
  return C;
}

}  // namespace quadrature

}  // namespace folia
