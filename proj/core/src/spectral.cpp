#include "folia/spectral.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace folia {

Matrix linearize(const ProblemModel& model, const Vector& u_star) {
  double residual = eval_rhs(model, u_star).norm();
  if (residual > 1e-10) {
    throw DomainError("linearize: u_star is not an equilibrium, |f(u_star)| = " +
                      std::to_string(residual));
  }
  Matrix A0 = model.A(u_star) - model.dF(u_star);
  Vector e = Vector::Zero(model.n);
  for (int i = 0; i < model.n; ++i) {
    e(i) = 1.0;
    A0.col(i) += model.dA(u_star, e) * u_star;
    e(i) = 0.0;
  }
  return A0;
}

namespace {

struct SchurBlock {
  int start = 0;
  int size = 1;
  std::complex<double> eig[2];
};

std::vector<SchurBlock> scan_blocks(const Matrix& T) {
  const int n = static_cast<int>(T.rows());
  std::vector<SchurBlock> blocks;
  int i = 0;
  while (i < n) {
    SchurBlock b;
    b.start = i;
    if (i + 1 < n && T(i + 1, i) != 0.0) {
      b.size = 2;
      double a = T(i, i), bb = T(i, i + 1);
      double c = T(i + 1, i), d = T(i + 1, i + 1);
      double mean = 0.5 * (a + d);
      double disc = 0.25 * (a - d) * (a - d) + bb * c;
      if (disc < 0.0) {
        double im = std::sqrt(-disc);
        b.eig[0] = {mean, im};
        b.eig[1] = {mean, -im};
      } else {
        double rt = std::sqrt(disc);
        b.eig[0] = {mean + rt, 0.0};
        b.eig[1] = {mean - rt, 0.0};
      }
    } else {
      b.size = 1;
      b.eig[0] = {T(i, i), 0.0};
    }
    blocks.push_back(b);
    i += b.size;
  }
  return blocks;
}

enum Cluster { kCenter = 0, kStable = 1, kUnstable = 2 };

Cluster cluster_of(const std::complex<double>& eig, double eps) {
  if (std::abs(eig.real()) < eps) return kCenter;
  return eig.real() > 0.0 ? kStable : kUnstable;
}

// Moves the selected eigenvalues of the real Schur pair (T, Q) to the leading
// position. select is per scalar position; whole 2x2 blocks must be selected
// together.
void reorder_leading(Matrix& T, Matrix& Q, const std::vector<int>& select) {
  const lapack_int n = static_cast<lapack_int>(T.rows());
  if (n == 0) return;
  std::vector<lapack_int> sel(select.begin(), select.end());
  std::vector<double> wr(n), wi(n);
  lapack_int m_out = 0;
  double s = 0.0, sep = 0.0;
  lapack_int info =
      LAPACKE_dtrsen(LAPACK_COL_MAJOR, 'N', 'V', sel.data(), n, T.data(), n, Q.data(),
                     n, wr.data(), wi.data(), &m_out, &s, &sep);
  if (info != 0) {
    throw SpectralError("Schur reordering failed (dtrsen info=" + std::to_string(info) +
                        ")");
  }
}

// Solves T11 X - X T22 = C for quasi-triangular T11, T22.
Matrix solve_sylvester(const Matrix& T11, const Matrix& T22, const Matrix& C) {
  const lapack_int p = static_cast<lapack_int>(T11.rows());
  const lapack_int q = static_cast<lapack_int>(T22.rows());
  Matrix X = C;
  double scale = 1.0;
  lapack_int info = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'N', 'N', -1, p, q, T11.data(), p,
                                   T22.data(), q, X.data(), p, &scale);
  if (info < 0) {
    throw SpectralError("Sylvester solve failed (dtrsyl info=" + std::to_string(info) +
                        ")");
  }
  return X / scale;
}

// Spectral projection onto the invariant subspace of the leading k x k block.
Matrix projection_from_leading(const Matrix& T, const Matrix& Q, int k) {
  const int n = static_cast<int>(T.rows());
  if (k <= 0) return Matrix::Zero(n, n);
  if (k >= n) return Matrix::Identity(n, n);
  Matrix X = solve_sylvester(T.topLeftCorner(k, k), T.bottomRightCorner(n - k, n - k),
                             -T.topRightCorner(k, n - k));
  Matrix PT = Matrix::Zero(n, n);
  PT.topLeftCorner(k, k).setIdentity();
  PT.topRightCorner(k, n - k) = -X;
  return Q * PT * Q.transpose();
}

// Orthonormal basis of the range of a (non-orthogonal) projection of known rank.
Matrix range_basis(const Matrix& P, int rank) {
  const int n = static_cast<int>(P.rows());
  if (rank == 0) return Matrix(n, 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(P);
  return qr.householderQ() * Matrix::Identity(n, rank);
}

double eigenbasis_condition(const Matrix& M) {
  if (M.rows() == 0) return 1.0;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(M.cast<std::complex<double>>());
  if (es.info() != Eigen::Success) return 1e16;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(es.eigenvectors());
  double smin = svd.singularValues().minCoeff();
  double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0)) return 1e16;
  return smax / smin;
}

}  // namespace

SpectralSplit split_spectrum(const Matrix& A0, int m, const SplitOptions& options) {
  const int n = static_cast<int>(A0.rows());
  if (n == 0 || A0.cols() != n) throw SpectralError("split_spectrum: A0 must be square");
  if (!A0.allFinite()) throw SpectralError("split_spectrum: A0 has non-finite entries");

  Eigen::RealSchur<Matrix> schur(A0);
  if (schur.info() != Eigen::Success)
    throw SpectralError("split_spectrum: Schur decomposition failed");
  Matrix T = schur.matrixT();
  Matrix Q = schur.matrixU();

  auto blocks = scan_blocks(T);
  double radius = 0.0;
  for (const auto& b : blocks)
    for (int k = 0; k < b.size; ++k) radius = std::max(radius, std::abs(b.eig[k]));
  const double eps =
      options.eps_center > 0.0 ? options.eps_center : 1e-6 * (1.0 + radius);

  if (options.strict) {
    for (const auto& b : blocks) {
      for (int k = 0; k < b.size; ++k) {
        const auto& e = b.eig[k];
        double re = std::abs(e.real()), im = std::abs(e.imag());
        if (re < eps && im >= eps) {
          throw SpectralError(
              "split_spectrum: nonzero purely imaginary eigenvalue at Re=" +
              std::to_string(e.real()) + ", Im=" + std::to_string(e.imag()));
        }
        if (re >= eps && re < 2.0 * eps && im < eps) {
          throw SpectralError(
              "split_spectrum: eigenvalue with Re=" + std::to_string(e.real()) +
              " inside the ambiguity annulus [eps, 2 eps); clustering is not "
              "well separated at eps=" +
              std::to_string(eps));
        }
      }
    }
  }

  // Reorder the Schur form into contiguous clusters (center, stable, unstable).
  std::vector<int> select(n, 0);
  for (const auto& b : blocks) {
    if (cluster_of(b.eig[0], eps) == kCenter)
      for (int k = 0; k < b.size; ++k) select[b.start + k] = 1;
  }
  reorder_leading(T, Q, select);

  blocks = scan_blocks(T);
  int mc = 0;
  for (const auto& b : blocks)
    if (cluster_of(b.eig[0], eps) == kCenter) mc += b.size;

  if (options.strict && mc != m) {
    throw SpectralError("split_spectrum: center cluster has dimension " +
                        std::to_string(mc) + " but the manifold dimension is " +
                        std::to_string(m));
  }

  if (mc < n) {
    Matrix T2 = T.bottomRightCorner(n - mc, n - mc);
    Matrix Q2 = Matrix::Identity(n - mc, n - mc);
    auto blocks2 = scan_blocks(T2);
    std::vector<int> select2(n - mc, 0);
    for (const auto& b : blocks2) {
      if (cluster_of(b.eig[0], eps) == kStable)
        for (int k = 0; k < b.size; ++k) select2[b.start + k] = 1;
    }
    reorder_leading(T2, Q2, select2);
    T.bottomRightCorner(n - mc, n - mc) = T2;
    T.topRightCorner(mc, n - mc) = T.topRightCorner(mc, n - mc) * Q2;
    Q.rightCols(n - mc) = Q.rightCols(n - mc) * Q2;
  }

  SpectralSplit split;
  split.A0 = A0;
  split.eps_center = eps;

  blocks = scan_blocks(T);
  int ms = 0, mu = 0;
  for (const auto& b : blocks) {
    Cluster c = cluster_of(b.eig[0], eps);
    for (int k = 0; k < b.size; ++k) {
      switch (c) {
        case kCenter: split.sigma_c.push_back(b.eig[k]); break;
        case kStable: split.sigma_s.push_back(b.eig[k]); ++ms; break;
        case kUnstable: split.sigma_u.push_back(b.eig[k]); ++mu; break;
      }
    }
  }
  split.dims = {mc, ms, mu};

  split.P_c = projection_from_leading(T, Q, mc);
  Matrix P_cs = projection_from_leading(T, Q, mc + ms);
  split.P_u = Matrix::Identity(n, n) - P_cs;
  split.P_s = P_cs - split.P_c;

  double gap = std::numeric_limits<double>::infinity();
  for (const auto& e : split.sigma_s) gap = std::min(gap, e.real());
  for (const auto& e : split.sigma_u) gap = std::min(gap, -e.real());
  split.omega = std::isfinite(gap) ? 0.9 * gap : std::numeric_limits<double>::quiet_NaN();

  split.A_s_full = A0 * split.P_s;
  split.A_u_full = A0 * split.P_u;

  split.B_c = Q.leftCols(mc);
  split.B_s = range_basis(split.P_s, ms);
  split.B_u = range_basis(split.P_u, mu);
  split.M_s = split.B_s.transpose() * A0 * split.B_s;
  split.M_u = split.B_u.transpose() * A0 * split.B_u;
  split.kappa_s = eigenbasis_condition(split.M_s);
  split.kappa_u = eigenbasis_condition(split.M_u);
  return split;
}

const char* to_string(Stability s) {
  switch (s) {
    case Stability::NormallyHyperbolic: return "NormallyHyperbolic";
    case Stability::NormallyStable: return "NormallyStable";
    default: return "Fails";
  }
}

namespace {

int svd_rank(const Matrix& M) {
  if (M.rows() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& sv = svd.singularValues();
  double smax = sv.size() > 0 ? sv(0) : 0.0;
  if (smax == 0.0) return 0;
  double tol = 1e-8 * smax;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++r;
  return r;
}

}  // namespace

ClassificationReport check_normally_hyperbolic(const SpectralSplit& split, int m) {
  const int n = static_cast<int>(split.A0.rows());
  ClassificationReport rep;
  rep.dims = split.dims;
  rep.omega = split.omega;

  rep.rank = svd_rank(split.A0);
  rep.rank_sq = svd_rank(split.A0 * split.A0);
  rep.kernel_dim = n - rep.rank;
  rep.kernel_dim_matches = (rep.kernel_dim == m);
  rep.semisimple = (rep.rank_sq == rep.rank);

  rep.imaginary_axis_clear = true;
  auto scan = [&](const std::vector<std::complex<double>>& eigs) {
    for (const auto& e : eigs) {
      if (std::abs(e.real()) < split.eps_center &&
          std::abs(e.imag()) >= split.eps_center) {
        rep.imaginary_axis_clear = false;
      }
    }
  };
  scan(split.sigma_c);
  scan(split.sigma_s);
  scan(split.sigma_u);

  if (!rep.kernel_dim_matches) {
    rep.classification = Stability::Fails;
    rep.reason = "kernel dimension " + std::to_string(rep.kernel_dim) +
                 " does not match the manifold dimension " + std::to_string(m);
  } else if (!rep.semisimple) {
    rep.classification = Stability::Fails;
    rep.reason = "0 not semi-simple (rank(A0^2) = " + std::to_string(rep.rank_sq) +
                 " != rank(A0) = " + std::to_string(rep.rank) + ")";
  } else if (!rep.imaginary_axis_clear) {
    rep.classification = Stability::Fails;
    rep.reason = "nonzero imaginary-axis spectrum";
  } else {
    rep.classification = split.sigma_u.empty() ? Stability::NormallyStable
                                               : Stability::NormallyHyperbolic;
  }
  return rep;
}

namespace detail {

Vector unstable_group_any(const SpectralSplit& split, double t, const Vector& v) {
  if (split.dims[2] == 0) return Vector::Zero(v.size());
  Vector coords = split.B_u.transpose() * (split.P_u * v);
  Matrix E = Matrix(-split.M_u * t).exp();
  return split.B_u * (E * coords);
}

}  // namespace detail

Vector stable_semigroup(const SpectralSplit& split, double t, const Vector& v) {
  if (t < 0.0) throw DomainError("stable_semigroup: t must be nonnegative");
  if (split.dims[1] == 0) return Vector::Zero(v.size());
  Vector coords = split.B_s.transpose() * (split.P_s * v);
  Matrix E = Matrix(-split.M_s * t).exp();
  return split.B_s * (E * coords);
}

Vector unstable_group(const SpectralSplit& split, double t, const Vector& v) {
  if (t > 0.0)
    throw DomainError("unstable_group: forward application (t > 0) is forbidden");
  return detail::unstable_group_any(split, t, v);
}

}  // namespace folia
