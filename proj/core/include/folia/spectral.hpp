#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "folia/model.hpp"
#include "folia/types.hpp"

namespace folia {

/// Spectral decomposition of the linearization A0 into center / stable /
/// unstable parts. Conventions follow the evolution equation v' + A0 v = G(v):
/// sigma_s lies in the right half plane (decaying forward in time), sigma_u in
/// the left half plane, sigma_c = {0}.
struct SpectralSplit {
  Matrix A0;
  Matrix P_c, P_s, P_u;        ///< spectral projections, P_c + P_s + P_u = I
  Matrix A_s_full, A_u_full;   ///< A0*P_s and A0*P_u on the full space
  std::vector<std::complex<double>> sigma_c, sigma_s, sigma_u;
  double omega = 0.0;          ///< exponential gap, 0.9 x true gap; NaN if undefined
  std::array<int, 3> dims{0, 0, 0};  ///< (m_c, m_s, m_u)

  // Orthonormal bases of the invariant subspaces and the restricted operators
  // M_l = B_l^T A0 B_l used for semigroup evaluation.
  Matrix B_c, B_s, B_u;
  Matrix M_s, M_u;
  double kappa_s = 1.0, kappa_u = 1.0;  ///< eigenbasis condition numbers
  double eps_center = 0.0;
};

/// A0 w = A(u*) w + (A'(u*) w) u* - F'(u*) w; equals -Df(u*).
Matrix linearize(const ProblemModel& model, const Vector& u_star);

struct SplitOptions {
  /// Center clustering tolerance; <=0 means 1e-6 * (1 + spectral radius).
  double eps_center = -1.0;
  /// Strict mode enforces m_c == m, rejects ambiguous clusters and nonzero
  /// imaginary-axis spectrum. Lenient mode builds a split for report paths.
  bool strict = true;
};

SpectralSplit split_spectrum(const Matrix& A0, int m, const SplitOptions& options = {});

enum class Stability { NormallyHyperbolic, NormallyStable, Fails };

struct ClassificationReport {
  Stability classification = Stability::Fails;
  std::string reason;  ///< empty unless classification == Fails
  int kernel_dim = 0;
  int rank = 0;
  int rank_sq = 0;
  bool kernel_dim_matches = false;   // (ii)
  bool semisimple = false;           // (iii)
  bool imaginary_axis_clear = false; // (iv)
  std::array<int, 3> dims{0, 0, 0};
  double omega = 0.0;
};

const char* to_string(Stability s);

/// Rank-based verification of the normal hyperbolicity conditions.
/// Failures are report outcomes, never exceptions.
ClassificationReport check_normally_hyperbolic(const SpectralSplit& split, int m);

/// e^{-A_s t} P_s v for t >= 0.
Vector stable_semigroup(const SpectralSplit& split, double t, const Vector& v);

/// e^{-A_u t} P_u v for t <= 0 (backward use only).
Vector unstable_group(const SpectralSplit& split, double t, const Vector& v);

namespace detail {
/// Group action without the sign restriction; test use only.
Vector unstable_group_any(const SpectralSplit& split, double t, const Vector& v);
}  // namespace detail

}  // namespace folia
