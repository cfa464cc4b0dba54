#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "folia/model.hpp"
#include "folia/spectral.hpp"
#include "folia/types.hpp"

namespace folia {

struct ChartOptions {
  double rho_0 = -1.0;      ///< chart radius; <=0 means min(0.3, rho_V/2)
  double newton_tol = 1e-11;
  int max_newton = 25;
  bool use_psi = true;      ///< false forces the direct equilibrium solve
};

/// Local chart of the equilibrium manifold as a graph over the center
/// subspace: x in range(P_c) |-> (phi_s(x), phi_u(x)) with phi(0) = 0 and
/// phi'(0) = 0. Evaluation is on demand and memoized (quantum 1e-12).
class EquilibriumChart {
 public:
  using PhiEval = std::function<std::pair<Vector, Vector>(const Vector&)>;
  using DphiEval = std::function<Matrix(const Vector&)>;

  EquilibriumChart(const ProblemModel* model, const SpectralSplit* split,
                   Vector u_star, double rho_0, PhiEval phi, DphiEval dphi);

  /// (phi_s(x), phi_u(x)); requires |x| <= rho_0.
  std::pair<Vector, Vector> phi(const Vector& x) const;
  /// phi_s(x) + phi_u(x).
  Vector phi_total(const Vector& x) const;
  /// Directional derivative of phi at x, as an n x n map on range(P_c).
  Matrix dphi(const Vector& x) const;

  const Vector& u_star() const { return u_star_; }
  double rho_0() const { return rho_0_; }
  const SpectralSplit& split() const { return *split_; }
  const ProblemModel& model() const { return *model_; }

 private:
  const ProblemModel* model_;
  const SpectralSplit* split_;
  Vector u_star_;
  double rho_0_;
  PhiEval phi_;
  DphiEval dphi_;

  struct Memo;
  std::shared_ptr<Memo> memo_;
};

/// Builds the chart from the registered parametrization when present,
/// otherwise by solving the equilibrium system over the hyperbolic subspace.
EquilibriumChart build_chart(const ProblemModel& model, const SpectralSplit& split,
                             const ProblemRegistryEntry& entry,
                             const ChartOptions& options = {});

std::pair<Vector, Vector> eval_phi(const EquilibriumChart& chart, const Vector& x);
Matrix eval_phi_derivative(const EquilibriumChart& chart, const Vector& x);

struct ChartVerification {
  double max_center_residual = 0.0;      ///< max |P_c G(x + phi(x))|
  double max_hyperbolic_residual = 0.0;  ///< max |P_l G(x + phi(x)) - A_l phi_l(x)|
  int samples = 0;
  bool pass = false;  ///< both residuals <= 1e-9
};

ChartVerification verify_chart(const EquilibriumChart& chart, int samples,
                               unsigned long long seed = 0x5eedULL);

}  // namespace folia
