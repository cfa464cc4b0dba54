#pragma once

#include <optional>
#include <vector>

#include "folia/lpsolver.hpp"
#include "folia/model.hpp"
#include "folia/types.hpp"

namespace folia {

struct FlowOptions {
  double tol = 1e-10;      ///< absolute and relative error control
  double max_step = 0.0;   ///< 0 = unlimited
  long max_steps = 2000000;
  /// Ball-exit detection; defaults to the model's ball_center / rho_V.
  std::optional<Vector> ball_center;
  double ball_radius = 0.0;
};

struct FlowResult {
  std::vector<double> times;
  std::vector<Vector> states;
  Vector terminal_state;
  long accepted_steps = 0;
  long rejected_steps = 0;
  bool ball_exit = false;  ///< trajectory left the validity ball (reported, not thrown)
  double exit_time = 0.0;
};

/// Adaptive Dormand-Prince 5(4) integration of u' = f(u) from u0 to t_final
/// (negative t_final integrates backward).
FlowResult integrate(const ProblemModel& model, const Vector& u0, double t_final,
                     const FlowOptions& options = {});

/// Negated least-squares slope of log|u(t) - u_inf| over the window where the
/// deviation lies in [1e-10, 1e-2]. Throws when the window is empty.
double estimate_decay_rate(const FlowResult& result, const Vector& u_infty);

struct FiberVerification {
  double terminal_distance = 0.0;
  double decay_rate = 0.0;
  double horizon = 0.0;
  bool ball_exit = false;
  bool pass_distance = false;  ///< terminal distance <= 1e-6
  bool pass_rate = false;      ///< fitted rate >= 0.9 * sigma
  bool pass = false;
};

/// Integrates from the fiber point (forward for stable, backward for
/// unstable) and checks convergence to u_inf = u* + xi + phi(xi).
FiberVerification verify_fiber(const FoliationProblem& fp, const FiberSolution& sol,
                               double horizon = 0.0);

}  // namespace folia
