#pragma once

#include <optional>
#include <utility>

#include "folia/grid.hpp"
#include "folia/normalform.hpp"
#include "folia/types.hpp"

namespace folia {

enum class FiberKind { Stable, Unstable };

struct FiberRequest {
  FiberKind kind = FiberKind::Stable;
  /// Initial value of the normal-form variable: y(0) (stable) or z(0)
  /// (unstable), as an ambient vector in the corresponding subspace. The
  /// base point itself is boundary = 0.
  Vector boundary;
  Vector xi;  ///< base-point center coordinates (ambient, in range(P_c))
  double sigma = 0.0;         ///< <=0 means 0.9 * omega
  double tol_residual = 1e-9; ///< weighted residual target
  int max_iters = 40;
  double radius = 0.0;        ///< solve ball; <=0 means min(0.2, rho_0)
  GridSpec grid;
  /// Extend T (up to 3 times) when the tail budget exceeds 0.1*tol. Set to
  /// false when the grid was pinned explicitly.
  bool allow_grid_extension = true;
};

struct AssembledResidual {
  TrajectoryGrid H;          ///< nodewise residual of the three components
  double weighted_norm = 0.0;
  double tail_budget = 0.0;  ///< bound on the neglected [T, inf) integrals
};

/// Residual of the stable Lyapunov-Perron map at the given trajectory:
///   H_x(t) = x(t) + int_t^inf R_c,
///   H_y(t) = y(t) - L_s(R_s, y0 - phi_s(xi)),
///   H_z(t) = z(t) + int_t^inf e^{-A_u(t-tau)} R_u.
/// y0 is the full stable component of the initial deviation, P^s v(0).
AssembledResidual assemble_Hs(const NormalFormContext& ctx, const TrajectoryGrid& traj,
                              const Vector& y0);

/// Backward counterpart on [-T, 0]:
///   H_x(t) = x(t) - int_{-inf}^t R_c,
///   H_y(t) = y(t) - int_{-inf}^t e^{-A_s(t-tau)} R_s,
///   H_z(t) = z(t) - L_u(R_u, z0 - phi_u(xi)).
AssembledResidual assemble_Hu(const NormalFormContext& ctx, const TrajectoryGrid& traj,
                              const Vector& z0);

struct FiberSolution {
  FiberRequest request;
  TrajectoryGrid trajectory;
  Vector x0;       ///< recovered center component of the initial deviation
  Vector z0_rec;   ///< recovered z0 (stable solve)
  Vector y0_rec;   ///< recovered y0 (unstable solve)
  Vector u0;       ///< the fiber point lambda(boundary, xi)
  double residual = 0.0;   ///< independently re-assembled weighted residual
  int iterations = 0;
  double decay_rate_est = 0.0;
  double tail_budget = 0.0;
  double sigma = 0.0;      ///< weight actually used
};

/// Damped Newton on the discretized H_s, Picard fallback, started from the
/// linearized iterate (0, e^{-A_s t}(y0 - phi_s(xi)), 0).
FiberSolution solve_stable_fiber(const NormalFormContext& ctx, const FiberRequest& req);

FiberSolution solve_unstable_fiber(const NormalFormContext& ctx, const FiberRequest& req);

/// Test hook: same solve but starting from a caller-supplied trajectory.
FiberSolution solve_stable_fiber(const NormalFormContext& ctx, const FiberRequest& req,
                                 const TrajectoryGrid& initial);

/// Quadratures x0 = xi - int_0^inf R_c and z0 = phi_u(xi) - int_0^inf
/// e^{A_u tau} R_u over a converged forward trajectory. For backward grids
/// returns (x0, y0_rec) instead.
std::pair<Vector, Vector> recover_initial_values(const NormalFormContext& ctx,
                                                 const TrajectoryGrid& traj);

/// Bundle used by the operations that build contexts per base point.
struct FoliationProblem {
  const ProblemModel* model = nullptr;
  const SpectralSplit* split = nullptr;
  const EquilibriumChart* chart = nullptr;
};

/// d lambda(., xi)/d boundary at 0 by central differences (step 1e-5) over a
/// basis of the boundary subspace; returns an n x k matrix. Its column span
/// is the stable (resp. unstable) invariant subspace of the linearization at
/// u_inf.
Matrix fiber_tangent(const FoliationProblem& fp, FiberKind kind, const Vector& xi,
                     const FiberRequest& proto);

struct DecomposeResult {
  Vector y0;  ///< boundary coordinate (ambient, in range(P_s))
  Vector xi;
  double residual = 0.0;
  int iterations = 0;
};

/// Inverts u0 = lambda^s(y0, xi) by Newton with a finite-difference Jacobian;
/// normally stable problems only.
DecomposeResult decompose_initial_value(const FoliationProblem& fp, const Vector& u0,
                                        const FiberRequest& proto);

}  // namespace folia
