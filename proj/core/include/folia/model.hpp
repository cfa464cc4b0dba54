#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "folia/types.hpp"

namespace folia {

using MatrixEval = std::function<Matrix(const Vector&)>;
using VectorEval = std::function<Vector(const Vector&)>;
using DirDerivEval = std::function<Matrix(const Vector&, const Vector&)>;
using PsiEval = std::function<Vector(const Vector&)>;

/// Autonomous quasilinear system  u' + A(u) u = F(u)  on R^n, together with
/// the derivative data needed by the linearization and the fixed-point solver.
struct ProblemModel {
  int n = 0;  ///< state-space dimension
  int m = 0;  ///< dimension of the equilibrium manifold, 1 <= m < n
  MatrixEval A;
  VectorEval F;
  /// Directional derivative (u, w) -> [A'(u) w]; finite differences if absent.
  DirDerivEval dA;
  /// Jacobian u -> F'(u); finite differences if absent.
  MatrixEval dF;
  /// Optional equilibrium parametrization zeta in R^m -> state in R^n.
  std::optional<PsiEval> psi;
  double rho_V = 0.5;  ///< validity radius around the reference equilibrium
  /// Ball center for the validity check (the reference equilibrium, if any).
  std::optional<Vector> ball_center;
};

/// Fills missing dA/dF with central finite differences (step 1e-6*(1+|u|)).
ProblemModel with_fd_derivatives(ProblemModel model);

/// f(u) := F(u) - A(u) u, so that the system reads u' = f(u).
Vector eval_rhs(const ProblemModel& model, const Vector& u);

/// Df(u) = F'(u) - A(u) - [A'(u) . ] u.
Matrix eval_rhs_jacobian(const ProblemModel& model, const Vector& u);

/// Closed-form fiber map (boundary value, base coordinate) -> initial point.
/// Both arguments are ambient vectors lying in the respective subspaces.
using FiberOracle = std::function<Vector(const Vector&, const Vector&)>;

struct ProblemRegistryEntry {
  std::string name;
  ProblemModel model;
  Vector u_star;
  /// Present only where a closed form is derived in docs/oracles.md.
  std::optional<FiberOracle> stable_oracle;
  std::optional<FiberOracle> unstable_oracle;
};

using Params = std::map<std::string, double>;

/// Compiled-in registry. Built-ins: "linear-diag", "line-stable",
/// "line-hyperbolic", "parabola-stable", "nilpotent-demo".
const ProblemRegistryEntry& get_problem(const std::string& name);

/// Registry entry with named scalar parameters applied (CLI path).
ProblemRegistryEntry make_problem(const std::string& name, const Params& params);

std::vector<std::string> problem_names();

}  // namespace folia
