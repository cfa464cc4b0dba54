#pragma once

#include <tuple>

#include "folia/chart.hpp"
#include "folia/model.hpp"
#include "folia/spectral.hpp"
#include "folia/types.hpp"

namespace folia {

/// Coordinates (x, y, z) centered at the equilibrium u_inf = u* + xi + phi(xi).
/// In these variables the equation reads x' = R_c, y' + A_s y = R_s,
/// z' + A_u z = R_u, and the equilibrium set becomes {0} x chart.
struct NormalFormContext {
  const ProblemModel* model = nullptr;
  const SpectralSplit* split = nullptr;
  const EquilibriumChart* chart = nullptr;
  Vector u_star;
  Vector xi;        ///< base-point center coordinates (ambient, in range(P_c))
  Vector phi_s_xi, phi_u_xi;
  Vector u_infty;   ///< u* + xi + phi(xi)
  Vector G_at_base; ///< G(xi + phi(xi))
};

NormalFormContext make_context(const ProblemModel& model, const SpectralSplit& split,
                               const EquilibriumChart& chart, const Vector& xi);

/// Deviation nonlinearity G(v) = f(u* + v) + A0 v (runtime form).
Vector eval_G(const NormalFormContext& ctx, const Vector& v);
Vector eval_G(const ProblemModel& model, const Matrix& A0, const Vector& u_star,
              const Vector& v);

/// Split form G1(v) + G2(v, v); agrees with eval_G, exercised by tests.
Vector eval_G1(const ProblemModel& model, const Vector& u_star, const Vector& v);
Vector eval_G2(const ProblemModel& model, const Vector& u_star, const Vector& v,
               const Vector& w);
Vector eval_G_split(const NormalFormContext& ctx, const Vector& v);

struct RTriple {
  Vector Rc, Rs, Ru;
};

/// R_l = P^l (G(x+y+z+xi+phi(xi)) - G(xi+phi(xi))); vanishes at (0,0,0).
RTriple eval_R(const NormalFormContext& ctx, const Vector& x, const Vector& y,
               const Vector& z);

/// Jacobian of (x,y,z) -> G(x+y+z+xi+phi(xi)) at the given point, i.e.
/// G'(v) = Df(u* + v) + A0 evaluated at v = x+y+z+xi+phi(xi).
Matrix eval_G_jacobian(const NormalFormContext& ctx, const Vector& x, const Vector& y,
                       const Vector& z);

std::tuple<Vector, Vector, Vector> to_normal_coords(const NormalFormContext& ctx,
                                                    const Vector& u);
Vector from_normal_coords(const NormalFormContext& ctx, const Vector& x,
                          const Vector& y, const Vector& z);

}  // namespace folia
