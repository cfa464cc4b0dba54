#include "folia/normalform.hpp"

namespace folia {

namespace {

void require_in_subspace(const Matrix& P, const Vector& v, const char* what) {
  if (v.size() == 0) return;
  if ((P * v - v).norm() > 1e-10 * (1.0 + v.norm())) {
    throw SubspaceError(std::string("normal form: ") + what +
                        " does not lie in its spectral subspace");
  }
}

}  // namespace

NormalFormContext make_context(const ProblemModel& model, const SpectralSplit& split,
                               const EquilibriumChart& chart, const Vector& xi) {
  NormalFormContext ctx;
  ctx.model = &model;
  ctx.split = &split;
  ctx.chart = &chart;
  ctx.u_star = chart.u_star();
  ctx.xi = xi;
  auto [phi_s, phi_u] = chart.phi(xi);
  ctx.phi_s_xi = phi_s;
  ctx.phi_u_xi = phi_u;
  ctx.u_infty = ctx.u_star + xi + phi_s + phi_u;

  double eq_residual = eval_rhs(model, ctx.u_infty).norm();
  if (eq_residual > 1e-9) {
    throw ChartError("make_context: u_infty is not an equilibrium, residual " +
                     std::to_string(eq_residual));
  }
  ctx.G_at_base = eval_G(model, split.A0, ctx.u_star, xi + phi_s + phi_u);
  if ((split.P_c * ctx.G_at_base).norm() > 1e-9) {
    throw ChartError("make_context: P_c G(xi + phi(xi)) != 0");
  }
  return ctx;
}

Vector eval_G(const ProblemModel& model, const Matrix& A0, const Vector& u_star,
              const Vector& v) {
  return eval_rhs(model, u_star + v) + A0 * v;
}

Vector eval_G(const NormalFormContext& ctx, const Vector& v) {
  return eval_G(*ctx.model, ctx.split->A0, ctx.u_star, v);
}

Vector eval_G1(const ProblemModel& model, const Vector& u_star, const Vector& v) {
  Vector Fpart = model.F(u_star + v) - model.F(u_star) - model.dF(u_star) * v;
  Matrix Adiff = model.A(u_star + v) - model.A(u_star) - model.dA(u_star, v);
  return Fpart - Adiff * u_star;
}

Vector eval_G2(const ProblemModel& model, const Vector& u_star, const Vector& v,
               const Vector& w) {
  return -(model.A(u_star + v) - model.A(u_star)) * w;
}

Vector eval_G_split(const NormalFormContext& ctx, const Vector& v) {
  return eval_G1(*ctx.model, ctx.u_star, v) + eval_G2(*ctx.model, ctx.u_star, v, v);
}

RTriple eval_R(const NormalFormContext& ctx, const Vector& x, const Vector& y,
               const Vector& z) {
  require_in_subspace(ctx.split->P_c, x, "x");
  require_in_subspace(ctx.split->P_s, y, "y");
  require_in_subspace(ctx.split->P_u, z, "z");

  Vector v = x + y + z + ctx.xi + ctx.phi_s_xi + ctx.phi_u_xi;
  Vector d = eval_G(ctx, v) - ctx.G_at_base;
  RTriple r;
  r.Rc = ctx.split->P_c * d;
  r.Rs = ctx.split->P_s * d;
  r.Ru = ctx.split->P_u * d;
  return r;
}

Matrix eval_G_jacobian(const NormalFormContext& ctx, const Vector& x, const Vector& y,
                       const Vector& z) {
  Vector v = x + y + z + ctx.xi + ctx.phi_s_xi + ctx.phi_u_xi;
  return eval_rhs_jacobian(*ctx.model, ctx.u_star + v) + ctx.split->A0;
}

std::tuple<Vector, Vector, Vector> to_normal_coords(const NormalFormContext& ctx,
                                                    const Vector& u) {
  Vector v = u - ctx.u_star;
  if (v.norm() > ctx.model->rho_V) {
    throw DomainError("to_normal_coords: u left the validity ball");
  }
  return {ctx.split->P_c * v - ctx.xi, ctx.split->P_s * v - ctx.phi_s_xi,
          ctx.split->P_u * v - ctx.phi_u_xi};
}

Vector from_normal_coords(const NormalFormContext& ctx, const Vector& x,
                          const Vector& y, const Vector& z) {
  require_in_subspace(ctx.split->P_c, x, "x");
  require_in_subspace(ctx.split->P_s, y, "y");
  require_in_subspace(ctx.split->P_u, z, "z");
  return ctx.u_star + x + y + z + ctx.xi + ctx.phi_s_xi + ctx.phi_u_xi;
}

}  // namespace folia
