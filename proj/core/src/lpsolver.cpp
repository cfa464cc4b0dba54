#include "folia/lpsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unsupported/Eigen/MatrixFunctions>

namespace folia {

namespace {

using quadrature::phi1;
using quadrature::phi2;

std::pair<Matrix, Matrix> phi_pair(const Matrix& Z) {
  return {quadrature::phi1(Z), quadrature::phi2(Z)};
}

// Per-grid discretization of the integral operator: segment propagators and
// forcing weights such that every convolution term integrates the kernel
// exactly against e^{-sigma|t|} times a linear interpolant of the weighted
// nodal values. Exact whenever R(t) = e^{-sigma|t|} (a + b t).
struct Disc {
  GridDirection direction;
  double sigma = 0.0;
  std::vector<double> nodes, h;
  int n = 0, mc = 0, ms = 0, mu = 0, dim = 0;

  std::vector<double> cL, cR;          // center segment weights
  std::vector<Matrix> Es, Eu;          // exp(-Ms h), exp(+Mu h)
  std::vector<Matrix> YL, YR;          // stable forcing weights
  std::vector<Matrix> UL, UR;          // unstable forcing weights
  std::vector<Matrix> Einit;           // initial-line propagators per node
};

Disc make_disc(const NormalFormContext& ctx, GridDirection direction, double sigma,
               const std::vector<double>& nodes) {
  const auto& split = *ctx.split;
  Disc d;
  d.direction = direction;
  d.sigma = sigma;
  d.nodes = nodes;
  d.mc = split.dims[0];
  d.ms = split.dims[1];
  d.mu = split.dims[2];
  d.n = d.mc + d.ms + d.mu;
  const int N = static_cast<int>(nodes.size()) - 1;
  d.dim = (N + 1) * d.n;
  d.h.resize(N);
  d.cL.resize(N);
  d.cR.resize(N);
  d.Es.resize(N);
  d.Eu.resize(N);
  d.YL.resize(N);
  d.YR.resize(N);
  d.UL.resize(N);
  d.UR.resize(N);

  const Matrix& Ms = split.M_s;
  const Matrix& Mu = split.M_u;
  const Matrix Is = Matrix::Identity(d.ms, d.ms);
  const Matrix Iu = Matrix::Identity(d.mu, d.mu);

  for (int j = 0; j < N; ++j) {
    double h = nodes[j + 1] - nodes[j];
    d.h[j] = h;
    double x = sigma * h;
    if (direction == GridDirection::Forward) {
      d.cL[j] = h * phi2(-x);
      d.cR[j] = h * (phi1(-x) - phi2(-x)) * std::exp(x);
      d.Es[j] = Matrix(-Ms * h).exp();
      auto [p1s, p2s] = phi_pair(-(Ms - sigma * Is) * h);
      d.YL[j] = std::exp(-x) * h * (p1s - p2s);
      d.YR[j] = h * p2s;
      d.Eu[j] = Matrix(Mu * h).exp();
      auto [p1u, p2u] = phi_pair((Mu - sigma * Iu) * h);
      d.UL[j] = h * p2u;
      d.UR[j] = std::exp(x) * h * (p1u - p2u);
    } else {
      d.cL[j] = h * phi2(x);
      d.cR[j] = h * (phi1(x) - phi2(x)) * std::exp(-x);
      d.Es[j] = Matrix(-Ms * h).exp();
      auto [p1s, p2s] = phi_pair(-(Ms + sigma * Is) * h);
      d.YL[j] = std::exp(x) * h * (p1s - p2s);
      d.YR[j] = h * p2s;
      d.Eu[j] = Matrix(Mu * h).exp();
      auto [p1u, p2u] = phi_pair((Mu + sigma * Iu) * h);
      d.UL[j] = h * p2u;
      d.UR[j] = std::exp(-x) * h * (p1u - p2u);
    }
  }

  // Propagators for the homogeneous initial line: e^{-Ms t_j} (forward) and
  // e^{-Mu t_j}, t_j <= 0 (backward).
  d.Einit.resize(N + 1);
  if (direction == GridDirection::Forward) {
    d.Einit[0] = Is;
    for (int j = 0; j < N; ++j) d.Einit[j + 1] = d.Es[j] * d.Einit[j];
  } else {
    d.Einit[N] = Iu;
    for (int j = N - 1; j >= 0; --j) d.Einit[j] = d.Eu[j] * d.Einit[j + 1];
  }
  return d;
}

// Nodal coordinate stack: per node [center; stable; unstable] coordinates in
// the orthonormal subspace bases.
struct CoordViews {
  const Disc* d;
  int idx(int j) const { return j * d->n; }
  auto a(Vector& s, int j) const { return s.segment(idx(j), d->mc); }
  auto b(Vector& s, int j) const { return s.segment(idx(j) + d->mc, d->ms); }
  auto c(Vector& s, int j) const { return s.segment(idx(j) + d->mc + d->ms, d->mu); }
  auto a(const Vector& s, int j) const { return s.segment(idx(j), d->mc); }
  auto b(const Vector& s, int j) const { return s.segment(idx(j) + d->mc, d->ms); }
  auto c(const Vector& s, int j) const { return s.segment(idx(j) + d->mc + d->ms, d->mu); }
};

double weighted_norm(const Disc& d, const Vector& stack) {
  CoordViews v{&d};
  double norm = 0.0;
  for (size_t j = 0; j < d.nodes.size(); ++j) {
    double w = std::exp(d.sigma * std::abs(d.nodes[j]));
    int jj = static_cast<int>(j);
    norm = std::max(norm, w * (v.a(stack, jj).norm() + v.b(stack, jj).norm() +
                               v.c(stack, jj).norm()));
  }
  return norm;
}

// Linear part of H: maps nodal R coordinates to the integral contributions.
Vector apply_K(const Disc& d, const Vector& r) {
  CoordViews v{&d};
  const int N = static_cast<int>(d.nodes.size()) - 1;
  Vector K = Vector::Zero(d.dim);

  if (d.direction == GridDirection::Forward) {
    // H_x = x + int_t^T R_c
    Vector C = Vector::Zero(d.mc);
    v.a(K, N) = C;
    for (int j = N - 1; j >= 0; --j) {
      C += d.cL[j] * v.a(r, j) + d.cR[j] * v.a(r, j + 1);
      v.a(K, j) = C;
    }
    // H_y = y - L_s(R_s, .): forced part with negative sign
    Vector w = Vector::Zero(d.ms);
    for (int j = 0; j < N; ++j) {
      w = d.Es[j] * w - d.YL[j] * v.b(r, j) - d.YR[j] * v.b(r, j + 1);
      v.b(K, j + 1) = w;
    }
    // H_z = z + int_t^T e^{-A_u(t-tau)} R_u
    Vector U = Vector::Zero(d.mu);
    v.c(K, N) = U;
    for (int j = N - 1; j >= 0; --j) {
      U = d.Eu[j] * U + d.UL[j] * v.c(r, j) + d.UR[j] * v.c(r, j + 1);
      v.c(K, j) = U;
    }
  } else {
    // H_x = x - int_{-T}^t R_c
    Vector D = Vector::Zero(d.mc);
    v.a(K, 0) = D;
    for (int j = 0; j < N; ++j) {
      D -= d.cL[j] * v.a(r, j) + d.cR[j] * v.a(r, j + 1);
      v.a(K, j + 1) = D;
    }
    // H_y = y - int_{-T}^t e^{-A_s(t-tau)} R_s
    Vector V = Vector::Zero(d.ms);
    v.b(K, 0) = V;
    for (int j = 0; j < N; ++j) {
      V = d.Es[j] * V - d.YL[j] * v.b(r, j) - d.YR[j] * v.b(r, j + 1);
      v.b(K, j + 1) = V;
    }
    // H_z = z - L_u(R_u, .): forced part with negative sign
    Vector w = Vector::Zero(d.mu);
    for (int j = N - 1; j >= 0; --j) {
      w = d.Eu[j] * w + d.UL[j] * v.c(r, j) + d.UR[j] * v.c(r, j + 1);
      v.c(K, j) = w;
    }
  }
  return K;
}

struct Assembled {
  Vector H;            // residual stack (coords)
  Vector r;            // nodal R stack (coords)
  double wres = 0.0;
  double tail = 0.0;
  Vector center_rec;   // C_0 (forward) / -D_N (backward), center coords
  Vector hyper_rec;    // U_0 (forward) / -V_N (backward), coords
};

// init: y(0) coordinates (forward) or z(0) coordinates (backward).
Assembled assemble(const Disc& d, const NormalFormContext& ctx, const Vector& stack,
                   const Vector& init) {
  const auto& split = *ctx.split;
  CoordViews v{&d};
  const int N = static_cast<int>(d.nodes.size()) - 1;

  Vector r(d.dim);
  for (int j = 0; j <= N; ++j) {
    Vector x = split.B_c * v.a(stack, j);
    Vector y = split.B_s * v.b(stack, j);
    Vector z = split.B_u * v.c(stack, j);
    RTriple R = eval_R(ctx, x, y, z);
    v.a(r, j) = split.B_c.transpose() * R.Rc;
    v.b(r, j) = split.B_s.transpose() * R.Rs;
    v.c(r, j) = split.B_u.transpose() * R.Ru;
  }

  Assembled out;
  out.r = r;
  out.H = stack + apply_K(d, r);
  if (d.direction == GridDirection::Forward) {
    out.center_rec = out.H.segment(0, d.mc) - v.a(stack, 0);
    out.hyper_rec = out.H.segment(d.mc + d.ms, d.mu) - v.c(stack, 0);
    for (int j = 0; j <= N; ++j) v.b(out.H, j) -= d.Einit[j] * init;
  } else {
    out.center_rec = -(out.H.segment(v.idx(N), d.mc) - v.a(stack, N));
    out.hyper_rec = -(out.H.segment(v.idx(N) + d.mc, d.ms) - v.b(stack, N));
    for (int j = 0; j <= N; ++j) v.c(out.H, j) -= d.Einit[j] * init;
  }
  out.wres = weighted_norm(d, out.H);

  // Envelope amplitude of R over the last quarter of the horizon, used to
  // budget the neglected tail integrals. The bound enters the recovered
  // values as e^{-sigma T} rho / rate.
  double rho_c = 0.0, rho_s = 0.0, rho_u = 0.0;
  for (int j = 0; j <= N; ++j) {
    bool in_window = d.direction == GridDirection::Forward ? (4 * j >= 3 * N)
                                                           : (4 * j <= N);
    if (!in_window) continue;
    double w = std::exp(d.sigma * std::abs(d.nodes[j]));
    rho_c = std::max(rho_c, w * v.a(r, j).norm());
    rho_s = std::max(rho_s, w * v.b(r, j).norm());
    rho_u = std::max(rho_u, w * v.c(r, j).norm());
  }
  const double T = d.direction == GridDirection::Forward ? d.nodes.back()
                                                         : -d.nodes.front();
  const double omega = split.omega;
  double kappa_s = std::clamp(split.kappa_s, 1.0, 1e6);
  double kappa_u = std::clamp(split.kappa_u, 1.0, 1e6);
  double decay = std::exp(-d.sigma * T);
  if (d.direction == GridDirection::Forward) {
    out.tail = rho_c * decay / d.sigma +
               (d.mu > 0 ? kappa_u * rho_u * decay / (omega + d.sigma) : 0.0);
  } else {
    out.tail = rho_c * decay / d.sigma +
               (d.ms > 0 ? kappa_s * rho_s * decay / (omega + d.sigma) : 0.0);
  }
  return out;
}

// Columns of the linearized integral operator: J = I + W * blockdiag(D_j)
// with D_j the coordinate Jacobian of R at node j.
Matrix build_W(const Disc& d) {
  Matrix W(d.dim, d.dim);
  Vector impulse = Vector::Zero(d.dim);
  for (int col = 0; col < d.dim; ++col) {
    impulse(col) = 1.0;
    W.col(col) = apply_K(d, impulse);
    impulse(col) = 0.0;
  }
  return W;
}

struct SubspaceBasis {
  Matrix B;     // [B_c B_s B_u]
  Matrix Binv;  // [B_c^T P_c; B_s^T P_s; B_u^T P_u]
};

SubspaceBasis make_basis(const SpectralSplit& split) {
  const int n = static_cast<int>(split.A0.rows());
  SubspaceBasis sb;
  sb.B = Matrix(n, n);
  sb.B << split.B_c, split.B_s, split.B_u;
  sb.Binv = Matrix(n, n);
  sb.Binv << split.B_c.transpose() * split.P_c, split.B_s.transpose() * split.P_s,
      split.B_u.transpose() * split.P_u;
  return sb;
}

TrajectoryGrid stack_to_grid(const Disc& d, const NormalFormContext& ctx,
                             const Vector& stack) {
  const auto& split = *ctx.split;
  CoordViews v{&d};
  TrajectoryGrid g;
  g.direction = d.direction;
  g.sigma = d.sigma;
  g.nodes = d.nodes;
  const int N = static_cast<int>(d.nodes.size()) - 1;
  g.x.resize(N + 1);
  g.y.resize(N + 1);
  g.z.resize(N + 1);
  for (int j = 0; j <= N; ++j) {
    g.x[j] = split.B_c * v.a(stack, j);
    g.y[j] = split.B_s * v.b(stack, j);
    g.z[j] = split.B_u * v.c(stack, j);
  }
  return g;
}

Vector grid_to_stack(const Disc& d, const NormalFormContext& ctx,
                     const TrajectoryGrid& g) {
  const auto& split = *ctx.split;
  CoordViews v{&d};
  Vector stack(d.dim);
  for (size_t j = 0; j < d.nodes.size(); ++j) {
    int jj = static_cast<int>(j);
    v.a(stack, jj) = split.B_c.transpose() * (split.P_c * g.x[j]);
    v.b(stack, jj) = split.B_s.transpose() * (split.P_s * g.y[j]);
    v.c(stack, jj) = split.B_u.transpose() * (split.P_u * g.z[j]);
  }
  return stack;
}

double fit_decay_rate(const Disc& d, const Vector& stack) {
  CoordViews v{&d};
  std::vector<double> ts, logs;
  for (size_t j = 0; j < d.nodes.size(); ++j) {
    int jj = static_cast<int>(j);
    double amp = v.a(stack, jj).norm() + v.b(stack, jj).norm() + v.c(stack, jj).norm();
    if (amp >= 1e-10 && amp <= 1e-2) {
      ts.push_back(std::abs(d.nodes[j]));
      logs.push_back(std::log(amp));
    }
  }
  if (ts.size() < 5) return 0.0;
  double mt = 0, ml = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    ml += logs[i];
  }
  mt /= ts.size();
  ml /= ts.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    num += (ts[i] - mt) * (logs[i] - ml);
    den += (ts[i] - mt) * (ts[i] - mt);
  }
  return den > 0 ? -num / den : 0.0;
}

struct SolveSetup {
  double sigma;
  double radius;
  GridSpec grid;
};

SolveSetup resolve_setup(const NormalFormContext& ctx, const FiberRequest& req) {
  const auto& split = *ctx.split;
  if (!std::isfinite(split.omega) || split.omega <= 0.0)
    throw SolveError("solver: spectral split has no positive gap omega");
  SolveSetup s;
  s.sigma = req.sigma > 0.0 ? req.sigma : 0.9 * split.omega;
  if (s.sigma > split.omega * (1.0 + 1e-12))
    throw DomainError("solver: sigma must satisfy 0 < sigma <= omega");
  s.radius = req.radius > 0.0 ? req.radius : std::min(0.2, ctx.chart->rho_0());
  s.grid = req.grid;
  return s;
}

void check_request(const NormalFormContext& ctx, const FiberRequest& req,
                   const SolveSetup& setup) {
  if (req.boundary.norm() > setup.radius * (1.0 + 1e-12))
    throw DomainError("solver: |boundary| exceeds the solver radius r = " +
                      std::to_string(setup.radius));
  if (req.xi.norm() > setup.radius * (1.0 + 1e-12))
    throw DomainError("solver: |xi| exceeds the solver radius r = " +
                      std::to_string(setup.radius));
  const auto& split = *ctx.split;
  const Matrix& P = req.kind == FiberKind::Stable ? split.P_s : split.P_u;
  if (req.boundary.size() > 0 &&
      (P * req.boundary - req.boundary).norm() > 1e-10 * (1.0 + req.boundary.norm()))
    throw SubspaceError("solver: boundary value is not in its spectral subspace");
}

FiberSolution solve_common(const NormalFormContext& ctx, const FiberRequest& req,
                           const TrajectoryGrid* initial) {
  const auto& split = *ctx.split;
  const GridDirection direction = req.kind == FiberKind::Stable
                                      ? GridDirection::Forward
                                      : GridDirection::Backward;
  auto report = check_normally_hyperbolic(split, ctx.model->m);
  if (report.classification == Stability::Fails)
    throw SolveError("solver: equilibrium fails normal hyperbolicity: " + report.reason);
  if (req.kind == FiberKind::Unstable && split.dims[2] == 0)
    throw SolveError("solver: empty unstable subspace");

  SolveSetup setup = resolve_setup(ctx, req);
  check_request(ctx, req, setup);
  SubspaceBasis sb = make_basis(split);

  Vector init_coords = req.kind == FiberKind::Stable
                           ? Vector(split.B_s.transpose() * req.boundary)
                           : Vector(split.B_u.transpose() * req.boundary);

  const double tol = req.tol_residual;
  GridSpec gspec = setup.grid;
  int extensions_left = req.allow_grid_extension ? 3 : 0;

  while (true) {
    TrajectoryGrid geometry = make_grid(direction, setup.sigma, gspec, ctx.model->n);
    Disc d = make_disc(ctx, direction, setup.sigma, geometry.nodes);
    CoordViews v{&d};
    const int N = d.dim / d.n - 1;

    Vector stack;
    if (initial) {
      stack = grid_to_stack(d, ctx, *initial);
    } else {
      stack = Vector::Zero(d.dim);
      for (int j = 0; j <= N; ++j) {
        if (req.kind == FiberKind::Stable)
          v.b(stack, j) = d.Einit[j] * init_coords;
        else
          v.c(stack, j) = d.Einit[j] * init_coords;
      }
    }

    Assembled cur = assemble(d, ctx, stack, init_coords);
    if (cur.tail > 0.1 * tol) {
      if (extensions_left > 0) {
        --extensions_left;
        double T = gspec.T > 0.0 ? gspec.T : 14.0 / setup.sigma;
        gspec.T = 1.5 * T;
        gspec.N = static_cast<int>(std::ceil(gspec.N * 1.25));
        continue;
      }
      throw TailBoundError(
          "solver: truncation tail budget " + std::to_string(cur.tail) +
          " exceeds 0.1 * tol = " + std::to_string(0.1 * tol) +
          "; extend the grid horizon or relax the tolerance");
    }

    Matrix W = build_W(d);
    int iters = 0;
    bool converged = cur.wres <= tol;
    while (!converged && iters < req.max_iters) {
      // J = I + W * blockdiag(D_j), D_j = Binv G'(v_j) B.
      Matrix J = Matrix::Identity(d.dim, d.dim);
      for (int j = 0; j <= N; ++j) {
        Vector x = split.B_c * v.a(stack, j);
        Vector y = split.B_s * v.b(stack, j);
        Vector z = split.B_u * v.c(stack, j);
        Matrix Dj;
        try {
          Dj = sb.Binv * eval_G_jacobian(ctx, x, y, z) * sb.B;
        } catch (const DomainError& e) {
          throw SolveError(std::string("solver: Jacobian evaluation left the "
                                       "validity ball: ") +
                           e.what());
        }
        J.middleCols(j * d.n, d.n) += W.middleCols(j * d.n, d.n) * Dj;
      }
      Eigen::PartialPivLU<Matrix> lu(J);
      Vector delta = lu.solve(-cur.H);

      auto try_assemble = [&](const Vector& trial) -> std::pair<bool, Assembled> {
        try {
          return {true, assemble(d, ctx, trial, init_coords)};
        } catch (const DomainError&) {
          return {false, {}};
        } catch (const SubspaceError&) {
          return {false, {}};
        }
      };

      bool accepted = false;
      if (weighted_norm(d, delta) <= setup.radius) {
        double alpha = 1.0;
        while (alpha >= 1.0 / 64.0) {
          auto [ok, trial] = try_assemble(stack + alpha * delta);
          if (ok && trial.wres < cur.wres) {
            stack += alpha * delta;
            cur = std::move(trial);
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
      }
      if (!accepted) {
        // Picard fallback: treat H as a fixed-point map.
        auto [ok, trial] = try_assemble(stack - cur.H);
        if (!ok)
          throw SolveError("solver: iterate left the validity domain during "
                           "the Picard fallback");
        stack -= cur.H;
        cur = std::move(trial);
      }
      ++iters;
      if (weighted_norm(d, stack) > setup.radius * (1.0 + 1e-9)) {
        throw SolveError("solver: iterate left the ball of radius r = " +
                         std::to_string(setup.radius) +
                         "; no fiber within the certified neighborhood");
      }
      converged = cur.wres <= tol;
    }
    if (!converged) {
      throw SolveError("solver: no convergence within " + std::to_string(req.max_iters) +
                       " iterations (weighted residual " + std::to_string(cur.wres) +
                       ")");
    }

    // Independent certificate and recovered initial values.
    Assembled cert = assemble(d, ctx, stack, init_coords);

    FiberSolution sol;
    sol.request = req;
    sol.sigma = setup.sigma;
    sol.trajectory = stack_to_grid(d, ctx, stack);
    sol.residual = cert.wres;
    sol.tail_budget = cert.tail;
    sol.iterations = std::max(1, iters);
    sol.decay_rate_est = fit_decay_rate(d, stack);

    Vector x0_dev, hyper_amb;
    if (direction == GridDirection::Forward) {
      sol.x0 = ctx.xi - split.B_c * cert.center_rec;
      sol.z0_rec = ctx.phi_u_xi - split.B_u * cert.hyper_rec;
      sol.y0_rec = Vector::Zero(0);
    } else {
      sol.x0 = ctx.xi + split.B_c * cert.center_rec;
      sol.y0_rec = ctx.phi_s_xi + split.B_s * cert.hyper_rec;
      sol.z0_rec = Vector::Zero(0);
    }
    int j0 = direction == GridDirection::Forward ? 0 : N;
    sol.u0 = from_normal_coords(ctx, sol.trajectory.x[j0], sol.trajectory.y[j0],
                                sol.trajectory.z[j0]);
    return sol;
  }
}

}  // namespace

AssembledResidual assemble_Hs(const NormalFormContext& ctx, const TrajectoryGrid& traj,
                              const Vector& y0) {
  if (traj.direction != GridDirection::Forward)
    throw DomainError("assemble_Hs: trajectory must be on a forward grid");
  const auto& split = *ctx.split;
  if ((split.P_s * y0 - y0).norm() > 1e-10 * (1.0 + y0.norm()))
    throw SubspaceError("assemble_Hs: y0 is not a stable vector");
  Disc d = make_disc(ctx, GridDirection::Forward, traj.sigma, traj.nodes);
  Vector stack = grid_to_stack(d, ctx, traj);
  Vector init = split.B_s.transpose() * (y0 - ctx.phi_s_xi);
  Assembled out = assemble(d, ctx, stack, init);
  AssembledResidual res;
  res.H = stack_to_grid(d, ctx, out.H);
  res.weighted_norm = out.wres;
  res.tail_budget = out.tail;
  return res;
}

AssembledResidual assemble_Hu(const NormalFormContext& ctx, const TrajectoryGrid& traj,
                              const Vector& z0) {
  if (traj.direction != GridDirection::Backward)
    throw DomainError("assemble_Hu: trajectory must be on a backward grid");
  const auto& split = *ctx.split;
  if ((split.P_u * z0 - z0).norm() > 1e-10 * (1.0 + z0.norm()))
    throw SubspaceError("assemble_Hu: z0 is not an unstable vector");
  Disc d = make_disc(ctx, GridDirection::Backward, traj.sigma, traj.nodes);
  Vector stack = grid_to_stack(d, ctx, traj);
  Vector init = split.B_u.transpose() * (z0 - ctx.phi_u_xi);
  Assembled out = assemble(d, ctx, stack, init);
  AssembledResidual res;
  res.H = stack_to_grid(d, ctx, out.H);
  res.weighted_norm = out.wres;
  res.tail_budget = out.tail;
  return res;
}

FiberSolution solve_stable_fiber(const NormalFormContext& ctx, const FiberRequest& req) {
  if (req.kind != FiberKind::Stable)
    throw DomainError("solve_stable_fiber: request kind must be stable");
  return solve_common(ctx, req, nullptr);
}

FiberSolution solve_stable_fiber(const NormalFormContext& ctx, const FiberRequest& req,
                                 const TrajectoryGrid& initial) {
  if (req.kind != FiberKind::Stable)
    throw DomainError("solve_stable_fiber: request kind must be stable");
  return solve_common(ctx, req, &initial);
}

FiberSolution solve_unstable_fiber(const NormalFormContext& ctx,
                                   const FiberRequest& req) {
  if (req.kind != FiberKind::Unstable)
    throw DomainError("solve_unstable_fiber: request kind must be unstable");
  return solve_common(ctx, req, nullptr);
}

std::pair<Vector, Vector> recover_initial_values(const NormalFormContext& ctx,
                                                 const TrajectoryGrid& traj) {
  const auto& split = *ctx.split;
  Disc d = make_disc(ctx, traj.direction, traj.sigma, traj.nodes);
  Vector stack = grid_to_stack(d, ctx, traj);
  Vector init = traj.direction == GridDirection::Forward ? Vector::Zero(d.ms)
                                                         : Vector::Zero(d.mu);
  Assembled out = assemble(d, ctx, stack, init);
  if (traj.direction == GridDirection::Forward) {
    return {ctx.xi - split.B_c * out.center_rec,
            ctx.phi_u_xi - split.B_u * out.hyper_rec};
  }
  return {ctx.xi + split.B_c * out.center_rec,
          ctx.phi_s_xi + split.B_s * out.hyper_rec};
}

Matrix fiber_tangent(const FoliationProblem& fp, FiberKind kind, const Vector& xi,
                     const FiberRequest& proto) {
  const auto& split = *fp.split;
  const Matrix& B = kind == FiberKind::Stable ? split.B_s : split.B_u;
  const int k = static_cast<int>(B.cols());
  const double h = 1e-5;

  NormalFormContext ctx = make_context(*fp.model, split, *fp.chart, xi);
  Matrix tangent(fp.model->n, k);
  for (int i = 0; i < k; ++i) {
    FiberRequest req = proto;
    req.kind = kind;
    req.xi = xi;
    req.boundary = h * B.col(i);
    Vector up = (kind == FiberKind::Stable ? solve_stable_fiber(ctx, req)
                                           : solve_unstable_fiber(ctx, req))
                    .u0;
    req.boundary = -h * B.col(i);
    Vector um = (kind == FiberKind::Stable ? solve_stable_fiber(ctx, req)
                                           : solve_unstable_fiber(ctx, req))
                    .u0;
    tangent.col(i) = (up - um) / (2.0 * h);
  }
  return tangent;
}

DecomposeResult decompose_initial_value(const FoliationProblem& fp, const Vector& u0,
                                        const FiberRequest& proto) {
  const auto& split = *fp.split;
  auto report = check_normally_hyperbolic(split, fp.model->m);
  if (report.classification != Stability::NormallyStable)
    throw SolveError("decompose_initial_value: problem must be normally stable");

  const Vector& u_star = fp.chart->u_star();
  double r = proto.radius > 0.0 ? proto.radius : std::min(0.2, fp.chart->rho_0());
  if ((u0 - u_star).norm() > 0.5 * r)
    throw DomainError("decompose_initial_value: |u0 - u_star| must be <= r/2");

  const int ms = split.dims[1], mc = split.dims[0];
  Vector q(ms + mc);
  q.head(ms) = split.B_s.transpose() * (split.P_s * (u0 - u_star));
  q.tail(mc) = split.B_c.transpose() * (split.P_c * (u0 - u_star));

  TrajectoryGrid last_traj;
  bool have_warm = false;
  auto lambda = [&](const Vector& coords, bool update_warm) -> Vector {
    FiberRequest req = proto;
    req.kind = FiberKind::Stable;
    req.boundary = split.B_s * coords.head(ms);
    req.xi = split.B_c * coords.tail(mc);
    NormalFormContext ctx = make_context(*fp.model, split, *fp.chart, req.xi);
    FiberSolution sol = have_warm ? solve_stable_fiber(ctx, req, last_traj)
                                  : solve_stable_fiber(ctx, req);
    if (update_warm) {
      last_traj = sol.trajectory;
      have_warm = true;
    }
    return sol.u0;
  };

  const double fd_step = 1e-6;
  const int max_outer = 20;
  DecomposeResult result;
  Vector res = lambda(q, true) - u0;
  for (int it = 0; it < max_outer; ++it) {
    result.iterations = it;
    if (res.norm() <= 1e-10) break;
    Matrix J(u0.size(), ms + mc);
    for (int i = 0; i < ms + mc; ++i) {
      Vector qp = q;
      qp(i) += fd_step;
      J.col(i) = (lambda(qp, false) - (res + u0)) / fd_step;
    }
    q -= J.partialPivLu().solve(res);
    res = lambda(q, true) - u0;
  }
  if (res.norm() > 1e-8) {
    throw SolveError("decompose_initial_value: Newton residual " +
                     std::to_string(res.norm()) +
                     " did not reach 1e-8; u0 may lie outside the foliated "
                     "neighborhood");
  }
  result.y0 = split.B_s * q.head(ms);
  result.xi = split.B_c * q.tail(mc);
  result.residual = res.norm();
  return result;
}

}  // namespace folia
