#include "folia/flow.hpp"

#include <algorithm>
#include <cmath>

namespace folia {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - bhat, error weights including the FSAL stage.
constexpr double d1 = 71.0 / 57600, d3 = -71.0 / 16695, d4 = 71.0 / 1920,
                 d5 = -17253.0 / 339200, d6 = 22.0 / 525, d7 = -1.0 / 40;

}  // namespace

FlowResult integrate(const ProblemModel& model, const Vector& u0, double t_final,
                     const FlowOptions& options) {
  if (t_final == 0.0) throw DomainError("integrate: t_final must be nonzero");
  const double dir = t_final > 0.0 ? 1.0 : -1.0;
  const double tol = options.tol;

  std::optional<Vector> center = options.ball_center;
  double radius = options.ball_radius;
  if (!center && model.ball_center) {
    center = model.ball_center;
    radius = model.rho_V;
  }
  auto inside = [&](const Vector& u) {
    return !center || (u - *center).norm() <= radius;
  };
  if (!inside(u0)) throw DomainError("integrate: u0 outside the validity ball");

  auto f = [&](const Vector& u) { return eval_rhs(model, u); };

  FlowResult res;
  res.times.push_back(0.0);
  res.states.push_back(u0);

  Vector u = u0;
  double t = 0.0;
  Vector k1 = f(u);

  double h = 0.01 * (1.0 + u.norm()) / (1.0 + k1.norm());
  h = std::min(h, std::abs(t_final) / 10.0);
  if (options.max_step > 0.0) h = std::min(h, options.max_step);
  const double hmin = 1e-13 * std::max(1.0, std::abs(t_final));

  Vector k2, k3, k4, k5, k6, k7, unew;
  while (dir * (t_final - t) > 0.0) {
    if (options.max_step > 0.0) h = std::min(h, options.max_step);
    if (dir * (t + dir * h) > dir * t_final) h = std::abs(t_final - t);

    bool stage_ok = true;
    double err = 0.0;
    try {
      double hs = dir * h;
      k2 = f(u + hs * (a21 * k1));
      k3 = f(u + hs * (a31 * k1 + a32 * k2));
      k4 = f(u + hs * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = f(u + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = f(u + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      unew = u + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      k7 = f(unew);
      Vector e =
          hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < e.size(); ++i) {
        double sc = tol + tol * std::max(std::abs(u(i)), std::abs(unew(i)));
        acc += (e(i) / sc) * (e(i) / sc);
      }
      err = std::sqrt(acc / e.size());
    } catch (const DomainError&) {
      stage_ok = false;
    }

    if (stage_ok && err <= 1.0) {
      t += dir * h;
      u = unew;
      k1 = k7;  // FSAL
      ++res.accepted_steps;
      res.times.push_back(t);
      res.states.push_back(u);
      if (!inside(u)) {
        res.ball_exit = true;
        res.exit_time = t;
        break;
      }
      double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
      h *= std::clamp(grow, 0.2, 5.0);
    } else {
      ++res.rejected_steps;
      h *= stage_ok ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.5) : 0.5;
      if (h < hmin) {
        res.ball_exit = true;
        res.exit_time = t;
        break;
      }
    }
    if (res.accepted_steps + res.rejected_steps > options.max_steps) {
      throw SolveError("integrate: step budget exhausted");
    }
  }
  res.terminal_state = u;
  return res;
}

double estimate_decay_rate(const FlowResult& result, const Vector& u_infty) {
  std::vector<double> ts, logs;
  for (size_t i = 0; i < result.times.size(); ++i) {
    double dev = (result.states[i] - u_infty).norm();
    if (dev >= 1e-10 && dev <= 1e-2) {
      ts.push_back(std::abs(result.times[i]));
      logs.push_back(std::log(dev));
    }
  }
  if (ts.size() < 5) {
    throw Error("estimate_decay_rate: fit window is empty");
  }
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
  if (den == 0.0) throw Error("estimate_decay_rate: degenerate fit window");
  return -num / den;
}

FiberVerification verify_fiber(const FoliationProblem& fp, const FiberSolution& sol,
                               double horizon) {
  const double sigma = sol.sigma > 0.0 ? sol.sigma : 0.9 * fp.split->omega;
  FiberVerification v;
  v.horizon = horizon > 0.0 ? horizon : 30.0 / sigma;

  Vector u_infty = fp.chart->u_star() + sol.request.xi + fp.chart->phi_total(sol.request.xi);

  FlowOptions opts;
  opts.tol = 1e-12;
  opts.max_step = v.horizon / 256.0;
  double t_final = sol.request.kind == FiberKind::Stable ? v.horizon : -v.horizon;
  FlowResult flow = integrate(*fp.model, sol.u0, t_final, opts);

  v.ball_exit = flow.ball_exit;
  v.terminal_distance = (flow.terminal_state - u_infty).norm();
  try {
    v.decay_rate = estimate_decay_rate(flow, u_infty);
  } catch (const Error&) {
    v.decay_rate = 0.0;
  }
  v.pass_distance = v.terminal_distance <= 1e-6;
  v.pass_rate = v.decay_rate >= 0.9 * sigma;
  v.pass = v.pass_distance && v.pass_rate && !v.ball_exit;
  return v;
}

}  // namespace folia
