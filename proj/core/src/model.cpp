#include "folia/model.hpp"

#include <cmath>
#include <mutex>
#include <unordered_map>

namespace folia {

double principal_angle(const Matrix& U, const Matrix& V) {
  if (U.cols() == 0 || V.cols() == 0) return 0.0;
  Eigen::HouseholderQR<Matrix> qu(U), qv(V);
  Matrix Qu = qu.householderQ() * Matrix::Identity(U.rows(), U.cols());
  Matrix Qv = qv.householderQ() * Matrix::Identity(V.rows(), V.cols());
  Eigen::JacobiSVD<Matrix> svd(Qu.transpose() * Qv);
  double smin = svd.singularValues().minCoeff();
  smin = std::min(1.0, std::max(-1.0, smin));
  return std::acos(smin);
}

ProblemModel with_fd_derivatives(ProblemModel model) {
  if (!model.dA) {
    auto A = model.A;
    model.dA = [A](const Vector& u, const Vector& w) -> Matrix {
      double h = 1e-6 * (1.0 + u.norm());
      double wn = w.norm();
      if (wn == 0.0) return Matrix::Zero(u.size(), u.size());
      Vector dir = w / wn;
      return (A(u + h * dir) - A(u - h * dir)) * (wn / (2.0 * h));
    };
  }
  if (!model.dF) {
    auto F = model.F;
    model.dF = [F](const Vector& u) -> Matrix {
      const auto n = u.size();
      double h = 1e-6 * (1.0 + u.norm());
      Matrix J(n, n);
      Vector e = Vector::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        e(i) = h;
        J.col(i) = (F(u + e) - F(u - e)) / (2.0 * h);
        e(i) = 0.0;
      }
      return J;
    };
  }
  return model;
}

static void check_ball(const ProblemModel& model, const Vector& u) {
  if (model.ball_center && (u - *model.ball_center).norm() > model.rho_V) {
    throw DomainError("state left the validity ball: |u - u_ref| = " +
                      std::to_string((u - *model.ball_center).norm()) + " > rho_V = " +
                      std::to_string(model.rho_V));
  }
}

Vector eval_rhs(const ProblemModel& model, const Vector& u) {
  check_ball(model, u);
  return model.F(u) - model.A(u) * u;
}

Matrix eval_rhs_jacobian(const ProblemModel& model, const Vector& u) {
  check_ball(model, u);
  Matrix J = model.dF(u) - model.A(u);
  Vector e = Vector::Zero(model.n);
  for (int i = 0; i < model.n; ++i) {
    e(i) = 1.0;
    J.col(i) -= model.dA(u, e) * u;
    e(i) = 0.0;
  }
  return J;
}

//------------------------------------------------------------------------------
// Built-in problem registry
//------------------------------------------------------------------------------

namespace {

void reject_params(const std::string& name, const Params& params) {
  if (!params.empty()) {
    throw ConfigError("problem '" + name + "' accepts no parameters (got '" +
                      params.begin()->first + "')");
  }
}

// A = diag(0, lambda_s, -lambda_u), F = 0. Flat manifold {(zeta,0,0)}, exact
// linear dynamics; fibers are affine: lambda(b, xi) = u* + xi + b.
ProblemRegistryEntry make_linear_diag(const Params& params) {
  double ls = 1.0, lu = 1.0;
  for (const auto& [key, value] : params) {
    if (key == "lambda_s")
      ls = value;
    else if (key == "lambda_u")
      lu = value;
    else
      throw ConfigError("problem 'linear-diag': unknown parameter '" + key + "'");
  }
  if (ls <= 0 || lu <= 0)
    throw ConfigError("problem 'linear-diag': lambda_s and lambda_u must be positive");

  ProblemModel model;
  model.n = 3;
  model.m = 1;
  Matrix A0 = Vector((Vector(3) << 0.0, ls, -lu).finished()).asDiagonal();
  model.A = [A0](const Vector&) { return A0; };
  model.F = [](const Vector&) { return Vector::Zero(3); };
  model.dA = [](const Vector&, const Vector&) { return Matrix::Zero(3, 3); };
  model.dF = [](const Vector&) { return Matrix::Zero(3, 3); };
  model.psi = [](const Vector& zeta) {
    return Vector((Vector(3) << zeta(0), 0.0, 0.0).finished());
  };
  model.rho_V = 10.0;
  model.ball_center = Vector::Zero(3);

  ProblemRegistryEntry entry;
  entry.name = "linear-diag";
  entry.model = std::move(model);
  entry.u_star = Vector::Zero(3);
  entry.stable_oracle = [](const Vector& y0, const Vector& xi) -> Vector {
    return xi + y0;
  };
  entry.unstable_oracle = [](const Vector& z0, const Vector& xi) -> Vector {
    return xi + z0;
  };
  return entry;
}

// f(u) = (u2^2, -(1-u1) u2); equilibria {(xi, 0)}, normally stable for xi < 1.
// u1 - u1^2/2 + u2^2/2 is conserved, which gives the closed-form fiber
// x0 = 1 - sqrt((1-xi)^2 + y0^2); see docs/oracles.md.
ProblemRegistryEntry make_line_stable(const Params& params) {
  reject_params("line-stable", params);

  ProblemModel model;
  model.n = 2;
  model.m = 1;
  model.A = [](const Vector& u) {
    Matrix A = Matrix::Zero(2, 2);
    A(1, 1) = 1.0 - u(0);
    return A;
  };
  model.F = [](const Vector& u) {
    return Vector((Vector(2) << u(1) * u(1), 0.0).finished());
  };
  model.dA = [](const Vector&, const Vector& w) {
    Matrix D = Matrix::Zero(2, 2);
    D(1, 1) = -w(0);
    return D;
  };
  model.dF = [](const Vector& u) {
    Matrix J = Matrix::Zero(2, 2);
    J(0, 1) = 2.0 * u(1);
    return J;
  };
  model.psi = [](const Vector& zeta) {
    return Vector((Vector(2) << zeta(0), 0.0).finished());
  };
  model.rho_V = 0.5;
  model.ball_center = Vector::Zero(2);

  ProblemRegistryEntry entry;
  entry.name = "line-stable";
  entry.model = std::move(model);
  entry.u_star = Vector::Zero(2);
  entry.stable_oracle = [](const Vector& y0, const Vector& xi) -> Vector {
    double b = y0(1), c = xi(0);
    double x0 = 1.0 - std::sqrt((1.0 - c) * (1.0 - c) + b * b);
    return Vector((Vector(2) << x0, b).finished());
  };
  return entry;
}

// f(u) = (u2^2 + u3^2, -(1-u1) u2, (1-u1) u3); equilibria {(xi,0,0)},
// normally hyperbolic for xi < 1. Conserved: u1 - u1^2/2 + u2^2/2 - u3^2/2.
ProblemRegistryEntry make_line_hyperbolic(const Params& params) {
  reject_params("line-hyperbolic", params);

  ProblemModel model;
  model.n = 3;
  model.m = 1;
  model.A = [](const Vector& u) {
    Matrix A = Matrix::Zero(3, 3);
    A(1, 1) = 1.0 - u(0);
    A(2, 2) = -(1.0 - u(0));
    return A;
  };
  model.F = [](const Vector& u) {
    return Vector((Vector(3) << u(1) * u(1) + u(2) * u(2), 0.0, 0.0).finished());
  };
  model.dA = [](const Vector&, const Vector& w) {
    Matrix D = Matrix::Zero(3, 3);
    D(1, 1) = -w(0);
    D(2, 2) = w(0);
    return D;
  };
  model.dF = [](const Vector& u) {
    Matrix J = Matrix::Zero(3, 3);
    J(0, 1) = 2.0 * u(1);
    J(0, 2) = 2.0 * u(2);
    return J;
  };
  model.psi = [](const Vector& zeta) {
    return Vector((Vector(3) << zeta(0), 0.0, 0.0).finished());
  };
  model.rho_V = 0.5;
  model.ball_center = Vector::Zero(3);

  ProblemRegistryEntry entry;
  entry.name = "line-hyperbolic";
  entry.model = std::move(model);
  entry.u_star = Vector::Zero(3);
  entry.stable_oracle = [](const Vector& y0, const Vector& xi) -> Vector {
    double b = y0(1), c = xi(0);
    double x0 = 1.0 - std::sqrt((1.0 - c) * (1.0 - c) + b * b);
    return Vector((Vector(3) << x0, b, 0.0).finished());
  };
  entry.unstable_oracle = [](const Vector& z0, const Vector& xi) -> Vector {
    double b = z0(2), c = xi(0);
    double rad = (1.0 - c) * (1.0 - c) - b * b;
    if (rad <= 0.0)
      throw DomainError("line-hyperbolic unstable oracle: |z0| must be < 1 - xi");
    double x0 = 1.0 - std::sqrt(rad);
    return Vector((Vector(3) << x0, 0.0, b).finished());
  };
  return entry;
}

// A = diag(0, 1), F = (0, u1^2); equilibria {(xi, xi^2)}: a curved chart
// phi(x e1) = x^2 e2. Fibers are the vertical lines u1 = xi.
ProblemRegistryEntry make_parabola_stable(const Params& params) {
  reject_params("parabola-stable", params);

  ProblemModel model;
  model.n = 2;
  model.m = 1;
  Matrix A0 = Vector((Vector(2) << 0.0, 1.0).finished()).asDiagonal();
  model.A = [A0](const Vector&) { return A0; };
  model.F = [](const Vector& u) {
    return Vector((Vector(2) << 0.0, u(0) * u(0)).finished());
  };
  model.dA = [](const Vector&, const Vector&) { return Matrix::Zero(2, 2); };
  model.dF = [](const Vector& u) {
    Matrix J = Matrix::Zero(2, 2);
    J(1, 0) = 2.0 * u(0);
    return J;
  };
  model.psi = [](const Vector& zeta) {
    return Vector((Vector(2) << zeta(0), zeta(0) * zeta(0)).finished());
  };
  model.rho_V = 1.0;
  model.ball_center = Vector::Zero(2);

  ProblemRegistryEntry entry;
  entry.name = "parabola-stable";
  entry.model = std::move(model);
  entry.u_star = Vector::Zero(2);
  entry.stable_oracle = [](const Vector& y0, const Vector& xi) -> Vector {
    double c = xi(0);
    return Vector((Vector(2) << c, c * c + y0(1)).finished());
  };
  return entry;
}

// f(u) = (u2, 0): the linearization is a nilpotent Jordan block, so 0 is not
// a semi-simple eigenvalue. Planted failure case for the hyperbolicity gate.
ProblemRegistryEntry make_nilpotent_demo(const Params& params) {
  reject_params("nilpotent-demo", params);

  ProblemModel model;
  model.n = 2;
  model.m = 1;
  Matrix A = Matrix::Zero(2, 2);
  A(0, 1) = -1.0;
  model.A = [A](const Vector&) { return A; };
  model.F = [](const Vector&) { return Vector::Zero(2); };
  model.dA = [](const Vector&, const Vector&) { return Matrix::Zero(2, 2); };
  model.dF = [](const Vector&) { return Matrix::Zero(2, 2); };
  model.psi = [](const Vector& zeta) {
    return Vector((Vector(2) << zeta(0), 0.0).finished());
  };
  model.rho_V = 0.5;
  model.ball_center = Vector::Zero(2);

  ProblemRegistryEntry entry;
  entry.name = "nilpotent-demo";
  entry.model = std::move(model);
  entry.u_star = Vector::Zero(2);
  return entry;
}

using Factory = ProblemRegistryEntry (*)(const Params&);

const std::vector<std::pair<std::string, Factory>>& factories() {
  static const std::vector<std::pair<std::string, Factory>> table = {
      {"linear-diag", make_linear_diag},
      {"line-stable", make_line_stable},
      {"line-hyperbolic", make_line_hyperbolic},
      {"parabola-stable", make_parabola_stable},
      {"nilpotent-demo", make_nilpotent_demo},
  };
  return table;
}

}  // namespace

ProblemRegistryEntry make_problem(const std::string& name, const Params& params) {
  for (const auto& [key, factory] : factories()) {
    if (key == name) return factory(params);
  }
  throw ConfigError("unknown problem '" + name + "'");
}

const ProblemRegistryEntry& get_problem(const std::string& name) {
  static std::mutex mu;
  static std::unordered_map<std::string, ProblemRegistryEntry> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(name);
  if (it == cache.end()) {
    it = cache.emplace(name, make_problem(name, {})).first;
  }
  return it->second;
}

std::vector<std::string> problem_names() {
  std::vector<std::string> names;
  for (const auto& [key, factory] : factories()) names.push_back(key);
  return names;
}

}  // namespace folia
