#include "folia/chart.hpp"

#include <cmath>
#include <mutex>
#include <random>
#include <unordered_map>

#include "folia/normalform.hpp"

namespace folia {

namespace {

constexpr double kMemoQuantum = 1e-12;

struct KeyHash {
  size_t operator()(const std::vector<long long>& key) const {
    size_t h = 1469598103934665603ull;
    for (long long v : key) {
      h ^= static_cast<size_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }
};

// Central-difference Jacobian of the manifold parametrization.
Matrix psi_jacobian(const PsiEval& psi, const Vector& zeta) {
  const auto m = zeta.size();
  const auto n = psi(zeta).size();
  double h = 1e-6 * (1.0 + zeta.norm());
  Matrix J(n, m);
  Vector e = Vector::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    e(i) = h;
    J.col(i) = (psi(zeta + e) - psi(zeta - e)) / (2.0 * h);
    e(i) = 0.0;
  }
  return J;
}

}  // namespace

struct EquilibriumChart::Memo {
  std::mutex mu;
  std::unordered_map<std::vector<long long>, std::pair<Vector, Vector>, KeyHash> table;
};

EquilibriumChart::EquilibriumChart(const ProblemModel* model, const SpectralSplit* split,
                                   Vector u_star, double rho_0, PhiEval phi,
                                   DphiEval dphi)
    : model_(model),
      split_(split),
      u_star_(std::move(u_star)),
      rho_0_(rho_0),
      phi_(std::move(phi)),
      dphi_(std::move(dphi)),
      memo_(std::make_shared<Memo>()) {}

std::pair<Vector, Vector> EquilibriumChart::phi(const Vector& x) const {
  if (x.norm() > rho_0_ * (1.0 + 1e-12)) {
    throw DomainError("chart: |x| = " + std::to_string(x.norm()) +
                      " exceeds the chart radius rho_0 = " + std::to_string(rho_0_));
  }
  if ((split_->P_c * x - x).norm() > 1e-10 * (1.0 + x.norm())) {
    throw SubspaceError("chart: x is not a center vector");
  }

  Vector coords = split_->B_c.transpose() * x;
  std::vector<long long> key(coords.size());
  for (Eigen::Index i = 0; i < coords.size(); ++i)
    key[i] = std::llround(coords(i) / kMemoQuantum);

  {
    std::lock_guard<std::mutex> lock(memo_->mu);
    auto it = memo_->table.find(key);
    if (it != memo_->table.end()) return it->second;
  }
  auto value = phi_(x);
  {
    std::lock_guard<std::mutex> lock(memo_->mu);
    memo_->table[key] = value;
  }
  return value;
}

Vector EquilibriumChart::phi_total(const Vector& x) const {
  auto [ps, pu] = phi(x);
  return ps + pu;
}

Matrix EquilibriumChart::dphi(const Vector& x) const {
  if (x.norm() > rho_0_ * (1.0 + 1e-12)) {
    throw DomainError("chart: |x| exceeds the chart radius");
  }
  return dphi_(x);
}

std::pair<Vector, Vector> eval_phi(const EquilibriumChart& chart, const Vector& x) {
  return chart.phi(x);
}

Matrix eval_phi_derivative(const EquilibriumChart& chart, const Vector& x) {
  return chart.dphi(x);
}

EquilibriumChart build_chart(const ProblemModel& model, const SpectralSplit& split,
                             const ProblemRegistryEntry& entry,
                             const ChartOptions& options) {
  auto report = check_normally_hyperbolic(split, model.m);
  if (report.classification == Stability::Fails) {
    throw ChartError("build_chart: equilibrium is not normally hyperbolic/stable: " +
                     report.reason);
  }

  const double rho_0 =
      options.rho_0 > 0.0 ? options.rho_0 : std::min(0.3, model.rho_V / 2.0);
  const Vector u_star = entry.u_star;
  const bool via_psi = options.use_psi && model.psi.has_value();

  EquilibriumChart::PhiEval phi_eval;
  EquilibriumChart::DphiEval dphi_eval;

  if (via_psi) {
    const PsiEval psi = *model.psi;
    if ((psi(Vector::Zero(model.m)) - u_star).norm() > 1e-9) {
      throw ChartError("build_chart: psi(0) != u_star");
    }

    // g(zeta) = P_c (psi(zeta) - u_star) in center coordinates; phi is the
    // hyperbolic part of psi(g^{-1}(x)).
    const Matrix Bc = split.B_c;
    const Matrix Pc = split.P_c, Ps = split.P_s, Pu = split.P_u;
    auto g = [psi, Bc, Pc, u_star](const Vector& zeta) -> Vector {
      return Bc.transpose() * (Pc * (psi(zeta) - u_star));
    };
    auto g_jacobian = [psi, Bc, Pc](const Vector& zeta) -> Matrix {
      return Bc.transpose() * (Pc * psi_jacobian(psi, zeta));
    };

    {
      Eigen::FullPivLU<Matrix> lu(g_jacobian(Vector::Zero(model.m)));
      if (!lu.isInvertible()) {
        throw ChartError("build_chart: chart map g has singular derivative at 0 "
                         "(rank of psi'(0) below m)");
      }
    }

    auto solve_zeta = [g, g_jacobian, options, model](const Vector& x,
                                                      const Matrix& Bc_) -> Vector {
      Vector target = Bc_.transpose() * x;
      Vector zeta = g_jacobian(Vector::Zero(model.m)).lu().solve(target);
      for (int it = 0; it < options.max_newton; ++it) {
        Vector r = g(zeta) - target;
        if (r.norm() <= options.newton_tol) return zeta;
        Eigen::PartialPivLU<Matrix> lu(g_jacobian(zeta));
        zeta -= lu.solve(r);
      }
      Vector r = g(zeta) - target;
      if (r.norm() <= options.newton_tol) return zeta;
      throw ChartError("chart: Newton on g(zeta) = x did not reach " +
                       std::to_string(options.newton_tol) + " within " +
                       std::to_string(options.max_newton) +
                       " iterations; x may exceed the chart radius");
    };

    phi_eval = [psi, solve_zeta, Bc, Ps, Pu, u_star](const Vector& x) {
      Vector zeta = solve_zeta(x, Bc);
      Vector w = psi(zeta) - u_star;
      return std::make_pair(Vector(Ps * w), Vector(Pu * w));
    };
    dphi_eval = [psi, solve_zeta, g_jacobian, Bc, Ps, Pu](const Vector& x) -> Matrix {
      Vector zeta = solve_zeta(x, Bc);
      Matrix dpsi = psi_jacobian(psi, zeta);
      Matrix dg = g_jacobian(zeta);
      return (Ps + Pu) * dpsi * dg.lu().solve(Matrix(Bc.transpose()));
    };
  } else {
    // Direct route: solve P_s f(u* + x + w) = 0, P_u f(u* + x + w) = 0 for
    // w in range(P_s) + range(P_u).
    const int n = model.n, m = model.m;
    Matrix Csu(n, n - m);
    Csu << split.B_s, split.B_u;
    Matrix Pi(n - m, n);
    Pi << split.B_s.transpose() * split.P_s, split.B_u.transpose() * split.P_u;
    const Matrix Ps = split.P_s, Pu = split.P_u;
    const ProblemModel* mp = &model;

    auto solve_w = [mp, Csu, Pi, u_star, options, n, m](const Vector& x) -> Vector {
      Vector c = Vector::Zero(n - m);
      for (int it = 0; it < options.max_newton; ++it) {
        Vector r = Pi * eval_rhs(*mp, u_star + x + Csu * c);
        if (r.norm() <= options.newton_tol) return c;
        Matrix J = Pi * eval_rhs_jacobian(*mp, u_star + x + Csu * c) * Csu;
        Eigen::PartialPivLU<Matrix> lu(J);
        c -= lu.solve(r);
      }
      Vector r = Pi * eval_rhs(*mp, u_star + x + Csu * c);
      if (r.norm() <= options.newton_tol) return c;
      throw ChartError("chart: equilibrium Newton did not reach " +
                       std::to_string(options.newton_tol) + " within " +
                       std::to_string(options.max_newton) +
                       " iterations; x may exceed the chart radius");
    };

    const int ms = split.dims[1];
    const Matrix Bs = split.B_s, Bu = split.B_u;
    phi_eval = [solve_w, Bs, Bu, ms](const Vector& x) {
      Vector c = solve_w(x);
      Vector phi_s = Bs * c.head(ms);
      Vector phi_u = Bu * c.tail(c.size() - ms);
      return std::make_pair(phi_s, phi_u);
    };
    dphi_eval = [solve_w, mp, Csu, Pi, u_star](const Vector& x) -> Matrix {
      Vector c = solve_w(x);
      Matrix Df = eval_rhs_jacobian(*mp, u_star + x + Csu * c);
      Matrix Jw = Pi * Df * Csu;
      Eigen::PartialPivLU<Matrix> lu(Jw);
      return -Csu * lu.solve(Matrix(Pi * Df));
    };
  }

  return EquilibriumChart(&model, &split, u_star, rho_0, std::move(phi_eval),
                          std::move(dphi_eval));
}

ChartVerification verify_chart(const EquilibriumChart& chart, int samples,
                               unsigned long long seed) {
  const auto& split = chart.split();
  const auto& model = chart.model();
  const int m = model.m;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ChartVerification v;
  v.samples = samples;
  for (int s = 0; s < samples; ++s) {
    Vector coords(m);
    for (int i = 0; i < m; ++i) coords(i) = gauss(rng);
    double nrm = coords.norm();
    if (nrm == 0.0) nrm = 1.0;
    coords *= chart.rho_0() * std::pow(unif(rng), 1.0 / m) / nrm;
    Vector x = split.B_c * coords;

    auto [phi_s, phi_u] = chart.phi(x);
    Vector g = eval_G(model, split.A0, chart.u_star(), x + phi_s + phi_u);
    v.max_center_residual = std::max(v.max_center_residual, (split.P_c * g).norm());
    v.max_hyperbolic_residual =
        std::max(v.max_hyperbolic_residual,
                 (split.P_s * g - split.A_s_full * phi_s).norm());
    v.max_hyperbolic_residual =
        std::max(v.max_hyperbolic_residual,
                 (split.P_u * g - split.A_u_full * phi_u).norm());
  }
  v.pass = v.max_center_residual <= 1e-9 && v.max_hyperbolic_residual <= 1e-9;
  return v;
}

}  // namespace folia
