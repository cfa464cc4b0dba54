#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <json.hpp>

#include "folia/cli.hpp"
#include "folia/flow.hpp"

namespace folia::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json config_echo(const RunConfig& cfg) {
  json j;
  j["problem"] = cfg.problem;
  j["params"] = json::object();
  for (const auto& [k, v] : cfg.params) j["params"][k] = v;
  if (cfg.u_star_override) j["u_star"] = to_json(*cfg.u_star_override);
  j["sigma"] = cfg.sigma;
  j["tol_residual"] = cfg.tol_residual;
  j["max_iters"] = cfg.max_iters;
  j["radius"] = cfg.radius;
  j["grid_n"] = cfg.grid_n;
  j["grid_t"] = cfg.grid_t;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  return j;
}

json record_header(const RunConfig& cfg, const std::string& command) {
  json j;
  j["version"] = version();
  j["command"] = command;
  j["config"] = config_echo(cfg);
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

// Everything the subcommands need, built once per invocation.
struct Workspace {
  ProblemRegistryEntry entry;
  Vector u_star;
  Matrix A0;
  SpectralSplit split;
  ClassificationReport report;
  std::optional<EquilibriumChart> chart;

  const ProblemModel& model() const { return entry.model; }
};

Workspace open_workspace(const RunConfig& cfg, bool need_chart) {
  Workspace ws;
  ws.entry = make_problem(cfg.problem, cfg.params);
  if (cfg.u_star_override) {
    if (cfg.u_star_override->size() != ws.entry.model.n)
      throw ConfigError("equilibrium override has dimension " +
                        std::to_string(cfg.u_star_override->size()) + ", expected " +
                        std::to_string(ws.entry.model.n));
    ws.entry.u_star = *cfg.u_star_override;
    ws.entry.model.ball_center = ws.entry.u_star;
  }
  ws.u_star = ws.entry.u_star;
  ws.A0 = linearize(ws.entry.model, ws.u_star);
  try {
    ws.split = split_spectrum(ws.A0, ws.entry.model.m);
  } catch (const SpectralError&) {
    SplitOptions lenient;
    lenient.strict = false;
    ws.split = split_spectrum(ws.A0, ws.entry.model.m, lenient);
  }
  ws.report = check_normally_hyperbolic(ws.split, ws.entry.model.m);
  if (need_chart) {
    if (ws.report.classification == Stability::Fails)
      throw SolveError("problem '" + cfg.problem +
                       "' fails normal hyperbolicity: " + ws.report.reason);
    ws.chart.emplace(build_chart(ws.entry.model, ws.split, ws.entry));
  }
  return ws;
}

FiberRequest proto_request(const RunConfig& cfg) {
  FiberRequest req;
  req.sigma = cfg.sigma;
  req.tol_residual = cfg.tol_residual;
  req.max_iters = cfg.max_iters;
  req.radius = cfg.radius;
  req.grid.N = cfg.grid_n;
  req.grid.T = cfg.grid_t;
  req.allow_grid_extension = !cfg.grid_pinned;
  return req;
}

// Deterministic sign for plot axes: largest-magnitude entry positive.
Vector signed_direction(const Matrix& B) {
  Vector dir = B.col(0);
  Eigen::Index imax = 0;
  dir.cwiseAbs().maxCoeff(&imax);
  if (dir(imax) < 0) dir = -dir;
  return dir;
}

json eigs_to_json(const std::vector<std::complex<double>>& eigs) {
  json a = json::array();
  for (const auto& e : eigs) a.push_back({{"re", e.real()}, {"im", e.imag()}});
  return a;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const SubspaceError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}

json solution_to_json(const FiberSolution& sol) {
  json j;
  j["u0"] = to_json(sol.u0);
  j["x0"] = to_json(sol.x0);
  if (sol.z0_rec.size() > 0) j["z0_rec"] = to_json(sol.z0_rec);
  if (sol.y0_rec.size() > 0) j["y0_rec"] = to_json(sol.y0_rec);
  j["residual"] = sol.residual;
  j["iterations"] = sol.iterations;
  j["decay_rate_est"] = sol.decay_rate_est;
  j["tail_budget"] = sol.tail_budget;
  j["sigma"] = sol.sigma;
  return j;
}

void write_trajectory_csv(const fs::path& path, const NormalFormContext& ctx,
                          const TrajectoryGrid& traj) {
  std::string csv = "t";
  const int n = static_cast<int>(ctx.u_star.size());
  for (int i = 0; i < n; ++i) csv += ",x_" + std::to_string(i);
  for (int i = 0; i < n; ++i) csv += ",y_" + std::to_string(i);
  for (int i = 0; i < n; ++i) csv += ",z_" + std::to_string(i);
  for (int i = 0; i < n; ++i) csv += ",u_" + std::to_string(i);
  csv += "\n";
  for (size_t j = 0; j < traj.nodes.size(); ++j) {
    csv += fmt(traj.nodes[j]);
    Vector u = from_normal_coords(ctx, traj.x[j], traj.y[j], traj.z[j]);
    for (int i = 0; i < n; ++i) csv += "," + fmt(traj.x[j](i));
    for (int i = 0; i < n; ++i) csv += "," + fmt(traj.y[j](i));
    for (int i = 0; i < n; ++i) csv += "," + fmt(traj.z[j](i));
    for (int i = 0; i < n; ++i) csv += "," + fmt(u(i));
    csv += "\n";
  }
  write_file(path, csv);
}

}  // namespace

int run_analyze(const RunConfig& cfg) {
  return guarded([&]() {
    Workspace ws = open_workspace(cfg, /*need_chart=*/false);
    fs::create_directories(cfg.output_dir);

    json j = record_header(cfg, "analyze");
    j["classification"] = to_string(ws.report.classification);
    j["reason"] = ws.report.reason;
    j["dims"] = {ws.report.dims[0], ws.report.dims[1], ws.report.dims[2]};
    j["kernel_dim"] = ws.report.kernel_dim;
    j["rank"] = ws.report.rank;
    j["rank_sq"] = ws.report.rank_sq;
    j["semisimple"] = ws.report.semisimple;
    j["imaginary_axis_clear"] = ws.report.imaginary_axis_clear;
    if (std::isfinite(ws.split.omega)) j["omega"] = ws.split.omega;
    j["sigma_c"] = eigs_to_json(ws.split.sigma_c);
    j["sigma_s"] = eigs_to_json(ws.split.sigma_s);
    j["sigma_u"] = eigs_to_json(ws.split.sigma_u);
    write_json(fs::path(cfg.output_dir) / "analyze.json", j);

    std::string txt;
    txt += "problem: " + cfg.problem + "\n";
    txt += "classification: " + std::string(to_string(ws.report.classification)) + "\n";
    if (!ws.report.reason.empty()) txt += "reason: " + ws.report.reason + "\n";
    txt += "dims: m_c=" + std::to_string(ws.report.dims[0]) +
           " m_s=" + std::to_string(ws.report.dims[1]) +
           " m_u=" + std::to_string(ws.report.dims[2]) + "\n";
    if (std::isfinite(ws.split.omega)) txt += "omega: " + fmt(ws.split.omega) + "\n";
    auto list_eigs = [&](const char* name,
                         const std::vector<std::complex<double>>& eigs) {
      txt += std::string(name) + ":";
      for (const auto& e : eigs)
        txt += " (" + fmt(e.real()) + (e.imag() >= 0 ? "+" : "") + fmt(e.imag()) + "i)";
      txt += "\n";
    };
    list_eigs("sigma_c", ws.split.sigma_c);
    list_eigs("sigma_s", ws.split.sigma_s);
    list_eigs("sigma_u", ws.split.sigma_u);
    write_file(fs::path(cfg.output_dir) / "analyze.txt", txt);

    if (ws.report.classification == Stability::Fails) {
      std::cerr << "classification failed: " << ws.report.reason << "\n";
      return kExitFailedCheck;
    }
    return kExitOk;
  });
}

int run_chart(const RunConfig& cfg) {
  return guarded([&]() {
    Workspace ws = open_workspace(cfg, /*need_chart=*/true);
    fs::create_directories(cfg.output_dir);
    const auto& chart = *ws.chart;
    const int n = ws.model().n;
    const int m = ws.model().m;

    Vector dir = signed_direction(ws.split.B_c);
    std::string csv;
    for (int i = 0; i < m; ++i) csv += (i ? "," : "") + ("x_" + std::to_string(i));
    for (int i = 0; i < n; ++i) csv += ",phi_s_" + std::to_string(i);
    for (int i = 0; i < n; ++i) csv += ",phi_u_" + std::to_string(i);
    for (int i = 0; i < n; ++i) csv += ",u_" + std::to_string(i);
    csv += "\n";

    const int count = std::max(2, cfg.chart_count);
    for (int k = 0; k < count; ++k) {
      double s = -chart.rho_0() + 2.0 * chart.rho_0() * k / (count - 1);
      Vector x = s * dir;
      auto [phi_s, phi_u] = chart.phi(x);
      Vector u = ws.u_star + x + phi_s + phi_u;
      Vector coords = ws.split.B_c.transpose() * x;
      for (int i = 0; i < m; ++i) csv += (i ? "," : "") + fmt(coords(i));
      for (int i = 0; i < n; ++i) csv += "," + fmt(phi_s(i));
      for (int i = 0; i < n; ++i) csv += "," + fmt(phi_u(i));
      for (int i = 0; i < n; ++i) csv += "," + fmt(u(i));
      csv += "\n";
    }
    write_file(fs::path(cfg.output_dir) / "chart.csv", csv);

    json j = record_header(cfg, "chart");
    j["rho_0"] = chart.rho_0();
    j["samples"] = count;
    write_json(fs::path(cfg.output_dir) / "chart.json", j);
    return kExitOk;
  });
}

int run_fiber(const RunConfig& cfg, FiberKind kind, const Vector& boundary,
              const Vector& xi) {
  return guarded([&]() {
    Workspace ws = open_workspace(cfg, /*need_chart=*/true);
    if (boundary.size() != ws.model().n || xi.size() != ws.model().n)
      throw ConfigError("boundary and xi must be ambient vectors of dimension " +
                        std::to_string(ws.model().n));
    fs::create_directories(cfg.output_dir);

    NormalFormContext ctx = make_context(ws.model(), ws.split, *ws.chart, xi);
    FiberRequest req = proto_request(cfg);
    req.kind = kind;
    req.boundary = boundary;
    req.xi = xi;

    FiberSolution sol;
    try {
      sol = kind == FiberKind::Stable ? solve_stable_fiber(ctx, req)
                                      : solve_unstable_fiber(ctx, req);
    } catch (const SolveError& e) {
      std::cerr << "solver failed: " << e.what() << "\n";
      return kExitSolver;
    }

    FoliationProblem fp{&ws.model(), &ws.split, &*ws.chart};
    FiberVerification ver = verify_fiber(fp, sol);

    json j = record_header(cfg, "fiber");
    j["request"] = {{"kind", kind == FiberKind::Stable ? "stable" : "unstable"},
                    {"boundary", to_json(boundary)},
                    {"xi", to_json(xi)}};
    j["result"] = solution_to_json(sol);
    j["verification"] = {{"terminal_distance", ver.terminal_distance},
                         {"decay_rate", ver.decay_rate},
                         {"horizon", ver.horizon},
                         {"ball_exit", ver.ball_exit},
                         {"pass", ver.pass}};
    write_json(fs::path(cfg.output_dir) / "fiber.json", j);
    write_trajectory_csv(fs::path(cfg.output_dir) / "fiber_trajectory.csv", ctx,
                         sol.trajectory);
    return kExitOk;
  });
}

namespace {

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v;
  if (count <= 0) return v;
  if (count == 1) {
    v.push_back(0.5 * (lo + hi));
    return v;
  }
  for (int i = 0; i < count; ++i) v.push_back(lo + (hi - lo) * i / (count - 1));
  return v;
}

}  // namespace

int run_foliate(const RunConfig& cfg) {
  return guarded([&]() {
    Workspace ws = open_workspace(cfg, /*need_chart=*/true);
    fs::create_directories(cfg.output_dir);
    const FoliateSpec& spec = cfg.foliate;
    const int n = ws.model().n;

    const Matrix& Bb =
        spec.kind == FiberKind::Stable ? ws.split.B_s : ws.split.B_u;
    if (Bb.cols() == 0)
      throw DomainError("foliate: the requested boundary subspace is empty");
    Vector bdir = signed_direction(Bb);
    Vector xdir = signed_direction(ws.split.B_c);

    std::string csv = "boundary,xi,status,residual,iterations";
    for (int i = 0; i < n; ++i) csv += ",u0_" + std::to_string(i);
    csv += "\n";

    int total = 0, converged = 0;
    for (double xiv : linspace(spec.xi_min, spec.xi_max, spec.xi_count)) {
      NormalFormContext ctx = make_context(ws.model(), ws.split, *ws.chart, xiv * xdir);
      for (double bv : linspace(spec.boundary_min, spec.boundary_max,
                                spec.boundary_count)) {
        ++total;
        FiberRequest req = proto_request(cfg);
        req.kind = spec.kind;
        req.boundary = bv * bdir;
        req.xi = xiv * xdir;
        csv += fmt(bv) + "," + fmt(xiv);
        try {
          FiberSolution sol = spec.kind == FiberKind::Stable
                                  ? solve_stable_fiber(ctx, req)
                                  : solve_unstable_fiber(ctx, req);
          ++converged;
          csv += ",ok," + fmt(sol.residual) + "," + std::to_string(sol.iterations);
          for (int i = 0; i < n; ++i) csv += "," + fmt(sol.u0(i));
        } catch (const Error&) {
          csv += ",failed,,";
          for (int i = 0; i < n; ++i) csv += ",";
        }
        csv += "\n";
      }
    }
    write_file(fs::path(cfg.output_dir) / "foliation.csv", csv);

    json j = record_header(cfg, "foliate");
    j["kind"] = spec.kind == FiberKind::Stable ? "stable" : "unstable";
    j["total"] = total;
    j["converged"] = converged;
    write_json(fs::path(cfg.output_dir) / "foliation.json", j);
    return kExitOk;
  });
}

int run_decompose(const RunConfig& cfg, const Vector& u0) {
  return guarded([&]() {
    Workspace ws = open_workspace(cfg, /*need_chart=*/true);
    if (u0.size() != ws.model().n)
      throw ConfigError("u0 must have dimension " + std::to_string(ws.model().n));
    fs::create_directories(cfg.output_dir);

    FoliationProblem fp{&ws.model(), &ws.split, &*ws.chart};
    DecomposeResult dec;
    try {
      dec = decompose_initial_value(fp, u0, proto_request(cfg));
    } catch (const SolveError& e) {
      std::cerr << "decompose failed: " << e.what() << "\n";
      return kExitSolver;
    }

    json j = record_header(cfg, "decompose");
    j["u0"] = to_json(u0);
    j["y0"] = to_json(dec.y0);
    j["xi"] = to_json(dec.xi);
    j["residual"] = dec.residual;
    j["iterations"] = dec.iterations;
    write_json(fs::path(cfg.output_dir) / "decompose.json", j);
    return kExitOk;
  });
}

int run_verify(const RunConfig& cfg) {
  return guarded([&]() {
    Workspace ws = open_workspace(cfg, /*need_chart=*/true);
    fs::create_directories(cfg.output_dir);
    const FoliateSpec& spec = cfg.foliate;
    const int n = ws.model().n;

    const Matrix& Bb =
        spec.kind == FiberKind::Stable ? ws.split.B_s : ws.split.B_u;
    if (Bb.cols() == 0)
      throw DomainError("verify: the requested boundary subspace is empty");
    Vector bdir = signed_direction(Bb);
    Vector xdir = signed_direction(ws.split.B_c);
    FoliationProblem fp{&ws.model(), &ws.split, &*ws.chart};

    std::string csv = "index,boundary,xi,status,terminal_distance,decay_rate,pass\n";
    int index = 0;
    bool all_pass = true;
    for (double xiv : linspace(spec.xi_min, spec.xi_max, spec.xi_count)) {
      NormalFormContext ctx = make_context(ws.model(), ws.split, *ws.chart, xiv * xdir);
      for (double bv : linspace(spec.boundary_min, spec.boundary_max,
                                spec.boundary_count)) {
        FiberRequest req = proto_request(cfg);
        req.kind = spec.kind;
        req.boundary = bv * bdir;
        req.xi = xiv * xdir;
        csv += std::to_string(index) + "," + fmt(bv) + "," + fmt(xiv);
        try {
          FiberSolution sol = spec.kind == FiberKind::Stable
                                  ? solve_stable_fiber(ctx, req)
                                  : solve_unstable_fiber(ctx, req);
          FiberVerification ver = verify_fiber(fp, sol);
          all_pass = all_pass && ver.pass;
          csv += ",ok," + fmt(ver.terminal_distance) + "," + fmt(ver.decay_rate) + "," +
                 (ver.pass ? "1" : "0") + "\n";

          double t_final = spec.kind == FiberKind::Stable ? ver.horizon : -ver.horizon;
          FlowOptions opts;
          opts.tol = 1e-10;
          opts.max_step = ver.horizon / 128.0;
          FlowResult flow = integrate(ws.model(), sol.u0, t_final, opts);
          std::string tcsv = "t";
          for (int i = 0; i < n; ++i) tcsv += ",u_" + std::to_string(i);
          tcsv += "\n";
          for (size_t k = 0; k < flow.times.size(); ++k) {
            tcsv += fmt(flow.times[k]);
            for (int i = 0; i < n; ++i) tcsv += "," + fmt(flow.states[k](i));
            tcsv += "\n";
          }
          write_file(fs::path(cfg.output_dir) /
                         ("verify_traj_" + std::to_string(index) + ".csv"),
                     tcsv);
        } catch (const Error&) {
          all_pass = false;
          csv += ",failed,,,0\n";
        }
        ++index;
      }
    }
    write_file(fs::path(cfg.output_dir) / "verify.csv", csv);
    return all_pass ? kExitOk : kExitFailedCheck;
  });
}

}  // namespace folia::cli
