#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>

#include "folia/cli.hpp"

namespace {

folia::Vector parse_vector_arg(const std::string& text) {
  std::string cleaned = text;
  for (char& c : cleaned)
    if (c == ',') c = ' ';
  std::istringstream in(cleaned);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  if (vals.empty() || !in.eof())
    throw folia::ConfigError("expected a list of reals, got '" + text + "'");
  folia::Vector out(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) out(i) = vals[i];
  return out;
}

folia::cli::RunConfig load_config(const std::string& config_path,
                                  const std::string& problem,
                                  const std::string& out_dir) {
  folia::cli::RunConfig cfg;
  if (!config_path.empty()) cfg = folia::cli::parse_config(config_path);
  if (!problem.empty()) cfg.problem = problem;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (cfg.problem.empty())
    throw folia::ConfigError("no problem selected; use --config or --problem");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable/unstable foliations of equilibrium manifolds for "
               "quasilinear systems u' + A(u)u = F(u)"};
  app.require_subcommand(1);

  std::string config_path, problem, out_dir, kind_str = "stable";
  app.add_option("--config", config_path, "Config file (INI-style key = value)");
  app.add_option("--problem", problem, "Registry problem name (overrides config)");
  app.add_option("--out", out_dir, "Output directory (overrides config)");

  auto* analyze = app.add_subcommand(
      "analyze", "Linearize, split the spectrum, classify normal hyperbolicity");
  auto* chart = app.add_subcommand(
      "chart", "Sample the equilibrium-manifold graph map as CSV");
  auto* fiber = app.add_subcommand("fiber", "Solve one stable/unstable fiber");
  auto* foliate =
      app.add_subcommand("foliate", "Tabulate fibers over a (boundary, xi) grid");
  auto* decompose = app.add_subcommand(
      "decompose", "Invert u0 = lambda^s(y0, xi) on a normally stable problem");
  auto* verify = app.add_subcommand(
      "verify", "Solve a fiber grid and verify convergence by time integration");

  std::string boundary_str, xi_str, u0_str;
  fiber->add_option("--kind", kind_str, "stable | unstable");
  fiber->add_option("--boundary", boundary_str,
                    "Boundary value (ambient components, comma separated)")
      ->required();
  fiber->add_option("--xi", xi_str, "Base-point center coordinates (ambient)")
      ->required();
  foliate->add_option("--kind", kind_str, "stable | unstable");
  verify->add_option("--kind", kind_str, "stable | unstable");
  decompose->add_option("--u0", u0_str, "Initial value (ambient components)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    folia::cli::RunConfig cfg = load_config(config_path, problem, out_dir);
    folia::FiberKind kind;
    if (kind_str == "stable")
      kind = folia::FiberKind::Stable;
    else if (kind_str == "unstable")
      kind = folia::FiberKind::Unstable;
    else
      throw folia::ConfigError("--kind must be stable or unstable");

    if (analyze->parsed()) return folia::cli::run_analyze(cfg);
    if (chart->parsed()) return folia::cli::run_chart(cfg);
    if (fiber->parsed())
      return folia::cli::run_fiber(cfg, kind, parse_vector_arg(boundary_str),
                                   parse_vector_arg(xi_str));
    if (foliate->parsed()) {
      cfg.foliate.kind = kind;
      return folia::cli::run_foliate(cfg);
    }
    if (decompose->parsed())
      return folia::cli::run_decompose(cfg, parse_vector_arg(u0_str));
    if (verify->parsed()) {
      cfg.foliate.kind = kind;
      return folia::cli::run_verify(cfg);
    }
  } catch (const folia::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return folia::cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return folia::cli::kExitSolver;
  }
  return folia::cli::kExitConfig;
}
