#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "folia/lpsolver.hpp"
#include "folia/model.hpp"
#include "folia/types.hpp"

namespace folia::cli {

/// Rectangular (boundary, xi) grid sampled along the first coordinate of the
/// respective one-dimensional subspaces.
struct FoliateSpec {
  FiberKind kind = FiberKind::Stable;
  double boundary_min = -0.1, boundary_max = 0.1;
  int boundary_count = 11;
  double xi_min = -0.1, xi_max = 0.1;
  int xi_count = 11;
};

struct RunConfig {
  std::string problem;
  Params params;
  std::optional<Vector> u_star_override;
  double sigma = 0.0;          ///< 0 = auto (0.9 * omega)
  double tol_residual = 1e-9;
  int max_iters = 40;
  double radius = 0.0;         ///< 0 = auto (min(0.2, rho_0))
  int grid_n = 128;
  double grid_t = 0.0;         ///< 0 = auto (14/sigma)
  bool grid_pinned = false;    ///< set when grid keys appear in the config
  std::string output_dir = "out";
  long long seed = 20240601;
  FoliateSpec foliate;
  int chart_count = 101;
};

/// INI-style key-value config. Throws ConfigError with file/line/field
/// diagnostics.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_stream(std::istream& in, const std::string& origin);

/// Exit statuses shared by the CLI subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailedCheck = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPrecondition = 3;
inline constexpr int kExitSolver = 4;

int run_analyze(const RunConfig& config);
int run_chart(const RunConfig& config);
int run_fiber(const RunConfig& config, FiberKind kind, const Vector& boundary,
              const Vector& xi);
int run_foliate(const RunConfig& config);
int run_decompose(const RunConfig& config, const Vector& u0);
int run_verify(const RunConfig& config);

}  // namespace folia::cli
