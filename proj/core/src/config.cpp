#include <fstream>
#include <sstream>

#include "folia/cli.hpp"

namespace folia::cli {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& origin, int line, const std::string& key,
                    const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(origin, line, "field '" + key + "': expected a real number, got '" + value + "'");
  }
}

double parse_double_or_auto(const std::string& origin, int line, const std::string& key,
                            const std::string& value) {
  if (value == "auto") return 0.0;
  return parse_double(origin, line, key, value);
}

long long parse_int(const std::string& origin, int line, const std::string& key,
                    const std::string& value) {
  try {
    size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(origin, line, "field '" + key + "': expected an integer, got '" + value + "'");
  }
}

Vector parse_vector(const std::string& origin, int line, const std::string& key,
                    const std::string& value) {
  std::istringstream in(value);
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) vals.push_back(parse_double(origin, line, key, tok));
  if (vals.empty()) fail(origin, line, "field '" + key + "': expected numbers");
  Vector v(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

}  // namespace

RunConfig parse_config_stream(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "problem" && section != "params" && section != "equilibrium" &&
          section != "solver" && section != "grid" && section != "output" &&
          section != "foliate" && section != "chart") {
        fail(origin, lineno, "unknown section '" + section + "'");
      }
      continue;
    }

    auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    if (value.empty()) fail(origin, lineno, "field '" + key + "': empty value");

    if (section == "problem") {
      if (key == "name")
        cfg.problem = value;
      else
        fail(origin, lineno, "unknown key '" + key + "' in [problem]");
    } else if (section == "params") {
      cfg.params[key] = parse_double(origin, lineno, key, value);
    } else if (section == "equilibrium") {
      if (key == "u_star")
        cfg.u_star_override = parse_vector(origin, lineno, key, value);
      else
        fail(origin, lineno, "unknown key '" + key + "' in [equilibrium]");
    } else if (section == "solver") {
      if (key == "sigma")
        cfg.sigma = parse_double_or_auto(origin, lineno, key, value);
      else if (key == "tol_residual")
        cfg.tol_residual = parse_double(origin, lineno, key, value);
      else if (key == "max_iters")
        cfg.max_iters = static_cast<int>(parse_int(origin, lineno, key, value));
      else if (key == "radius")
        cfg.radius = parse_double_or_auto(origin, lineno, key, value);
      else
        fail(origin, lineno, "unknown key '" + key + "' in [solver]");
    } else if (section == "grid") {
      if (key == "n") {
        cfg.grid_n = static_cast<int>(parse_int(origin, lineno, key, value));
        cfg.grid_pinned = true;
      } else if (key == "t") {
        cfg.grid_t = parse_double_or_auto(origin, lineno, key, value);
        if (cfg.grid_t > 0.0) cfg.grid_pinned = true;
      } else {
        fail(origin, lineno, "unknown key '" + key + "' in [grid]");
      }
    } else if (section == "output") {
      if (key == "dir")
        cfg.output_dir = value;
      else if (key == "seed")
        cfg.seed = parse_int(origin, lineno, key, value);
      else
        fail(origin, lineno, "unknown key '" + key + "' in [output]");
    } else if (section == "foliate") {
      if (key == "kind") {
        if (value == "stable")
          cfg.foliate.kind = FiberKind::Stable;
        else if (value == "unstable")
          cfg.foliate.kind = FiberKind::Unstable;
        else
          fail(origin, lineno, "field 'kind': expected stable or unstable");
      } else if (key == "boundary_min")
        cfg.foliate.boundary_min = parse_double(origin, lineno, key, value);
      else if (key == "boundary_max")
        cfg.foliate.boundary_max = parse_double(origin, lineno, key, value);
      else if (key == "boundary_count")
        cfg.foliate.boundary_count = static_cast<int>(parse_int(origin, lineno, key, value));
      else if (key == "xi_min")
        cfg.foliate.xi_min = parse_double(origin, lineno, key, value);
      else if (key == "xi_max")
        cfg.foliate.xi_max = parse_double(origin, lineno, key, value);
      else if (key == "xi_count")
        cfg.foliate.xi_count = static_cast<int>(parse_int(origin, lineno, key, value));
      else
        fail(origin, lineno, "unknown key '" + key + "' in [foliate]");
    } else if (section == "chart") {
      if (key == "count")
        cfg.chart_count = static_cast<int>(parse_int(origin, lineno, key, value));
      else
        fail(origin, lineno, "unknown key '" + key + "' in [chart]");
    } else {
      fail(origin, lineno, "key '" + key + "' outside of any section");
    }
  }
  if (cfg.problem.empty())
    throw ConfigError(origin + ": missing required key 'name' in section [problem]");
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config_stream(in, path);
}

}  // namespace folia::cli
