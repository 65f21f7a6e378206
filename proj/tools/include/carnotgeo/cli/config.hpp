#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carnotgeo/checks.hpp"

namespace carnot::cli {

using json = nlohmann::json;

// Configuration problems map to exit code 2, like JSON syntax errors.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckSpec {
  std::string check;
  std::string surface;  // empty for group-level checks
  json params;          // the full entry, validated per check kind
};

struct EigenSpec {
  std::string surface;
  BoundaryCondition problem = BoundaryCondition::dirichlet;
  int count = 4;
};

struct RunConfig {
  json group_json;
  HomNormSpec norm = HomNormSpec::koranyi();
  std::map<std::string, json> surfaces;  // validated surface entries by name
  std::vector<std::string> surface_order;
  double eps_char = 1e-8;
  std::uint64_t seed = 0x5eed;
  bool refine = true;
  std::map<std::string, double> tolerances;
  std::vector<CheckSpec> checks;
  std::optional<EigenSpec> eigen;
  std::string report_path;
  std::string plots_path;
};

// throws ConfigError on unknown keys and malformed values
RunConfig parse_config(const json& j);
json read_json_file(const std::string& path);

// group definition: builtin shorthand or signature plus structure constants
CarnotGroup build_group(const json& j);
StructureTensor parse_tensor(const json& j);
HomNormSpec parse_norm(const json& j);

// Surface entry with its grid; `grid_override` replaces the grid: a single
// value sets the first axis and keeps the configured axis ratios.
Surface build_surface(const CarnotGroup& g, const json& j, const std::vector<int>& grid_override = {});

std::vector<int> parse_grid_flag(const std::string& s);

// check names accepted in the "checks" list
const std::vector<std::string>& known_checks();

}  // namespace carnot::cli
