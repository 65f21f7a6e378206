#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "carnotgeo/cli/config.hpp"

namespace carnot::cli {

constexpr int kReportSchemaVersion = 1;

enum ExitCode { kPass = 0, kFail = 1, kParseError = 2, kInfrastructure = 3 };

// command-line values that take precedence over the config file
struct Overrides {
  std::vector<int> grid;
  std::optional<double> eps_char;
  std::optional<std::uint64_t> seed;
  bool refine = false;
  bool emit_plots = false;
  std::string out;
};

struct PlotFile {
  std::string name;
  std::string content;
};

struct RunOutcome {
  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  std::string summary;
  std::vector<PlotFile> plots;
  int exit_code = kPass;
};

RunOutcome run_checks(const RunConfig& cfg, const Overrides& ov);
nlohmann::ordered_json run_eigen(const RunConfig& cfg, const Overrides& ov);
nlohmann::ordered_json describe_group(const CarnotGroup& g);
nlohmann::ordered_json sample_surface_json(const RunConfig& cfg, const std::string& surface, const Overrides& ov);

nlohmann::ordered_json report_json(const CheckReport& r, const std::string& check, const std::string& surface,
                                   const CheckOptions& o);

// Subcommand entry points; each returns the process exit code and writes
// diagnostics to `err`.
int cmd_validate_group(const std::string& path, std::ostream& out, std::ostream& err);
int cmd_describe_group(const std::string& path, const Overrides& ov, std::ostream& out, std::ostream& err);
int cmd_sample_surface(const std::string& path, const std::string& surface, const Overrides& ov, std::ostream& out,
                       std::ostream& err);
int cmd_run_checks(const std::string& path, const Overrides& ov, std::ostream& out, std::ostream& err);
int cmd_eigen(const std::string& path, const Overrides& ov, std::ostream& out, std::ostream& err);

}  // namespace carnot::cli
