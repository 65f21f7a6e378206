#include <iostream>

#include <CLI11.hpp>

#include "carnotgeo/cli/commands.hpp"

using namespace carnot::cli;

namespace {

void add_common(CLI::App* sub, std::string& config, std::string& positional) {
  sub->add_option("--config", config, "configuration JSON")->type_name("PATH");
  sub->add_option("config_path", positional, "configuration JSON (alternative to --config)")->type_name("PATH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carnotgeo: horizontal geometry of hypersurfaces in Carnot groups"};
  app.require_subcommand(1);

  std::string config, positional, grid, out, surface;
  double eps_char = 0.0;
  std::uint64_t seed = 0;
  bool emit_plots = false, refine = false;

  auto add_run_flags = [&](CLI::App* sub) {
    add_common(sub, config, positional);
    sub->add_option("--out", out, "output path (default: stdout)")->type_name("PATH");
    sub->add_option("--grid", grid, "grid override: N (first axis, ratios kept) or N,N,...")->type_name("N[,N]");
    sub->add_option("--eps-char", eps_char, "characteristic threshold on |P_H nu|")->type_name("FLOAT");
    sub->add_option("--seed", seed, "random seed")->type_name("INT");
    sub->add_flag("--refine", refine, "also evaluate at half resolution");
  };

  CLI::App* validate = app.add_subcommand("validate-group", "check the Lie algebra axioms of a group definition");
  add_common(validate, config, positional);
  CLI::App* describe = app.add_subcommand("describe-group", "print signature, structure constants and C_H matrices");
  add_common(describe, config, positional);
  describe->add_option("--out", out, "output path (default: stdout)")->type_name("PATH");
  CLI::App* sample = app.add_subcommand("sample-surface", "sample one configured surface and dump per-node geometry");
  add_run_flags(sample);
  sample->add_option("--surface", surface, "surface name (default: the first configured)");
  CLI::App* run = app.add_subcommand("run-checks", "run the configured checks and write the report");
  add_run_flags(run);
  run->add_flag("--emit-plots", emit_plots, "write two-column plot data for traces and sweeps");
  CLI::App* eigen = app.add_subcommand("eigen", "solve the configured L_HS eigenproblem");
  add_run_flags(eigen);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kParseError;
  }

  std::string path = !config.empty() ? config : positional;
  if (path.empty()) {
    std::cerr << "error: no configuration given (use --config PATH)\n";
    return kParseError;
  }
  Overrides ov;
  ov.out = out;
  ov.refine = refine;
  ov.emit_plots = emit_plots;
  try {
    if (!grid.empty()) ov.grid = parse_grid_flag(grid);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kParseError;
  }
  for (CLI::App* sub : {sample, run, eigen}) {
    if (sub->count("--eps-char")) ov.eps_char = eps_char;
    if (sub->count("--seed")) ov.seed = seed;
  }

  if (validate->parsed()) return cmd_validate_group(path, std::cout, std::cerr);
  if (describe->parsed()) return cmd_describe_group(path, ov, std::cout, std::cerr);
  if (sample->parsed()) return cmd_sample_surface(path, surface, ov, std::cout, std::cerr);
  if (run->parsed()) return cmd_run_checks(path, ov, std::cout, std::cerr);
  return cmd_eigen(path, ov, std::cout, std::cerr);
}
