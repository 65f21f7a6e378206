#include "carnotgeo/cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace carnot::cli {

using ojson = nlohmann::ordered_json;

namespace {

bool is_foundation(const std::string& check) { return check == "div_identities" || check == "minkowski"; }

bool needs_foundation(const std::string& check) {
  return !is_foundation(check) && check != "coarea" && check != "norm_properties";
}

ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec center_of(const json& e, int n) {
  Vec c = Vec::Zero(n);
  if (!e.contains("center")) return c;
  const json& v = e["center"];
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw ConfigError("center: expected " + std::to_string(n) + " components");
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_number()) throw ConfigError("center: expected numbers");
    c[i] = v[i].get<double>();
  }
  return c;
}

std::vector<int> int_list(const json& e, const char* key, std::vector<int> dflt) {
  if (!e.contains(key)) return dflt;
  std::vector<int> out;
  for (const auto& v : e[key]) {
    if (!v.is_number_integer()) throw ConfigError(std::string(key) + ": expected integers");
    out.push_back(v.get<int>());
  }
  return out;
}

std::vector<double> num_list(const json& e, const char* key) {
  std::vector<double> out;
  for (const auto& v : e[key]) {
    if (!v.is_number()) throw ConfigError(std::string(key) + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

template <class T>
T value_or(const json& e, const char* key, T dflt) {
  if (!e.contains(key)) return dflt;
  try {
    return e[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(key) + ": wrong type");
  }
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(prec) << v;
  return os.str();
}

std::string plot_columns(const std::vector<std::array<double, 2>>& pts) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& p : pts) os << p[0] << ' ' << p[1] << '\n';
  return os.str();
}

std::vector<std::array<double, 2>> trace_columns(const std::vector<TracePoint>& t) {
  // x = cells along the first parameter axis
  std::vector<std::array<double, 2>> pts;
  for (const auto& tp : t) pts.push_back({std::stod(tp.grid.substr(0, tp.grid.find('x'))), tp.value});
  return pts;
}

struct Job {
  CheckSpec spec;
  bool auto_prereq = false;
  int variant = -1;
};

CheckOptions options_for(const RunConfig& cfg, const Overrides& ov, const std::string& check, const json& entry) {
  CheckOptions o;
  o.eps_char = ov.eps_char ? *ov.eps_char : cfg.eps_char;
  o.seed = ov.seed ? *ov.seed : cfg.seed;
  o.refine = cfg.refine || ov.refine;
  o.norm = cfg.norm;
  auto t = cfg.tolerances.find(check);
  if (t != cfg.tolerances.end()) o.tolerance = t->second;
  if (entry.contains("tolerance")) o.tolerance = entry["tolerance"].get<double>();
  if (entry.contains("unc_cap")) o.unc_cap = entry["unc_cap"].get<double>();
  return o;
}

CheckReport execute(const Job& job, const CarnotGroup& g, const Surface* s, const CheckOptions& o) {
  const json& e = job.spec.params;
  const std::string& k = job.spec.check;
  const int n = g.n();
  if (k == "norm_properties") return check_norm_properties(g, o.norm, value_or<int>(e, "samples", 10000), o);
  if (k == "div_identities") return check_div_identities(*s, o, value_or<int>(e, "random_points", 1000));
  if (k == "minkowski") return check_minkowski(*s, o);
  if (k == "coarea")
    return check_coarea(*s, parse(e["phi"].get<std::string>(), n), value_or<int>(e, "slices", 200), o);
  if (k == "linear_isoperimetric") return check_linear_isoperimetric(*s, o);
  if (k == "monotonicity") return check_monotonicity(*s, center_of(e, n), num_list(e, "radii"), o);
  if (k == "heinz") return check_heinz(*s, center_of(e, n), num_list(e, "radii"), o);
  if (k == "dxi_lemma") return check_dxi_lemma(*s, o);
  if (k == "cheeger_chain") return check_cheeger_chain(*s, o);
  if (k == "chavel") return check_chavel(*s, o);
  if (k == "reilly") return check_reilly(*s, o);
  if (k == "estimate_isop") {
    std::vector<PlateauCandidate> cands;
    for (const auto& c : e["candidates"]) {
      PlateauCandidate pc;
      std::string kind = value_or<std::string>(c, "kind", "");
      if (kind == "distance_plateau")
        pc.kind = PlateauCandidate::Kind::distance_plateau;
      else if (kind == "boundary_plateau")
        pc.kind = PlateauCandidate::Kind::boundary_plateau;
      else if (kind == "eigenfunction_sweep")
        pc.kind = PlateauCandidate::Kind::eigenfunction_sweep;
      else
        throw ConfigError("candidates.kind: unknown '" + kind + "'");
      if (pc.kind != PlateauCandidate::Kind::eigenfunction_sweep) {
        if (!c.contains("cut")) throw ConfigError("candidates: plateau candidates need 'cut'");
        pc.cut = parse(c["cut"].get<std::string>(), n);
        pc.level = value_or<double>(c, "level", 0.0);
        pc.eps = value_or<double>(c, "eps", 0.1);
      }
      cands.push_back(pc);
    }
    return estimate_isop(*s, cands, o);
  }
  if (k == "poincare" || k == "poincare_char") {
    std::vector<int> powers = int_list(e, "powers", {1, 2});
    int bumps = value_or<int>(e, "bumps", 10);
    if (k == "poincare") {
      std::optional<double> radius;
      if (e.contains("radius")) radius = value_or<double>(e, "radius", 0.0);
      return check_poincare(*s, center_of(e, n), radius, powers, bumps, o);
    }
    return check_poincare_char(*s, center_of(e, n), num_list(e, "eps"), powers, bumps, o);
  }
  if (k == "caccioppoli") {
    double radius = value_or<double>(e, "radius", 0.0);
    std::optional<double> phi0;
    if (e.contains("phi0")) phi0 = value_or<double>(e, "phi0", 0.0);
    Expr phi = job.variant >= 0
                   ? random_polynomial(n, value_or<int>(e, "degree", 3), o.seed + static_cast<std::uint64_t>(job.variant))
                   : parse(e["phi"].get<std::string>(), n);
    CheckReport r = check_caccioppoli(*s, center_of(e, n), radius, phi, phi0, o);
    if (job.variant >= 0) r.notes.push_back("phi = " + to_string(phi));
    return r;
  }
  throw ConfigError("unknown check '" + k + "'");
}

ojson decisions_json(const CheckOptions& o) {
  ojson d;
  d["matrix_norm"] = "spectral";
  d["eps_char"] = o.eps_char;
  d["homogeneous_norm"] = o.norm.name();
  d["seed"] = o.seed;
  d["refine"] = o.refine;
  return d;
}

}  // namespace

ojson report_json(const CheckReport& r, const std::string& check, const std::string& surface, const CheckOptions& o) {
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["check"] = check;
  j["surface"] = surface.empty() ? ojson(nullptr) : ojson(surface);
  j["name"] = r.name;
  j["digest"] = r.digest;
  j["kind"] = to_string(r.kind);
  j["value"] = r.value;
  j["tolerance"] = r.tolerance;
  j["pass"] = r.pass;
  ojson q = ojson::object();
  for (const auto& kv : r.quantities) q[kv.first] = kv.second;
  j["quantities"] = q;
  ojson t = ojson::array();
  for (const auto& tp : r.trace) t.push_back({{"grid", tp.grid}, {"value", tp.value}});
  j["trace"] = t;
  j["notes"] = r.notes;
  j["decisions"] = decisions_json(o);
  return j;
}

RunOutcome run_checks(const RunConfig& cfg, const Overrides& ov) {
  RunOutcome out;
  CarnotGroup g = build_group(cfg.group_json);

  // foundation checks move ahead of the first check that depends on them
  std::vector<Job> jobs;
  std::set<std::pair<std::string, std::string>> scheduled;
  auto user_foundation = [&](const std::string& check, const std::string& surf) -> const CheckSpec* {
    for (const auto& c : cfg.checks)
      if (c.check == check && c.surface == surf) return &c;
    return nullptr;
  };
  auto schedule_foundation = [&](const std::string& surf) {
    bool closed = cfg.surfaces.at(surf).value("closed", false);
    for (const char* f : {"div_identities", "minkowski"}) {
      if (std::string(f) == "minkowski" && !closed) continue;
      if (scheduled.count({f, surf})) continue;
      scheduled.insert({f, surf});
      if (const CheckSpec* u = user_foundation(f, surf)) {
        jobs.push_back({*u, false, -1});
      } else {
        json params = {{"check", f}, {"surface", surf}};
        jobs.push_back({{f, surf, params}, true, -1});
      }
    }
  };
  for (const auto& c : cfg.checks) {
    if (needs_foundation(c.check)) schedule_foundation(c.surface);
    if (is_foundation(c.check)) {
      if (scheduled.count({c.check, c.surface})) continue;
      scheduled.insert({c.check, c.surface});
    }
    if (c.check == "caccioppoli" && c.params.contains("random_polynomials")) {
      int count = c.params["random_polynomials"].get<int>();
      for (int k = 0; k < count; ++k) jobs.push_back({c, false, k});
    } else {
      jobs.push_back({c, false, -1});
    }
  }

  std::map<std::string, Surface> surfaces;
  auto surface = [&](const std::string& name) -> const Surface& {
    auto it = surfaces.find(name);
    if (it == surfaces.end()) it = surfaces.emplace(name, build_surface(g, cfg.surfaces.at(name), ov.grid)).first;
    return it->second;
  };

  std::map<std::string, std::string> foundation_failed;  // surface -> failing check
  bool any_error = false, any_fail = false;
  std::ostringstream table;
  table << std::left << std::setw(4) << "#" << std::setw(22) << "check" << std::setw(16) << "surface" << std::setw(11)
        << "kind" << std::right << std::setw(13) << "value" << std::setw(13) << "tolerance" << "  status\n";
  for (std::size_t idx = 0; idx < jobs.size(); ++idx) {
    const Job& job = jobs[idx];
    const std::string& check = job.spec.check;
    const std::string& surf = job.spec.surface;
    CheckOptions o = options_for(cfg, ov, check, job.spec.params);
    std::string label = check + (job.variant >= 0 ? "[" + std::to_string(job.variant) + "]" : "");
    ojson rj;
    std::string status;
    try {
      const Surface* s = surf.empty() ? nullptr : &surface(surf);
      CheckReport r = execute(job, g, s, o);
      if (job.auto_prereq) r.notes.push_back("prerequisite run automatically");
      if (needs_foundation(check) && foundation_failed.count(surf)) {
        r.pass = false;
        r.notes.push_back("foundation failure: " + foundation_failed[surf] + " did not pass on this surface");
      }
      if (is_foundation(check) && !r.pass) foundation_failed.emplace(surf, check);
      rj = report_json(r, label, surf, o);
      any_fail = any_fail || !r.pass;
      status = r.pass ? "pass" : "FAIL";
      table << std::left << std::setw(4) << idx << std::setw(22) << label << std::setw(16) << surf << std::setw(11)
            << to_string(r.kind) << std::right << std::setw(13) << fmt(r.value) << std::setw(13) << fmt(r.tolerance)
            << "  " << status << "\n";
      if (ov.emit_plots) {
        std::string stem = (idx < 10 ? "0" : "") + std::to_string(idx) + "_" + label + (surf.empty() ? "" : "_" + surf);
        if (!r.trace.empty()) out.plots.push_back({stem + "_trace.txt", plot_columns(trace_columns(r.trace))});
        for (const auto& ser : r.series) out.plots.push_back({stem + "_" + ser.name + ".txt", plot_columns(ser.points)});
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SyntaxError || e.code() == ErrorCode::UnknownIdentifier ||
          e.code() == ErrorCode::ArityError)
        throw ConfigError(std::string("expression in ") + label + ": " + e.what());
      any_error = true;
      if (is_foundation(check)) foundation_failed.emplace(surf, check);
      rj["schema_version"] = kReportSchemaVersion;
      rj["check"] = label;
      rj["surface"] = surf.empty() ? ojson(nullptr) : ojson(surf);
      rj["pass"] = false;
      rj["error"] = {{"code", error_code_name(e.code())}, {"message", e.what()}};
      rj["decisions"] = decisions_json(o);
      table << std::left << std::setw(4) << idx << std::setw(22) << label << std::setw(16) << surf << std::setw(11)
            << "-" << std::right << std::setw(13) << "-" << std::setw(13) << "-"
            << "  ERROR " << error_code_name(e.code()) << "\n";
    }
    out.reports.push_back(rj);
  }
  out.summary = table.str();
  out.exit_code = any_error ? kInfrastructure : (any_fail ? kFail : kPass);
  return out;
}

ojson run_eigen(const RunConfig& cfg, const Overrides& ov) {
  if (!cfg.eigen) throw ConfigError("config has no 'eigen' section");
  CarnotGroup g = build_group(cfg.group_json);
  const EigenSpec& es = *cfg.eigen;
  const double eps = ov.eps_char ? *ov.eps_char : cfg.eps_char;
  Surface s = build_surface(g, cfg.surfaces.at(es.surface), ov.grid);
  auto solve = [&](const Surface& ss) {
    DiscreteOperator op = assemble(ss, es.problem, eps);
    return std::make_pair(eigensolve(op, es.count), op.size());
  };
  auto [res, dofs] = solve(s);
  ojson j;
  j["problem"] = to_string(es.problem);
  j["eigenvalues"] = res.eigenvalues;
  j["residuals"] = res.residuals;
  j["surface"] = es.surface;
  j["grid"] = s.spec().grid;
  j["dofs"] = dofs;
  j["iterations"] = res.iterations;
  if (ov.refine || cfg.refine) {
    Surface coarse = s.with_grid(half_grid(s.spec().grid));
    auto [cres, cdofs] = solve(coarse);
    ojson r;
    r["coarse_grid"] = coarse.spec().grid;
    r["coarse_eigenvalues"] = cres.eigenvalues;
    std::vector<double> deltas;
    for (std::size_t i = 0; i < res.eigenvalues.size() && i < cres.eigenvalues.size(); ++i) {
      double f = res.eigenvalues[i], c = cres.eigenvalues[i];
      deltas.push_back(f == 0.0 && c == 0.0 ? 0.0 : std::abs(f - c) / std::max(std::abs(f), std::abs(c)));
    }
    r["relative_deltas"] = deltas;
    j["refinement"] = r;
  }
  j["decisions"] = {{"matrix_norm", "spectral"}, {"eps_char", eps}, {"schema_version", kReportSchemaVersion}};
  return j;
}

ojson describe_group(const CarnotGroup& g) {
  ojson j;
  j["n"] = g.n();
  j["h"] = g.signature().h;
  j["step"] = g.step();
  j["Q"] = g.Q();
  std::vector<int> ord;
  for (int l = 0; l < g.n(); ++l) ord.push_back(g.ord(l));
  j["ord"] = ord;
  j["cnorm"] = g.cnorm();
  j["matrix_norm"] = "spectral";
  ojson consts = ojson::array();
  for (int r = 0; r < g.n(); ++r)
    for (int i = 0; i < g.n(); ++i)
      for (int k = i + 1; k < g.n(); ++k)
        if (g.C(r, i, k) != 0.0) consts.push_back({i + 1, k + 1, r + 1, g.C(r, i, k)});
  j["constants"] = consts;
  if (g.step() >= 2) {
    ojson hm = ojson::object();
    for (int a = g.h(); a < g.n(); ++a) {
      if (g.ord(a) != 2) continue;
      Mat M = g.hmat(a);
      ojson rows = ojson::array();
      for (int r = 0; r < M.rows(); ++r) {
        std::vector<double> row(M.cols());
        for (int c = 0; c < M.cols(); ++c) row[c] = M(r, c);
        rows.push_back(row);
      }
      hm["x" + std::to_string(a + 1)] = rows;
    }
    j["C_H_matrices"] = hm;
  }
  ojson conn = ojson::array();
  for (const auto& c : g.connection()) conn.push_back({c.i + 1, c.j + 1, c.r + 1, c.value});
  j["connection"] = conn;
  j["summary"] = g.describe();
  return j;
}

ojson sample_surface_json(const RunConfig& cfg, const std::string& name, const Overrides& ov) {
  CarnotGroup g = build_group(cfg.group_json);
  std::string surf = name;
  if (surf.empty()) {
    if (cfg.surface_order.empty()) throw ConfigError("config defines no surfaces");
    surf = cfg.surface_order.front();
  }
  if (!cfg.surfaces.count(surf)) throw ConfigError("unknown surface '" + surf + "'");
  const double eps = ov.eps_char ? *ov.eps_char : cfg.eps_char;
  Surface s = build_surface(g, cfg.surfaces.at(surf), ov.grid);
  SurfaceSampling samp = sample_surface(s, eps);
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["surface"] = surf;
  j["digest"] = surface_digest(s, eps);
  j["grid"] = s.spec().grid;
  j["sigma_H"] = h_perimeter(samp.nodes);
  j["sigma_R"] = integrate_R(samp.nodes, [](const GeoSample&) { return 1.0; });
  j["characteristic_nodes"] = samp.n_characteristic;
  j["characteristic_mass_R"] = samp.characteristic_mass_R;
  j["boundary_sigma_H"] = boundary_measure_H(samp.boundary);
  ojson nodes = ojson::array();
  for (const auto& x : samp.nodes) {
    ojson nj;
    nj["q"] = vec_json(x.q);
    nj["x"] = vec_json(x.x);
    nj["weight"] = x.weight;
    nj["characteristic"] = x.characteristic;
    nj["p_h_nu_norm"] = x.p_h_nu_norm;
    nj["J_R"] = x.J_R;
    nj["J_H"] = x.J_H;
    if (!x.characteristic) {
      nj["nu_H"] = vec_json(x.nu_h);
      nj["varpi"] = vec_json(x.varpi);
      nj["H_H"] = x.H;
      nj["g_H"] = x.g_h;
      nj["C_H_nu_H"] = vec_json(x.c_h_nu_h);
    }
    nodes.push_back(nj);
  }
  j["nodes"] = nodes;
  j["decisions"] = {{"matrix_norm", "spectral"}, {"eps_char", eps}};
  return j;
}

// ---------------------------------------------------------------- entry points

namespace {

json load_group_section(const std::string& path) {
  json j = read_json_file(path);
  if (j.is_object() && j.contains("group")) return j["group"];
  return j;
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kParseError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::SyntaxError:
      case ErrorCode::UnknownIdentifier:
      case ErrorCode::ArityError:
        return kParseError;
      case ErrorCode::InvalidAlgebra:
      case ErrorCode::InvalidStratification:
        return kFail;
      default:
        return kInfrastructure;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInfrastructure;
  }
}

}  // namespace

int cmd_validate_group(const std::string& path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    json gj = load_group_section(path);
    if (!gj.is_object()) throw ConfigError("group: expected an object");
    ojson j;
    if (gj.contains("builtin")) {
      CarnotGroup g = build_group(gj);
      j["valid"] = true;
      j["summary"] = g.describe();
      j["failures"] = ojson::array();
    } else {
      ValidationReport rep = validate_algebra(parse_tensor(gj));
      j["valid"] = rep.valid;
      j["summary"] = rep.summary();
      ojson f = ojson::array();
      for (const auto& x : rep.failures) f.push_back({{"invariant", x.invariant}, {"indices", x.indices}, {"value", x.value}});
      j["failures"] = f;
      if (!rep.valid) {
        out << j.dump(2) << "\n";
        return static_cast<int>(kFail);
      }
    }
    out << j.dump(2) << "\n";
    return static_cast<int>(kPass);
  });
}

int cmd_describe_group(const std::string& path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    CarnotGroup g = build_group(load_group_section(path));
    write_output(ov.out, describe_group(g).dump(2) + "\n", out);
    return static_cast<int>(kPass);
  });
}

int cmd_sample_surface(const std::string& path, const std::string& surface, const Overrides& ov, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = parse_config(read_json_file(path));
    write_output(ov.out, sample_surface_json(cfg, surface, ov).dump(2) + "\n", out);
    return static_cast<int>(kPass);
  });
}

int cmd_run_checks(const std::string& path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = parse_config(read_json_file(path));
    RunOutcome res = run_checks(cfg, ov);
    std::string report_path = !ov.out.empty() ? ov.out : cfg.report_path;
    std::string text = res.reports.dump(2) + "\n";
    if (report_path.empty() || report_path == "-") {
      out << text;
      err << res.summary;
    } else {
      write_output(report_path, text, out);
      out << res.summary;
    }
    if (ov.emit_plots) {
      std::filesystem::path dir = !cfg.plots_path.empty()
                                      ? std::filesystem::path(cfg.plots_path)
                                      : (report_path.empty() || report_path == "-"
                                             ? std::filesystem::path("plots")
                                             : std::filesystem::path(report_path + ".plots"));
      std::filesystem::create_directories(dir);
      for (const auto& p : res.plots) {
        std::ofstream f(dir / p.name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write plot file '" + (dir / p.name).string() + "'");
        f << p.content;
      }
    }
    return res.exit_code;
  });
}

int cmd_eigen(const std::string& path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = parse_config(read_json_file(path));
    write_output(ov.out, run_eigen(cfg, ov).dump(2) + "\n", out);
    return static_cast<int>(kPass);
  });
}

}  // namespace carnot::cli
