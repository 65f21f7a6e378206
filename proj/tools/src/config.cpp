#include "carnotgeo/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace carnot::cli {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw ConfigError(where + ": " + what); }

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(where, "expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) fail(where, "unknown key '" + it.key() + "'");
}

double get_num(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "expected a finite number");
  return v;
}

int get_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  return j.get<int>();
}

std::string get_str(const json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

std::vector<double> get_nums(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_num(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

Vec get_vec(const json& j, const std::string& where, int n) {
  std::vector<double> v = get_nums(j, where);
  if (static_cast<int>(v.size()) != n) fail(where, "expected " + std::to_string(n) + " components");
  return Eigen::Map<Vec>(v.data(), n);
}

std::vector<std::array<double, 2>> get_box(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a list of [lo, hi] pairs");
  std::vector<std::array<double, 2>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    std::vector<double> p = get_nums(j[i], where + "[" + std::to_string(i) + "]");
    if (p.size() != 2 || !(p[0] < p[1])) fail(where, "each entry must be [lo, hi] with lo < hi");
    out.push_back({p[0], p[1]});
  }
  return out;
}

int parse_axis(const json& j, const std::string& where, int n) {
  int idx;
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s.size() < 2 || s[0] != 'x') fail(where, "expected a coordinate name like \"x3\"");
    try {
      idx = std::stoi(s.substr(1));
    } catch (...) {
      fail(where, "expected a coordinate name like \"x3\"");
    }
  } else {
    idx = get_int(j, where);
  }
  if (idx < 1 || idx > n) fail(where, "coordinate index out of range");
  return idx - 1;
}

Mat get_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a square matrix");
  const int m = static_cast<int>(j.size());
  Mat M(m, m);
  for (int r = 0; r < m; ++r) {
    std::vector<double> row = get_nums(j[r], where);
    if (static_cast<int>(row.size()) != m) fail(where, "expected a square matrix");
    for (int c = 0; c < m; ++c) M(r, c) = row[c];
  }
  return M;
}

void validate_check(CheckSpec& c, const std::string& where, const RunConfig& cfg) {
  const json& e = c.params;
  auto need_surface = [&] {
    if (!e.contains("surface")) fail(where, "missing 'surface'");
    c.surface = get_str(e["surface"], where + ".surface");
    if (!cfg.surfaces.count(c.surface)) fail(where, "unknown surface '" + c.surface + "'");
  };
  const std::string& k = c.check;
  if (k == "norm_properties") {
    allow_keys(e, where, {"check", "samples", "tolerance"});
  } else if (k == "div_identities") {
    allow_keys(e, where, {"check", "surface", "random_points", "tolerance"});
    need_surface();
  } else if (k == "coarea") {
    allow_keys(e, where, {"check", "surface", "phi", "slices", "tolerance"});
    need_surface();
    if (!e.contains("phi")) fail(where, "missing 'phi'");
    get_str(e["phi"], where + ".phi");
  } else if (k == "monotonicity" || k == "heinz") {
    allow_keys(e, where, {"check", "surface", "center", "radii", "tolerance"});
    need_surface();
    if (!e.contains("radii")) fail(where, "missing 'radii'");
    get_nums(e["radii"], where + ".radii");
  } else if (k == "estimate_isop") {
    allow_keys(e, where, {"check", "surface", "candidates"});
    need_surface();
    if (!e.contains("candidates") || !e["candidates"].is_array()) fail(where, "missing 'candidates' list");
    for (const auto& cand : e["candidates"]) {
      allow_keys(cand, where + ".candidates", {"kind", "eps", "cut", "level"});
      if (!cand.contains("kind")) fail(where + ".candidates", "missing 'kind'");
    }
  } else if (k == "poincare" || k == "poincare_char") {
    allow_keys(e, where, {"check", "surface", "center", "radius", "eps", "powers", "bumps", "tolerance", "unc_cap"});
    need_surface();
    if (k == "poincare" && e.contains("eps")) fail(where, "'eps' applies to poincare_char only");
    if (k == "poincare_char" && e.contains("radius")) fail(where, "poincare_char chooses its own radius");
    if (k == "poincare_char" && !e.contains("eps")) fail(where, "missing 'eps' list");
  } else if (k == "caccioppoli") {
    allow_keys(e, where, {"check", "surface", "center", "radius", "phi", "phi0", "random_polynomials", "degree",
                          "tolerance"});
    need_surface();
    if (!e.contains("radius")) fail(where, "missing 'radius'");
    if (e.contains("phi") == e.contains("random_polynomials"))
      fail(where, "give exactly one of 'phi' and 'random_polynomials'");
  } else if (k == "minkowski" || k == "linear_isoperimetric" || k == "dxi_lemma" || k == "cheeger_chain" ||
             k == "chavel" || k == "reilly") {
    allow_keys(e, where, {"check", "surface", "tolerance"});
    need_surface();
  } else {
    fail(where, "unknown check '" + k + "'");
  }
  if (e.contains("tolerance")) get_num(e["tolerance"], where + ".tolerance");
}

void validate_surface(const json& j, const std::string& where) {
  allow_keys(j, where, {"kind", "expr", "vertical", "domain", "box", "closed", "center", "region", "grid", "transform"});
  if (!j.contains("kind")) fail(where, "missing 'kind'");
  std::string kind = get_str(j["kind"], where + ".kind");
  if (kind != "graph" && kind != "levelset") fail(where, "kind must be graph or levelset");
  if (!j.contains("expr")) fail(where, "missing 'expr'");
  get_str(j["expr"], where + ".expr");
  if (!j.contains("grid")) fail(where, "missing 'grid'");
  if (kind == "graph" && !j.contains("vertical")) fail(where, "graph needs 'vertical'");
  if (kind == "levelset" && (j.contains("vertical") || j.contains("domain")))
    fail(where, "levelset surfaces take 'box', not 'vertical'/'domain'");
  if (kind == "graph" && (j.contains("box") || j.contains("closed") || j.contains("center")))
    fail(where, "graph surfaces take 'domain' (or 'region'), not 'box'/'closed'/'center'");
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> k = {
      "norm_properties", "div_identities", "minkowski", "coarea",       "linear_isoperimetric",
      "monotonicity",    "heinz",          "dxi_lemma", "estimate_isop", "cheeger_chain",
      "chavel",          "reilly",         "poincare",  "poincare_char", "caccioppoli"};
  return k;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

StructureTensor parse_tensor(const json& j) {
  allow_keys(j, "group", {"signature", "constants", "n"});
  if (!j.contains("signature")) fail("group", "missing 'signature'");
  allow_keys(j["signature"], "group.signature", {"h"});
  if (!j["signature"].contains("h")) fail("group.signature", "missing 'h'");
  std::vector<int> h;
  for (const auto& v : j["signature"]["h"]) {
    int d = get_int(v, "group.signature.h");
    if (d < 1) fail("group.signature.h", "stratum dimensions must be positive");
    h.push_back(d);
  }
  if (h.empty()) fail("group.signature.h", "empty signature");
  StructureTensor t;
  t.signature = StrataSignature::from_dims(h);
  if (j.contains("n")) t.declared_n = get_int(j["n"], "group.n");
  if (j.contains("constants")) {
    if (!j["constants"].is_array()) fail("group.constants", "expected a list of [i, j, r, value]");
    for (const auto& e : j["constants"]) {
      if (!e.is_array() || e.size() != 4) fail("group.constants", "each entry is [i, j, r, value] (1-based)");
      StructureEntry s{get_int(e[0], "group.constants") - 1, get_int(e[1], "group.constants") - 1,
                       get_int(e[2], "group.constants") - 1, get_num(e[3], "group.constants")};
      t.entries.push_back(s);
    }
  }
  return t;
}

CarnotGroup build_group(const json& j) {
  if (!j.is_object()) fail("group", "expected an object");
  if (!j.contains("builtin")) return CarnotGroup(parse_tensor(j));
  std::string name = get_str(j["builtin"], "group.builtin");
  if (name == "heisenberg") {
    allow_keys(j, "group", {"builtin", "n"});
    return heisenberg(j.contains("n") ? get_int(j["n"], "group.n") : 1);
  }
  if (name == "euclidean") {
    allow_keys(j, "group", {"builtin", "n"});
    return euclidean(get_int(j.value("n", json(2)), "group.n"));
  }
  if (name == "free_step2") {
    allow_keys(j, "group", {"builtin", "generators"});
    return free_step2(get_int(j.value("generators", json(3)), "group.generators"));
  }
  if (name == "h_type") {
    allow_keys(j, "group", {"builtin", "matrices"});
    if (!j.contains("matrices") || !j["matrices"].is_array()) fail("group", "h_type needs 'matrices'");
    std::vector<Mat> J;
    for (const auto& m : j["matrices"]) J.push_back(get_matrix(m, "group.matrices"));
    return h_type_from_matrices(J);
  }
  if (name == "product_with_euclidean") {
    allow_keys(j, "group", {"builtin", "base", "m"});
    if (!j.contains("base")) fail("group", "product_with_euclidean needs 'base'");
    return product_with_euclidean(build_group(j["base"]), get_int(j.value("m", json(1)), "group.m"));
  }
  fail("group.builtin", "unknown builtin '" + name + "'");
}

HomNormSpec parse_norm(const json& j) {
  allow_keys(j, "norm", {"kind", "c", "weights"});
  std::string kind = j.contains("kind") ? get_str(j["kind"], "norm.kind") : "koranyi";
  if (kind == "koranyi") {
    if (j.contains("weights")) fail("norm", "'weights' applies to the generic norm");
    return HomNormSpec::koranyi(j.contains("c") ? get_num(j["c"], "norm.c") : 16.0);
  }
  if (kind == "generic") {
    if (j.contains("c")) fail("norm", "'c' applies to the koranyi norm");
    return HomNormSpec::generic(j.contains("weights") ? get_nums(j["weights"], "norm.weights") : std::vector<double>{});
  }
  fail("norm.kind", "expected koranyi or generic");
}

std::vector<int> parse_grid_flag(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      int v = std::stoi(tok, &pos);
      if (pos != tok.size() || v < 1) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (...) {
      throw ConfigError("--grid: expected N or N,N,... with positive integers");
    }
  }
  if (out.empty()) throw ConfigError("--grid: empty value");
  return out;
}

Surface build_surface(const CarnotGroup& g, const json& j, const std::vector<int>& grid_override) {
  const int n = g.n();
  SurfaceSpec s;
  s.kind = j["kind"] == "graph" ? SurfaceSpec::Kind::graph : SurfaceSpec::Kind::levelset;
  s.source = j["expr"].get<std::string>();
  s.expr = parse(s.source, n);
  if (s.kind == SurfaceSpec::Kind::graph) {
    s.vertical = parse_axis(j["vertical"], "surface.vertical", n);
    if (j.contains("domain")) s.box = get_box(j["domain"], "surface.domain");
  } else {
    if (!j.contains("box")) fail("surface", "levelset needs 'box'");
    s.box = get_box(j["box"], "surface.box");
    if (j.contains("closed")) {
      if (!j["closed"].is_boolean()) fail("surface.closed", "expected true or false");
      s.closed = j["closed"].get<bool>();
    }
    if (j.contains("center")) s.center = get_vec(j["center"], "surface.center", n);
  }
  if (j.contains("region")) {
    const json& r = j["region"];
    allow_keys(r, "surface.region", {"kind", "center", "r_inner", "r_outer", "radius"});
    std::string rk = r.contains("kind") ? get_str(r["kind"], "surface.region.kind") : "";
    if (r.contains("center")) {
      Vec c = get_vec(r["center"], "surface.region.center", 2);
      s.region_center = {c[0], c[1]};
    }
    if (rk == "annulus") {
      if (r.contains("radius")) fail("surface.region", "annulus takes r_inner/r_outer");
      s.region = SurfaceSpec::Region::annulus;
      s.r_inner = r.contains("r_inner") ? get_num(r["r_inner"], "surface.region.r_inner") : 0.0;
      if (!r.contains("r_outer")) fail("surface.region", "annulus needs 'r_outer'");
      s.r_outer = get_num(r["r_outer"], "surface.region.r_outer");
    } else if (rk == "ball") {
      if (r.contains("r_inner") || r.contains("r_outer")) fail("surface.region", "ball takes 'radius'");
      s.region = SurfaceSpec::Region::ball;
      if (!r.contains("radius")) fail("surface.region", "ball needs 'radius'");
      s.ball_radius = get_num(r["radius"], "surface.region.radius");
    } else {
      fail("surface.region.kind", "expected annulus or ball");
    }
  }
  if (!j["grid"].is_array() || j["grid"].empty()) fail("surface.grid", "expected a list of cell counts");
  for (const auto& v : j["grid"]) {
    int c = get_int(v, "surface.grid");
    if (c < 1) fail("surface.grid", "cell counts must be positive");
    s.grid.push_back(c);
  }
  if (!grid_override.empty()) {
    if (grid_override.size() == 1) {
      std::vector<int> scaled;
      for (int c : s.grid)
        scaled.push_back(std::max(1, static_cast<int>(std::lround(static_cast<double>(c) * grid_override[0] / s.grid[0]))));
      s.grid = scaled;
    } else {
      s.grid = grid_override;
    }
  }
  if (j.contains("transform")) {
    if (!j["transform"].is_array()) fail("surface.transform", "expected a list of steps");
    for (const auto& st : j["transform"]) {
      allow_keys(st, "surface.transform", {"dilate", "translate"});
      if (st.size() != 1) fail("surface.transform", "each step is {\"dilate\": t} or {\"translate\": [..]}");
      if (st.contains("dilate"))
        s.transform = s.transform.then(Transform::dilation(get_num(st["dilate"], "surface.transform.dilate")));
      else
        s.transform = s.transform.then(Transform::translation(get_vec(st["translate"], "surface.transform.translate", n)));
    }
  }
  return Surface(g, s);
}

RunConfig parse_config(const json& j) {
  allow_keys(j, "config", {"schema_version", "group", "norm", "surfaces", "eps_char", "seed", "refine", "tolerances",
                           "checks", "eigen", "output"});
  RunConfig c;
  if (j.contains("schema_version") && get_int(j["schema_version"], "config.schema_version") != 1)
    fail("config.schema_version", "only schema version 1 is supported");
  if (!j.contains("group")) fail("config", "missing 'group'");
  c.group_json = j["group"];
  if (!c.group_json.is_object()) fail("config.group", "expected an object");
  if (j.contains("norm")) c.norm = parse_norm(j["norm"]);
  if (j.contains("surfaces")) {
    if (!j["surfaces"].is_object()) fail("config.surfaces", "expected an object of named surfaces");
    for (auto it = j["surfaces"].begin(); it != j["surfaces"].end(); ++it) {
      validate_surface(it.value(), "surfaces." + it.key());
      c.surfaces[it.key()] = it.value();
      c.surface_order.push_back(it.key());
    }
  }
  if (j.contains("eps_char")) {
    c.eps_char = get_num(j["eps_char"], "config.eps_char");
    if (!(c.eps_char > 0.0)) fail("config.eps_char", "must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail("config.seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("refine")) {
    if (!j["refine"].is_boolean()) fail("config.refine", "expected true or false");
    c.refine = j["refine"].get<bool>();
  }
  if (j.contains("tolerances")) {
    if (!j["tolerances"].is_object()) fail("config.tolerances", "expected an object");
    const auto& names = known_checks();
    for (auto it = j["tolerances"].begin(); it != j["tolerances"].end(); ++it) {
      if (std::find(names.begin(), names.end(), it.key()) == names.end())
        fail("config.tolerances", "unknown check '" + it.key() + "'");
      c.tolerances[it.key()] = get_num(it.value(), "config.tolerances." + it.key());
    }
  }
  if (j.contains("checks")) {
    if (!j["checks"].is_array()) fail("config.checks", "expected a list");
    for (std::size_t i = 0; i < j["checks"].size(); ++i) {
      const json& e = j["checks"][i];
      std::string where = "checks[" + std::to_string(i) + "]";
      if (!e.is_object() || !e.contains("check")) fail(where, "missing 'check'");
      CheckSpec cs{get_str(e["check"], where + ".check"), "", e};
      validate_check(cs, where, c);
      c.checks.push_back(cs);
    }
  }
  if (j.contains("eigen")) {
    const json& e = j["eigen"];
    allow_keys(e, "config.eigen", {"surface", "problem", "count"});
    EigenSpec es;
    if (!e.contains("surface")) fail("config.eigen", "missing 'surface'");
    es.surface = get_str(e["surface"], "config.eigen.surface");
    if (!c.surfaces.count(es.surface)) fail("config.eigen", "unknown surface '" + es.surface + "'");
    if (e.contains("problem")) {
      try {
        es.problem = parse_boundary_condition(get_str(e["problem"], "config.eigen.problem"));
      } catch (const Error&) {
        fail("config.eigen.problem", "expected closed, dirichlet or neumann");
      }
    }
    if (e.contains("count")) {
      es.count = get_int(e["count"], "config.eigen.count");
      if (es.count < 1) fail("config.eigen.count", "must be positive");
    }
    c.eigen = es;
  }
  if (j.contains("output")) {
    allow_keys(j["output"], "config.output", {"report", "plots"});
    if (j["output"].contains("report")) c.report_path = get_str(j["output"]["report"], "config.output.report");
    if (j["output"].contains("plots")) c.plots_path = get_str(j["output"]["plots"], "config.output.plots");
  }
  return c;
}

}  // namespace carnot::cli
