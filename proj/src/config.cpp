#include "rlflow/config.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>

#include "rlflow/errors.hpp"

namespace rlflow {

using nlohmann::json;

namespace {

json axis(double lo, double hi, std::size_t count, const char* spacing = "uniform") {
  return {{"lo", lo}, {"hi", hi}, {"count", count}, {"spacing", spacing}};
}

json solver_defaults() {
  const SolverConfig s;
  return {{"p", s.p},
          {"picard_tol", s.picard_tol},
          {"max_iter", s.max_iter},
          {"slab_target", s.slab_target},
          {"integrator_tol", s.integrator_tol},
          {"exterior_value", s.exterior_value},
          {"max_exit_fraction", s.max_exit_fraction}};
}

json stability_defaults() {
  const StabilitySettings s;
  return {{"epsilons", s.epsilons},
          {"mollifier_nodes", s.mollifier_nodes},
          {"threshold", s.threshold},
          {"slack", s.slack},
          {"mode", s.mode}};
}

json counterexample_defaults() {
  const CounterexampleSettings s;
  return {{"k", s.k_list}, {"t", s.t_list}, {"resolution", s.resolution}, {"tol", s.tol}, {"probes", s.probes}};
}

json verify_defaults() {
  const VerifySettings s;
  return {{"cov_tol", s.cov_tol},
          {"cov_resolution", s.cov_resolution},
          {"mass_tol", s.mass_tol},
          {"oracle_tol", s.oracle_tol}};
}

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(where + " must be finite");
  return d;
}

std::size_t count(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(where + " must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where + " must be a string");
  return v.get<std::string>();
}

std::vector<double> numbers(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(number(e, where));
  return out;
}

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail("unknown key '" + it.key() + "' in " + where + " (allowed: " + list + ")");
    }
}

std::set<std::string> keys_of(const json& obj) {
  std::set<std::string> out;
  for (auto it = obj.begin(); it != obj.end(); ++it) out.insert(it.key());
  return out;
}

NamedSpec named(const json& v, const std::string& where) {
  only_keys(v, {"name", "params"}, where);
  if (!v.contains("name")) fail(where + " needs a name");
  NamedSpec s;
  s.name = text(v["name"], where + ".name");
  if (v.contains("params")) {
    only_keys(v["params"], keys_of(v["params"]), where + ".params");
    for (auto it = v["params"].begin(); it != v["params"].end(); ++it)
      s.params[it.key()] = number(it.value(), where + ".params." + it.key());
  }
  return s;
}

std::vector<Axis> axes(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where + " must be an array of axes");
  std::vector<Axis> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    only_keys(v[i], {"lo", "hi", "count", "spacing"}, w);
    for (const char* k : {"lo", "hi", "count"})
      if (!v[i].contains(k)) fail(w + " needs '" + k + "'");
    Axis a;
    a.lo = number(v[i]["lo"], w + ".lo");
    a.hi = number(v[i]["hi"], w + ".hi");
    a.count = count(v[i]["count"], w + ".count");
    const std::string sp = v[i].contains("spacing") ? text(v[i]["spacing"], w + ".spacing") : "uniform";
    if (sp == "uniform")
      a.spacing = Spacing::uniform;
    else if (sp == "log")
      a.spacing = Spacing::logarithmic;
    else
      fail(w + ".spacing must be 'uniform' or 'log'");
    out.push_back(a);
  }
  return out;
}

GridSpec grid_from(const json& v) {
  only_keys(v, {"x", "r", "T", "time_count"}, "grid");
  for (const char* k : {"T", "time_count"})
    if (!v.contains(k)) fail(std::string("grid needs '") + k + "'");
  GridSpec g;
  if (v.contains("x")) g.x_axes = axes(v["x"], "grid.x");
  if (v.contains("r")) g.r_axes = axes(v["r"], "grid.r");
  const double T = number(v["T"], "grid.T");
  const std::size_t nt = count(v["time_count"], "grid.time_count");
  try {
    g.time_nodes = uniform_times(T, nt);
    g.validate();
  } catch (const DomainError& e) {
    fail(std::string("grid: ") + e.what());
  }
  return g;
}

std::vector<Interval> intervals(const json& v, const std::string& where) {
  if (!v.is_array()) fail(where + " must be an array of [lo, hi] pairs");
  std::vector<Interval> out;
  for (const auto& e : v) {
    const auto p = numbers(e, where);
    if (p.size() != 2) fail(where + " entries must be [lo, hi]");
    out.push_back({p[0], p[1]});
  }
  return out;
}

}  // namespace

std::vector<std::string> subcommands() { return {"flow", "solve", "stability", "counterexample", "verify"}; }
std::vector<std::string> initial_catalogue() { return {"gaussian", "constant"}; }

json default_config(const std::string& sub) {
  const double pi = std::numbers::pi;
  json d;
  d["schema"] = kSchemaVersion;
  d["subcommand"] = sub;
  d["output"] = "out";
  d["solver"] = solver_defaults();
  d["stability"] = stability_defaults();
  d["counterexample"] = counterexample_defaults();
  d["verify"] = verify_defaults();
  d["window"] = {{"x", json::array()}, {"r", json::array()}};
  d["kernel"] = {{"name", "zero"}, {"params", json::object()}};
  d["initial"] = {{"name", "gaussian"}, {"params", json::object()}};
  if (sub == "flow") {
    d["field"] = {{"name", "oscillatory"}, {"params", {{"k", 4.0}, {"j", 1.0}, {"mu", -0.2}}}};
    d["grid"] = {{"x", {axis(-pi, pi, 65)}}, {"r", {axis(0.5, 2.0, 9)}}, {"T", 1.0}, {"time_count", 11}};
  } else if (sub == "solve") {
    d["field"] = {{"name", "zero"}, {"params", {{"n", 0.0}, {"j", 1.0}}}};
    d["kernel"] = {{"name", "fragmentation"}, {"params", {{"scale", 2.0}}}};
    d["initial"] = {{"name", "gaussian"}, {"params", {{"r_center", 0.5}, {"r_width", 0.1}}}};
    d["grid"] = {{"r", {axis(1e-6, 1.5, 201, "log")}}, {"T", 1.0}, {"time_count", 129}};
  } else if (sub == "stability") {
    d["field"] = {{"name", "dilation_sobolev"}, {"params", {{"c", -0.3}, {"alpha", 2.0 / 3.0}}}};
    d["kernel"] = {{"name", "fragmentation"}, {"params", {{"scale", 2.0}}}};
    d["initial"] = {{"name", "gaussian"},
                    {"params", {{"x_center", 0.0}, {"x_width", 0.5}, {"r_center", 0.5}, {"r_width", 0.1}}}};
    d["grid"] = {{"x", {axis(-1.0, 1.0, 33)}}, {"r", {axis(1e-6, 1.5, 97, "log")}}, {"T", 0.5}, {"time_count", 21}};
    d["solver"]["max_exit_fraction"] = 0.05;
  } else {
    d["field"] = {{"name", "zero"}, {"params", {{"n", 1.0}, {"j", 1.0}}}};
    d["grid"] = {{"x", {axis(-2.0, 2.0, 17)}}, {"r", {axis(0.5, 2.0, 17)}}, {"T", 1.0}, {"time_count", 11}};
  }
  return d;
}

RunConfig parse_config(const json& doc, const std::string& subcommand) {
  if (!doc.is_object()) fail("configuration must be a JSON object");
  only_keys(doc, {"schema", "subcommand", "field", "kernel", "initial", "grid", "window", "solver", "stability",
                  "counterexample", "verify", "output"},
            "configuration");
  if (!doc.contains("schema")) fail("configuration needs \"schema\": " + std::to_string(kSchemaVersion));
  if (!doc["schema"].is_number_integer() || doc["schema"].get<int>() != kSchemaVersion)
    fail("unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");

  std::string sub = subcommand;
  if (doc.contains("subcommand")) {
    const std::string s = text(doc["subcommand"], "subcommand");
    if (sub.empty()) sub = s;
    else if (s != sub) fail("configuration is for subcommand '" + s + "', not '" + sub + "'");
  }
  const auto subs = subcommands();
  if (std::find(subs.begin(), subs.end(), sub) == subs.end()) {
    std::string list;
    for (const auto& s : subs) list += (list.empty() ? "" : ", ") + s;
    fail("unknown subcommand '" + sub + "'; available: " + list);
  }

  json merged = default_config(sub);
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    if (k == "solver" || k == "stability" || k == "counterexample" || k == "verify") {
      only_keys(it.value(), keys_of(merged[k]), k);
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) merged[k][jt.key()] = jt.value();
    } else {
      merged[k] = it.value();
    }
  }
  merged["subcommand"] = sub;

  RunConfig cfg;
  cfg.subcommand = sub;
  cfg.source = merged;
  cfg.output = text(merged["output"], "output");
  cfg.field = named(merged["field"], "field");
  cfg.kernel = named(merged["kernel"], "kernel");
  cfg.initial = named(merged["initial"], "initial");
  if (sub != "counterexample") cfg.grid = grid_from(merged["grid"]);

  const auto& s = merged["solver"];
  cfg.solver.p = number(s["p"], "solver.p");
  cfg.solver.picard_tol = number(s["picard_tol"], "solver.picard_tol");
  cfg.solver.max_iter = count(s["max_iter"], "solver.max_iter");
  cfg.solver.slab_target = number(s["slab_target"], "solver.slab_target");
  cfg.solver.integrator_tol = number(s["integrator_tol"], "solver.integrator_tol");
  cfg.solver.exterior_value = number(s["exterior_value"], "solver.exterior_value");
  cfg.solver.max_exit_fraction = number(s["max_exit_fraction"], "solver.max_exit_fraction");
  cfg.solver.validate();

  only_keys(merged["window"], {"x", "r"}, "window");
  if (merged["window"].contains("x")) cfg.solver.window.x = intervals(merged["window"]["x"], "window.x");
  if (merged["window"].contains("r")) cfg.solver.window.r = intervals(merged["window"]["r"], "window.r");
  if (sub != "counterexample") {
    try {
      (void)window_weights(cfg.grid, cfg.solver.window);
    } catch (const DomainError& e) {
      fail(std::string("window: ") + e.what());
    }
  }

  const auto& st = merged["stability"];
  cfg.stability.epsilons = numbers(st["epsilons"], "stability.epsilons");
  cfg.stability.mollifier_nodes = count(st["mollifier_nodes"], "stability.mollifier_nodes");
  cfg.stability.threshold = number(st["threshold"], "stability.threshold");
  cfg.stability.slack = number(st["slack"], "stability.slack");
  cfg.stability.mode = text(st["mode"], "stability.mode");
  if (cfg.stability.epsilons.empty()) fail("stability.epsilons must not be empty");
  for (double e : cfg.stability.epsilons)
    if (!(e > 0.0)) fail("stability.epsilons must be positive");
  if (cfg.stability.mollifier_nodes < 2) fail("stability.mollifier_nodes must be at least 2");
  if (cfg.stability.mode != "solution" && cfg.stability.mode != "operator" && cfg.stability.mode != "both")
    fail("stability.mode must be 'solution', 'operator' or 'both'");

  const auto& ce = merged["counterexample"];
  cfg.counterexample.k_list = numbers(ce["k"], "counterexample.k");
  cfg.counterexample.t_list = numbers(ce["t"], "counterexample.t");
  cfg.counterexample.resolution = count(ce["resolution"], "counterexample.resolution");
  cfg.counterexample.tol = number(ce["tol"], "counterexample.tol");
  cfg.counterexample.probes = count(ce["probes"], "counterexample.probes");
  if (cfg.counterexample.k_list.empty() || cfg.counterexample.t_list.empty())
    fail("counterexample.k and counterexample.t must not be empty");
  for (std::size_t i = 0; i < cfg.counterexample.k_list.size(); ++i) {
    const double k = cfg.counterexample.k_list[i];
    if (!(k >= 1.0) || k != std::floor(k) || (i > 0 && !(k > cfg.counterexample.k_list[i - 1])))
      fail("counterexample.k must be increasing positive integers");
  }
  for (double t : cfg.counterexample.t_list)
    if (!(t >= 0.0)) fail("counterexample.t must be nonnegative");
  if (cfg.counterexample.resolution < 8) fail("counterexample.resolution must be at least 8");
  if (!(cfg.counterexample.tol > 0.0)) fail("counterexample.tol must be positive");

  const auto& v = merged["verify"];
  cfg.verify.cov_tol = number(v["cov_tol"], "verify.cov_tol");
  cfg.verify.cov_resolution = count(v["cov_resolution"], "verify.cov_resolution");
  cfg.verify.mass_tol = number(v["mass_tol"], "verify.mass_tol");
  cfg.verify.oracle_tol = number(v["oracle_tol"], "verify.oracle_tol");
  if (cfg.verify.cov_resolution < 8) fail("verify.cov_resolution must be at least 8");

  // Catalogue names and parameter ranges are checked by building the objects.
  const auto field = make_field(cfg.field.name, cfg.field.params);
  (void)make_kernel(cfg.kernel.name, cfg.kernel.params);
  if (sub != "counterexample") {
    if (field.n != cfg.grid.n() || field.j != cfg.grid.j())
      fail("field '" + field.name + "' has (n, j) = (" + std::to_string(field.n) + ", " + std::to_string(field.j) +
           ") but the grid has (" + std::to_string(cfg.grid.n()) + ", " + std::to_string(cfg.grid.j()) + ")");
    (void)make_initial(cfg.initial, field.n, field.j);
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const std::string& subcommand) {
  std::ifstream in(path);
  if (!in) fail("cannot read configuration file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail("configuration file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc, subcommand);
}

std::string RunConfig::hash() const {
  // where results go does not change what is computed
  json doc = source;
  doc.erase("output");
  const std::string s = doc.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Sampler make_initial(const NamedSpec& spec, std::size_t n, std::size_t j) {
  auto get = [&](const char* key, double fallback) {
    auto it = spec.params.find(key);
    return it == spec.params.end() ? fallback : it->second;
  };
  auto known = [&](std::set<std::string> keys) {
    for (const auto& [k, v] : spec.params)
      if (!keys.count(k)) fail("unknown parameter '" + k + "' for initial datum '" + spec.name + "'");
  };
  if (spec.name == "gaussian") {
    known({"amplitude", "x_center", "x_width", "r_center", "r_width"});
    const double a = get("amplitude", 1.0), xc = get("x_center", 0.0), xw = get("x_width", 0.5),
                 rc = get("r_center", 1.0), rw = get("r_width", 0.25);
    if (!(xw > 0.0) || !(rw > 0.0)) fail("gaussian widths must be positive");
    return [=](std::span<const double> p) {
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) e += (p[i] - xc) * (p[i] - xc) / (2.0 * xw * xw);
      for (std::size_t i = 0; i < j; ++i) e += (p[n + i] - rc) * (p[n + i] - rc) / (2.0 * rw * rw);
      return a * std::exp(-e);
    };
  }
  if (spec.name == "constant") {
    known({"value", "r_max"});
    const double c = get("value", 1.0), rmax = get("r_max", std::numeric_limits<double>::infinity());
    return [=](std::span<const double> p) {
      for (std::size_t i = 0; i < j; ++i)
        if (p[n + i] > rmax) return 0.0;
      return c;
    };
  }
  std::string list;
  for (const auto& s : initial_catalogue()) list += (list.empty() ? "" : ", ") + s;
  fail("unknown initial datum '" + spec.name + "'; available: " + list);
}

}  // namespace rlflow
