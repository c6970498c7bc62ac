#include "hclab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hclab/version.hpp"

namespace hclab {

double ExperimentConfig::resolved_h() const {
  if (grid_h > 0.0) return grid_h;
  return std::pow(model.epsilon, model.gamma) / 8.0;
}

std::vector<double> ExperimentConfig::lifting_shifts() const {
  if (!lifting.shifts.empty()) return lifting.shifts;
  const double s0 = derived_constants(model).s0;
  return {0.0, s0 / 8.0, s0 / 4.0, s0 / 2.0, s0};
}

std::vector<double> ExperimentConfig::wegner_deltas() const {
  if (!wegner.deltas.empty()) return wegner.deltas;
  const double e_ref = wegner.energies.empty() ? 1.0 : wegner.energies.front();
  std::vector<double> out;
  for (int p = 8; p >= 3; --p) out.push_back(e_ref * std::pow(2.0, -p));
  return out;
}

const std::map<std::string, std::string>& default_config_entries() {
  static const std::map<std::string, std::string> defaults = {
      {"model.d", "2"},
      {"model.epsilon", "0.25"},
      {"model.gamma", "2"},
      {"model.omega_minus", "0.1"},
      {"model.omega_plus", "0.18"},
      {"model.density.kind", "uniform"},
      {"model.density.kappa", "1"},
      {"run.master_seed", "1"},
      {"run.realizations", "20"},
      {"run.workers", "0"},
      {"run.output_dir", "out"},
      {"run.oracle_dense", "false"},
      {"grid.h", "policy"},
      {"grid.allow_underresolved", "false"},
      {"grid.sharp_harmonic", "false"},
      {"experiment.boxes", "1"},
      {"experiment.coefficient", "layered"},
      {"engine.max_pairs", "200"},
      {"engine.tol_eig", "1e-12"},
      {"engine.max_terms", "200000"},
      {"gap.e_max", "20"},
      {"gap.min_gap_width", "0.5"},
      {"squeeze.k_count", "10"},
      {"lifting.k_count", "5"},
      {"lifting.shifts", ""},
      {"wegner.energies", "12"},
      {"wegner.deltas", ""},
      {"ise.e0", ""},
      {"ise.c3", "0.5 1 1.5"},
      {"ise.c4", "2"},
      {"ise.tau", "1"},
      {"ct.gap_fractions", "0.5 1"},
      {"suit.theta", "5"},
      {"suit.e0", ""},
      {"suit.e_grid", "5"},
      {"projector.window_lo", ""},
      {"projector.window_hi", ""},
      {"dyn.times", "0 0.5 1 2"},
      {"dyn.moment_order", "2"},
      {"dyn.window_lo", ""},
      {"dyn.window_hi", ""},
  };
  return defaults;
}

namespace {

struct Entry {
  std::string value;
  int line = 0;  // 0 = default, not present in file
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& name, int line, const std::string& what) {
  std::ostringstream err;
  err << name;
  if (line > 0) err << ":" << line;
  err << ": " << what;
  throw ConfigError(err.str());
}

class Reader {
 public:
  Reader(std::map<std::string, Entry> entries, std::string name)
      : entries_(std::move(entries)), name_(std::move(name)) {}

  const Entry& at(const std::string& key) const { return entries_.at(key); }
  bool empty(const std::string& key) const { return at(key).value.empty(); }

  double number(const std::string& key) const {
    const Entry& e = at(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      fail(name_, e.line, "key '" + key + "': expected a number, got '" + e.value + "'");
    }
  }

  int integer(const std::string& key) const {
    const double v = number(key);
    if (std::abs(v - std::round(v)) > 1e-9)
      fail(name_, at(key).line, "key '" + key + "': expected an integer, got '" + at(key).value + "'");
    return static_cast<int>(std::llround(v));
  }

  std::uint64_t uint64(const std::string& key) const {
    const Entry& e = at(key);
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      fail(name_, e.line, "key '" + key + "': expected an unsigned integer, got '" + e.value + "'");
    }
  }

  bool boolean(const std::string& key) const {
    const Entry& e = at(key);
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    fail(name_, e.line, "key '" + key + "': expected true/false, got '" + e.value + "'");
  }

  std::vector<double> list(const std::string& key) const {
    const Entry& e = at(key);
    std::vector<double> out;
    std::istringstream in(e.value);
    std::string tok;
    while (in >> tok) {
      try {
        std::size_t pos = 0;
        out.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument("");
      } catch (...) {
        fail(name_, e.line, "key '" + key + "': bad list element '" + tok + "'");
      }
    }
    return out;
  }

  [[noreturn]] void reject(const std::string& key, const std::string& what) const {
    fail(name_, at(key).line, "key '" + key + "': " + what);
  }

  const std::string& name() const { return name_; }

 private:
  std::map<std::string, Entry> entries_;
  std::string name_;
};

ExperimentConfig build_config(const Reader& r) {
  ExperimentConfig cfg;
  cfg.model.d = r.integer("model.d");
  cfg.model.epsilon = r.number("model.epsilon");
  cfg.model.gamma = r.number("model.gamma");
  cfg.model.omega_minus = r.number("model.omega_minus");
  cfg.model.omega_plus = r.number("model.omega_plus");
  {
    const std::string kind = r.at("model.density.kind").value;
    if (kind == "uniform")
      cfg.model.density.kind = DensityKind::Uniform;
    else if (kind == "polynomial_thin")
      cfg.model.density.kind = DensityKind::PolynomialThin;
    else
      r.reject("model.density.kind", "expected uniform or polynomial_thin, got '" + kind + "'");
    cfg.model.density.kappa = r.number("model.density.kappa");
  }
  try {
    cfg.model.validate();
  } catch (const ConfigError& e) {
    // blame the most specific model key present in the file
    fail(r.name(), r.at("model.omega_plus").line, e.what());
  }

  cfg.master_seed = r.uint64("run.master_seed");
  cfg.realizations = r.integer("run.realizations");
  if (cfg.realizations < 1) r.reject("run.realizations", "must be >= 1");
  cfg.workers = r.integer("run.workers");
  cfg.output_dir = r.at("run.output_dir").value;
  cfg.oracle_dense = r.boolean("run.oracle_dense");

  if (r.at("grid.h").value == "policy")
    cfg.grid_h = 0.0;
  else {
    cfg.grid_h = r.number("grid.h");
    if (!(cfg.grid_h > 0)) r.reject("grid.h", "must be positive or 'policy'");
  }
  cfg.allow_underresolved = r.boolean("grid.allow_underresolved");
  cfg.sharp_harmonic = r.boolean("grid.sharp_harmonic");

  cfg.boxes = r.list("experiment.boxes");
  if (cfg.boxes.empty()) r.reject("experiment.boxes", "needs at least one box side");
  for (double L : cfg.boxes) {
    const double t = L / cfg.model.epsilon;
    if (std::abs(t - std::round(t)) > 1e-9)
      r.reject("experiment.boxes", "L/epsilon must be an integer (L = " + std::to_string(L) + ")");
  }
  {
    const std::string c = r.at("experiment.coefficient").value;
    if (c == "layered")
      cfg.coefficient = CoefficientKind::Layered;
    else if (c == "sharp")
      cfg.coefficient = CoefficientKind::Sharp;
    else if (c == "unit")
      cfg.coefficient = CoefficientKind::Unit;
    else
      r.reject("experiment.coefficient", "expected layered/sharp/unit, got '" + c + "'");
  }

  cfg.max_pairs = r.integer("engine.max_pairs");
  cfg.tol_eig = r.number("engine.tol_eig");
  cfg.max_terms = r.integer("engine.max_terms");

  cfg.gap.e_max = r.number("gap.e_max");
  cfg.gap.min_gap_width = r.number("gap.min_gap_width");
  cfg.squeeze.k_count = r.integer("squeeze.k_count");
  cfg.lifting.k_count = r.integer("lifting.k_count");
  cfg.lifting.shifts = r.list("lifting.shifts");
  cfg.wegner.energies = r.list("wegner.energies");
  cfg.wegner.deltas = r.list("wegner.deltas");
  for (double dlt : cfg.wegner.deltas)
    if (!(dlt > 0)) r.reject("wegner.deltas", "window half-widths must be positive");

  cfg.ise.e0_set = !r.empty("ise.e0");
  if (cfg.ise.e0_set) cfg.ise.e0 = r.number("ise.e0");
  cfg.ise.c3 = r.list("ise.c3");
  cfg.ise.c4 = r.number("ise.c4");
  cfg.ise.tau = r.number("ise.tau");
  if (!(cfg.ise.tau > 0)) r.reject("ise.tau", "must be positive");

  cfg.ct.gap_fractions = r.list("ct.gap_fractions");
  cfg.suit.theta = r.number("suit.theta");
  if (!(cfg.suit.theta > 2.0 * cfg.model.d))
    r.reject("suit.theta", "must exceed 2d = " + std::to_string(2 * cfg.model.d));
  cfg.suit.e0_set = !r.empty("suit.e0");
  if (cfg.suit.e0_set) cfg.suit.e0 = r.number("suit.e0");
  cfg.suit.e_grid = r.integer("suit.e_grid");

  cfg.projector.window_set = !r.empty("projector.window_lo") && !r.empty("projector.window_hi");
  if (cfg.projector.window_set) {
    cfg.projector.window_lo = r.number("projector.window_lo");
    cfg.projector.window_hi = r.number("projector.window_hi");
  }
  cfg.dyn.times = r.list("dyn.times");
  cfg.dyn.moment_order = r.integer("dyn.moment_order");
  cfg.dyn.window_set = !r.empty("dyn.window_lo") && !r.empty("dyn.window_hi");
  if (cfg.dyn.window_set) {
    cfg.dyn.window_lo = r.number("dyn.window_lo");
    cfg.dyn.window_hi = r.number("dyn.window_hi");
  }

  for (double s : cfg.lifting.shifts) {
    const double s0 = derived_constants(cfg.model).s0;
    if (s < 0.0 || s > s0 + 1e-12)
      r.reject("lifting.shifts", "shifts must lie in [0, s0] with s0 = " + std::to_string(s0));
  }
  return cfg;
}

RunManifest parse_entries(std::map<std::string, Entry> raw, std::vector<std::string> warnings,
                          const std::string& name) {
  // resolve defaults; unknown keys were rejected while reading
  std::map<std::string, Entry> resolved;
  for (const auto& [key, def] : default_config_entries()) {
    auto it = raw.find(key);
    resolved[key] = it != raw.end() ? it->second : Entry{def, 0};
  }
  Reader reader(resolved, name);
  RunManifest m;
  m.config = build_config(reader);
  m.config_path = name;
  m.tool_version = kToolVersion;
  m.warnings = std::move(warnings);
  for (const auto& [key, entry] : resolved) m.entries[key] = entry.value;
  return m;
}

}  // namespace

RunManifest parse_config_text(const std::string& text, const std::string& name) {
  std::map<std::string, Entry> raw;
  std::vector<std::string> warnings;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(name, lineno, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (!default_config_entries().count(key)) fail(name, lineno, "unknown key '" + key + "'");
    if (raw.count(key)) {
      std::ostringstream w;
      w << name << ":" << lineno << ": duplicate key '" << key << "' (last value wins)";
      warnings.push_back(w.str());
    }
    raw[key] = Entry{value, lineno};
  }
  return parse_entries(std::move(raw), std::move(warnings), name);
}

RunManifest parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string emit_manifest(const RunManifest& m) {
  std::ostringstream out;
  for (const auto& [key, value] : m.entries) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace hclab
