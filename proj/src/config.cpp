#include "hydrogel/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "hydrogel/errors.hpp"

namespace hydrogel {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const std::string s = trim(v);
  int out = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string s = trim(v);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(to_double(key, item));
  }
  return out;
}

std::string list_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

struct Key {
  std::string name;
  std::function<void(SimulationConfig&, const std::string&)> set;
  std::function<std::optional<std::string>(const SimulationConfig&)> get;
};

template <class Field>
Key number(const std::string& name, Field field) {
  return {name, [name, field](SimulationConfig& c, const std::string& v) { field(c) = to_double(name, v); },
          [field](const SimulationConfig& c) -> std::optional<std::string> {
            return fmt(field(const_cast<SimulationConfig&>(c)));
          }};
}

template <class Field>
Key integer(const std::string& name, Field field) {
  return {name, [name, field](SimulationConfig& c, const std::string& v) { field(c) = to_int(name, v); },
          [field](const SimulationConfig& c) -> std::optional<std::string> {
            return std::to_string(field(const_cast<SimulationConfig&>(c)));
          }};
}

template <class Field>
Key boolean(const std::string& name, Field field) {
  return {name, [name, field](SimulationConfig& c, const std::string& v) { field(c) = to_bool(name, v); },
          [field](const SimulationConfig& c) -> std::optional<std::string> {
            return field(const_cast<SimulationConfig&>(c)) ? "true" : "false";
          }};
}

template <class Field>
Key optional_number(const std::string& name, Field field) {
  return {name, [name, field](SimulationConfig& c, const std::string& v) { field(c) = to_double(name, v); },
          [field](const SimulationConfig& c) -> std::optional<std::string> {
            const auto& o = field(const_cast<SimulationConfig&>(c));
            if (!o) return std::nullopt;
            return fmt(*o);
          }};
}

template <class Field>
Key list(const std::string& name, Field field) {
  return {name, [name, field](SimulationConfig& c, const std::string& v) { field(c) = to_list(name, v); },
          [field](const SimulationConfig& c) -> std::optional<std::string> {
            const auto& l = field(const_cast<SimulationConfig&>(c));
            if (l.empty()) return std::nullopt;
            return list_text(l);
          }};
}

Key macro_entry(const std::string& name, int i, int j) {
  return number(name, [i, j](SimulationConfig& c) -> double& { return c.macro.Fbar(i, j); });
}

const std::vector<Key>& key_table() {
  using C = SimulationConfig;
  static const std::vector<Key> keys = {
      number("geometry.cell_size", [](C& c) -> double& { return c.geometry.cell_size; }),
      number("geometry.void_fraction", [](C& c) -> double& { return c.geometry.void_fraction; }),
      number("geometry.coating_thickness", [](C& c) -> double& { return c.geometry.coating_thickness; }),
      integer("geometry.radial_layers", [](C& c) -> int& { return c.geometry.radial_layers; }),
      integer("geometry.circumferential_divisions",
              [](C& c) -> int& { return c.geometry.circumferential_divisions; }),
      integer("geometry.coating_layers", [](C& c) -> int& { return c.geometry.coating_layers; }),
      {"mesh.preset",
       [](C& c, const std::string& v) {
         const std::string s = trim(v);
         if (s != "custom") parse_mesh_preset(s);
         c.mesh_preset = s;
       },
       [](const C& c) -> std::optional<std::string> { return c.mesh_preset; }},
      number("material.matrix.gamma", [](C& c) -> double& { return c.matrix.gamma; }),
      number("material.matrix.alpha", [](C& c) -> double& { return c.matrix.alpha; }),
      number("material.matrix.chi", [](C& c) -> double& { return c.matrix.chi; }),
      number("material.matrix.mobility", [](C& c) -> double& { return c.matrix.mobility; }),
      {"material.matrix.epsilon",
       [](C& c, const std::string& v) {
         c.matrix.epsilon = to_double("material.matrix.epsilon", v);
         c.matrix_epsilon_set = true;
       },
       [](const C& c) -> std::optional<std::string> {
         if (!c.matrix_epsilon_set) return std::nullopt;
         return fmt(c.matrix.epsilon);
       }},
      number("material.matrix.j0", [](C& c) -> double& { return c.matrix.j0; }),
      number("material.coating.gamma_ratio", [](C& c) -> double& { return c.coating.gamma_ratio; }),
      number("material.coating.mobility_ratio", [](C& c) -> double& { return c.coating.mobility_ratio; }),
      optional_number("material.coating.gamma", [](C& c) -> std::optional<double>& { return c.coating.gamma; }),
      optional_number("material.coating.alpha", [](C& c) -> std::optional<double>& { return c.coating.alpha; }),
      optional_number("material.coating.chi", [](C& c) -> std::optional<double>& { return c.coating.chi; }),
      optional_number("material.coating.mobility",
                      [](C& c) -> std::optional<double>& { return c.coating.mobility; }),
      optional_number("material.coating.epsilon",
                      [](C& c) -> std::optional<double>& { return c.coating.epsilon; }),
      optional_number("material.coating.j0", [](C& c) -> std::optional<double>& { return c.coating.j0; }),
      number("time.tau", [](C& c) -> double& { return c.tau; }),
      number("time.total", [](C& c) -> double& { return c.total_time; }),
      number("time.ramp", [](C& c) -> double& { return c.ramp; }),
      integer("stability.scan_every", [](C& c) -> int& { return c.stability.scan_every; }),
      integer("stability.grid", [](C& c) -> int& { return c.stability.bloch.grid; }),
      number("stability.small_k", [](C& c) -> double& { return c.stability.bloch.small_k; }),
      integer("stability.eig_count", [](C& c) -> int& { return c.stability.bloch.eig_count; }),
      boolean("stability.refine", [](C& c) -> bool& { return c.stability.bloch.refine; }),
      {"stability.on_instability",
       [](C& c, const std::string& v) {
         const std::string s = trim(v);
         if (s == "stop") c.stability.stop_at_instability = true;
         else if (s == "continue") c.stability.stop_at_instability = false;
         else throw ConfigError("stability.on_instability: expected stop or continue, got '" + v + "'");
       },
       [](const C& c) -> std::optional<std::string> {
         return std::string(c.stability.stop_at_instability ? "stop" : "continue");
       }},
      boolean("stability.refine_critical", [](C& c) -> bool& { return c.stability.refine_critical; }),
      integer("solver.max_iterations", [](C& c) -> int& { return c.solver.max_iterations; }),
      number("solver.rel_tol", [](C& c) -> double& { return c.solver.rel_tol; }),
      number("solver.abs_tol", [](C& c) -> double& { return c.solver.abs_tol; }),
      integer("solver.max_halvings", [](C& c) -> int& { return c.solver.max_halvings; }),
      integer("solver.max_bisections", [](C& c) -> int& { return c.solver.max_bisections; }),
      integer("solver.threads", [](C& c) -> int& { return c.threads; }),
      {"output.dir", [](C& c, const std::string& v) { c.output_dir = trim(v); },
       [](const C& c) -> std::optional<std::string> { return c.output_dir; }},
      boolean("output.vtk", [](C& c) -> bool& { return c.vtk; }),
      macro_entry("macro.F11", 0, 0),
      macro_entry("macro.F12", 0, 1),
      macro_entry("macro.F21", 1, 0),
      macro_entry("macro.F22", 1, 1),
      list("sweep.void_fraction", [](C& c) -> std::vector<double>& { return c.sweep.void_fraction; }),
      list("sweep.coating_thickness", [](C& c) -> std::vector<double>& { return c.sweep.coating_thickness; }),
      list("sweep.gamma_ratio", [](C& c) -> std::vector<double>& { return c.sweep.gamma_ratio; }),
      list("sweep.mobility_ratio", [](C& c) -> std::vector<double>& { return c.sweep.mobility_ratio; }),
      list("sweep.mobility", [](C& c) -> std::vector<double>& { return c.sweep.mobility; }),
      list("sweep.alpha", [](C& c) -> std::vector<double>& { return c.sweep.alpha; }),
      integer("sweep.workers", [](C& c) -> int& { return c.sweep.workers; }),
  };
  return keys;
}

}  // namespace

bool SweepAxes::empty() const {
  return void_fraction.empty() && coating_thickness.empty() && gamma_ratio.empty() && mobility_ratio.empty() &&
         mobility.empty() && alpha.empty();
}

std::size_t SweepAxes::points() const {
  std::size_t n = 1;
  for (const auto* axis : {&void_fraction, &coating_thickness, &gamma_ratio, &mobility_ratio, &mobility, &alpha})
    n *= std::max<std::size_t>(axis->size(), 1);
  return n;
}

MaterialParams SimulationConfig::matrix_params() const {
  MaterialParams m = matrix;
  if (!matrix_epsilon_set) m.epsilon = 10.0 * m.gamma;
  return m;
}

MaterialParams SimulationConfig::coating_params() const {
  const MaterialParams m = matrix_params();
  MaterialParams c = m;
  c.gamma = coating.gamma.value_or(coating.gamma_ratio * m.gamma);
  c.mobility = coating.mobility.value_or(coating.mobility_ratio * m.mobility);
  c.alpha = coating.alpha.value_or(m.alpha);
  c.chi = coating.chi.value_or(m.chi);
  c.j0 = coating.j0.value_or(m.j0);
  c.epsilon = coating.epsilon.value_or(10.0 * c.gamma);
  return c;
}

UnitCellGeometry SimulationConfig::resolved_geometry() const {
  UnitCellGeometry g = geometry;
  if (mesh_preset != "custom") g.apply_preset(parse_mesh_preset(mesh_preset));
  return g;
}

void SimulationConfig::validate() const {
  std::ostringstream err;
  if (!(tau > 0)) err << "time.tau must be > 0; ";
  if (!(total_time >= 0)) err << "time.total must be >= 0; ";
  if (!(ramp > 0)) err << "time.ramp must be > 0; ";
  if (total_time > 0 && total_time < ramp) err << "time.total must be 0 or >= time.ramp; ";
  if (stability.scan_every < 1) err << "stability.scan_every must be >= 1; ";
  if (stability.bloch.grid < 2) err << "stability.grid must be >= 2; ";
  if (!(stability.bloch.small_k > 0 && stability.bloch.small_k < M_PI)) err << "stability.small_k must lie in (0, pi); ";
  if (stability.bloch.eig_count < 1) err << "stability.eig_count must be >= 1; ";
  if (solver.max_iterations < 1) err << "solver.max_iterations must be >= 1; ";
  if (!(solver.rel_tol > 0) || !(solver.abs_tol > 0)) err << "solver tolerances must be > 0; ";
  if (solver.max_halvings < 0 || solver.max_bisections < 0) err << "solver halvings and bisections must be >= 0; ";
  if (threads < 0) err << "solver.threads must be >= 0; ";
  if (output_dir.empty()) err << "output.dir must not be empty; ";
  if (!(macro.Fbar.determinant() > 0)) err << "macro deformation must have positive determinant; ";
  if (!(coating.gamma_ratio > 0) || !(coating.mobility_ratio > 0)) err << "coating ratios must be > 0; ";
  if (sweep.workers < 1) err << "sweep.workers must be >= 1; ";
  const std::string msg = err.str();
  if (!msg.empty()) throw ConfigError(msg.substr(0, msg.size() - 2));
  matrix_params().validate();
  coating_params().validate();
  resolved_geometry().validate();
}

void SimulationConfig::validate_sweep() const {
  if (sweep.empty()) throw ConfigError("sweep needs at least one non-empty sweep.* axis");
}

void SimulationConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : key_table())
    if (k.name == key) {
      k.set(*this, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> SimulationConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : key_table())
    if (auto v = k.get(*this)) out.emplace_back(k.name, *v);
  return out;
}

std::string SimulationConfig::canonical_text() const {
  std::string s;
  for (const auto& [k, v] : entries()) s += k + " = " + v + "\n";
  return s;
}

std::string SimulationConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SimulationConfig parse_config(const std::string& text, const std::string& origin) {
  SimulationConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

SimulationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& k : key_table()) n.push_back(k.name);
    return n;
  }();
  return names;
}

}  // namespace hydrogel
