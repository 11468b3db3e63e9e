#pragma once

// Line-based configuration: "section.key = value", '#' comments, defaults
// from the published parameter set. Unknown keys are hard errors.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "restenosim/mechanics.hpp"
#include "restenosim/mesh.hpp"
#include "restenosim/transport.hpp"

namespace restenosim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimulationConfig {
  // mesh: either an external file or the structured generator
  std::string mesh_file;
  double mesh_length = 6.0;      // mm
  double mesh_thickness = 0.8;   // mm
  int mesh_nx = 60;
  int mesh_ny = 8;
  Mode mesh_mode = Mode::axisym;
  double mesh_inner_radius = 1.5;  // mm, axisym offset

  double dt = 0.01;           // day
  double t_end = 1.0;         // day
  double dt_min = 1e-4;       // day
  double output_every = 0.05; // day

  TransportParams transport;
  double rho_E_0 = 7.0e-9;    // mol/mm^3
  MaterialParams material;

  int growth_dimension = 0;   // 0 = auto (3 axisym, 2 plane)
  bool stabilization_fct = true;
  bool fct_prelimit = true;
  bool coupled = true;

  // initial PDGF peaks on the inner surface, positions along the length [mm]
  std::vector<double> peak_centers{1.5, 3.0, 4.5};
  double peak_sigma = 0.2;          // mm
  double peak_amplitude = 5.0e-12;  // mol/mm^3

  std::vector<std::string> fixed_tags{"left", "right"};
  std::map<std::string, Eigen::Vector2d> tractions;  // tag -> traction [MPa]

  std::vector<Eigen::Vector2d> probe_points{{1.55, 3.0}};  // mesh coordinates
  double section_offset = 0.5;  // A-A line position, fraction of thickness
  int section_samples = 101;

  // Eigen vectors have no boolean operator==, so compare member by member.
  bool operator==(const SimulationConfig& o) const {
    auto veq = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
      return a[0] == b[0] && a[1] == b[1];
    };
    auto teq = [&] {
      const TransportParams &a = transport, &b = o.transport;
      return a.D_P == b.D_P && a.alpha == b.alpha && a.beta == b.beta && a.gamma == b.gamma &&
             a.chi == b.chi && a.kappa == b.kappa && a.rho_E_th == b.rho_E_th &&
             a.rho_S_h == b.rho_S_h;
    };
    auto meq = [&] {
      const MaterialParams &a = material, &b = o.material;
      return a.mu == b.mu && a.lambda == b.lambda && a.k1 == b.k1 && a.k2 == b.k2 &&
             a.kappa_disp == b.kappa_disp && a.theta_fiber_deg == b.theta_fiber_deg;
    };
    if (tractions.size() != o.tractions.size() || probe_points.size() != o.probe_points.size())
      return false;
    for (auto it = tractions.begin(), jt = o.tractions.begin(); it != tractions.end(); ++it, ++jt)
      if (it->first != jt->first || !veq(it->second, jt->second)) return false;
    for (size_t i = 0; i < probe_points.size(); ++i)
      if (!veq(probe_points[i], o.probe_points[i])) return false;
    return mesh_file == o.mesh_file && mesh_length == o.mesh_length &&
           mesh_thickness == o.mesh_thickness && mesh_nx == o.mesh_nx && mesh_ny == o.mesh_ny &&
           mesh_mode == o.mesh_mode && mesh_inner_radius == o.mesh_inner_radius && dt == o.dt &&
           t_end == o.t_end && dt_min == o.dt_min && output_every == o.output_every && teq() &&
           rho_E_0 == o.rho_E_0 && meq() && growth_dimension == o.growth_dimension &&
           stabilization_fct == o.stabilization_fct && fct_prelimit == o.fct_prelimit &&
           coupled == o.coupled && peak_centers == o.peak_centers && peak_sigma == o.peak_sigma &&
           peak_amplitude == o.peak_amplitude && fixed_tags == o.fixed_tags &&
           section_offset == o.section_offset && section_samples == o.section_samples;
  }

  void validate() const {
    transport.validate();
    material.validate();
    if (mesh_file.empty()) {
      if (mesh_nx < 1 || mesh_ny < 1 || mesh_length <= 0 || mesh_thickness <= 0)
        throw ConfigError("invalid mesh generator parameters");
    }
    if (!(dt > 0) || !(dt_min > 0)) throw ConfigError("time.dt and time.dt_min must be positive");
    if (t_end > 0 && !(dt_min <= dt && dt <= t_end))
      throw ConfigError("require time.dt_min <= time.dt <= time.t_end");
    if (!(rho_E_0 > 0)) throw ConfigError("transport.rho_E_0 must be positive");
    if (peak_sigma <= 0) throw ConfigError("ic.peak_sigma must be positive");
    if (peak_amplitude < 0) throw ConfigError("ic.peak_amplitude must be non-negative");
    if (growth_dimension < 0 || growth_dimension > 3)
      throw ConfigError("growth.dimension must be 0 (auto), 2 or 3");
    if (section_samples < 2) throw ConfigError("section.samples must be >= 2");
  }

  int effective_growth_dim() const {
    if (growth_dimension > 0) return growth_dimension;
    return mesh_mode == Mode::axisym ? 3 : 2;
  }
};

namespace detail {

inline std::vector<double> parse_number_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::istringstream ss(s);
  double v;
  while (ss >> v) out.push_back(v);
  if (!ss.eof()) throw ConfigError("invalid number list for " + key + ": '" + s + "'");
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + s + "'");
}

}  // namespace detail

inline void apply_config_entry(SimulationConfig& c, const std::string& key,
                               const std::string& value) {
  auto num = [&] {
    try {
      size_t pos = 0;
      double v = std::stod(value, &pos);
      while (pos < value.size() && std::isspace(static_cast<unsigned char>(value[pos]))) ++pos;
      if (pos != value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("invalid number for " + key + ": '" + value + "'");
    }
  };
  auto integer = [&] { return static_cast<int>(std::lround(num())); };

  if (key == "mesh.file") c.mesh_file = value;
  else if (key == "mesh.length") c.mesh_length = num();
  else if (key == "mesh.thickness") c.mesh_thickness = num();
  else if (key == "mesh.nx") c.mesh_nx = integer();
  else if (key == "mesh.ny") c.mesh_ny = integer();
  else if (key == "mesh.inner_radius") c.mesh_inner_radius = num();
  else if (key == "mesh.mode") {
    if (value == "plane") c.mesh_mode = Mode::plane;
    else if (value == "axisym") c.mesh_mode = Mode::axisym;
    else throw ConfigError("mesh.mode must be plane or axisym");
  }
  else if (key == "time.dt") c.dt = num();
  else if (key == "time.t_end") c.t_end = num();
  else if (key == "time.dt_min") c.dt_min = num();
  else if (key == "time.output_every") c.output_every = num();
  else if (key == "transport.D_P") c.transport.D_P = num();
  else if (key == "transport.alpha") c.transport.alpha = num();
  else if (key == "transport.beta") c.transport.beta = num();
  else if (key == "transport.gamma") c.transport.gamma = num();
  else if (key == "transport.chi") c.transport.chi = num();
  else if (key == "transport.kappa") c.transport.kappa = num();
  else if (key == "transport.rho_E_th") c.transport.rho_E_th = num();
  else if (key == "transport.rho_E_0") c.rho_E_0 = num();
  else if (key == "transport.rho_S_0") c.transport.rho_S_h = num();
  else if (key == "material.mu") c.material.mu = num();
  else if (key == "material.lambda") c.material.lambda = num();
  else if (key == "material.k1") c.material.k1 = num();
  else if (key == "material.k2") c.material.k2 = num();
  else if (key == "material.kappa") c.material.kappa_disp = num();
  else if (key == "material.fiber_angle") c.material.theta_fiber_deg = num();
  else if (key == "growth.dimension") c.growth_dimension = integer();
  else if (key == "stabilization") {
    if (value == "fct") c.stabilization_fct = true;
    else if (value == "none") c.stabilization_fct = false;
    else throw ConfigError("stabilization must be none or fct");
  }
  else if (key == "fct.prelimit") c.fct_prelimit = detail::parse_bool(value, key);
  else if (key == "run.coupled") c.coupled = detail::parse_bool(value, key);
  else if (key == "ic.peak_centers") c.peak_centers = detail::parse_number_list(value, key);
  else if (key == "ic.peak_sigma") c.peak_sigma = num();
  else if (key == "ic.peak_amplitude") c.peak_amplitude = num();
  else if (key == "bc.fixed") {
    c.fixed_tags.clear();
    std::istringstream ss(value);
    std::string tag;
    while (ss >> tag) c.fixed_tags.push_back(tag);
  }
  else if (key.rfind("bc.traction.", 0) == 0) {
    auto v = detail::parse_number_list(value, key);
    if (v.size() != 2) throw ConfigError(key + " expects two components");
    c.tractions[key.substr(12)] = Eigen::Vector2d(v[0], v[1]);
  }
  else if (key == "probe.points") {
    auto v = detail::parse_number_list(value, key);
    if (v.empty() || v.size() % 2 != 0) throw ConfigError("probe.points expects coordinate pairs");
    c.probe_points.clear();
    for (size_t i = 0; i + 1 < v.size(); i += 2) c.probe_points.emplace_back(v[i], v[i + 1]);
  }
  else if (key == "section.offset") c.section_offset = num();
  else if (key == "section.samples") c.section_samples = integer();
  else throw ConfigError("unknown configuration key '" + key + "'");
}

inline SimulationConfig parse_config_stream(std::istream& in, const std::string& name) {
  SimulationConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r");
      const size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
    try {
      apply_config_entry(c, key, value);
    } catch (const ConfigError& err) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": " + err.what());
    }
  }
  c.validate();
  return c;
}

inline SimulationConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config_stream(in, path);
}

inline std::string serialize_config(const SimulationConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "mesh.file = " << c.mesh_file << "\n";
  out << "mesh.length = " << c.mesh_length << "\n";
  out << "mesh.thickness = " << c.mesh_thickness << "\n";
  out << "mesh.nx = " << c.mesh_nx << "\n";
  out << "mesh.ny = " << c.mesh_ny << "\n";
  out << "mesh.mode = " << (c.mesh_mode == Mode::plane ? "plane" : "axisym") << "\n";
  out << "mesh.inner_radius = " << c.mesh_inner_radius << "\n";
  out << "time.dt = " << c.dt << "\n";
  out << "time.t_end = " << c.t_end << "\n";
  out << "time.dt_min = " << c.dt_min << "\n";
  out << "time.output_every = " << c.output_every << "\n";
  out << "transport.D_P = " << c.transport.D_P << "\n";
  out << "transport.alpha = " << c.transport.alpha << "\n";
  out << "transport.beta = " << c.transport.beta << "\n";
  out << "transport.gamma = " << c.transport.gamma << "\n";
  out << "transport.chi = " << c.transport.chi << "\n";
  out << "transport.kappa = " << c.transport.kappa << "\n";
  out << "transport.rho_E_th = " << c.transport.rho_E_th << "\n";
  out << "transport.rho_E_0 = " << c.rho_E_0 << "\n";
  out << "transport.rho_S_0 = " << c.transport.rho_S_h << "\n";
  out << "material.mu = " << c.material.mu << "\n";
  out << "material.lambda = " << c.material.lambda << "\n";
  out << "material.k1 = " << c.material.k1 << "\n";
  out << "material.k2 = " << c.material.k2 << "\n";
  out << "material.kappa = " << c.material.kappa_disp << "\n";
  out << "material.fiber_angle = " << c.material.theta_fiber_deg << "\n";
  out << "growth.dimension = " << c.growth_dimension << "\n";
  out << "stabilization = " << (c.stabilization_fct ? "fct" : "none") << "\n";
  out << "fct.prelimit = " << (c.fct_prelimit ? "true" : "false") << "\n";
  out << "run.coupled = " << (c.coupled ? "true" : "false") << "\n";
  out << "ic.peak_centers =";
  for (double p : c.peak_centers) out << " " << p;
  out << "\n";
  out << "ic.peak_sigma = " << c.peak_sigma << "\n";
  out << "ic.peak_amplitude = " << c.peak_amplitude << "\n";
  out << "bc.fixed =";
  for (const auto& t : c.fixed_tags) out << " " << t;
  out << "\n";
  for (const auto& [tag, t] : c.tractions)
    out << "bc.traction." << tag << " = " << t[0] << " " << t[1] << "\n";
  out << "probe.points =";
  for (const auto& p : c.probe_points) out << " " << p[0] << " " << p[1];
  out << "\n";
  out << "section.offset = " << c.section_offset << "\n";
  out << "section.samples = " << c.section_samples << "\n";
  return out.str();
}

inline Mesh build_mesh(const SimulationConfig& c) {
  if (!c.mesh_file.empty()) return load_mesh(c.mesh_file);
  return structured_rectangle(c.mesh_length, c.mesh_thickness, c.mesh_nx, c.mesh_ny, c.mesh_mode,
                              c.mesh_mode == Mode::axisym ? c.mesh_inner_radius : 0.0);
}

// Domain position of a point given (along-length s, through-thickness t).
inline Eigen::Vector2d strip_point(const SimulationConfig& c, double s, double t) {
  if (c.mesh_mode == Mode::plane) return {s, t};
  return {c.mesh_inner_radius + t, s};
}

inline FieldState build_initial_state(const SimulationConfig& c, const Mesh& mesh) {
  FieldState s = healthy_state(mesh.n_nodes(), c.transport, c.rho_E_0);
  Eigen::Vector2d lo = mesh.nodes.empty() ? Eigen::Vector2d::Zero() : mesh.nodes[0];
  Eigen::Vector2d hi = lo;
  for (const auto& p : mesh.nodes) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (double center : c.peak_centers) {
    const Eigen::Vector2d x0 = strip_point(c, center, 0.0);
    if ((x0.array() < lo.array() - 1e-12).any() || (x0.array() > hi.array() + 1e-12).any())
      std::cerr << "warning: PDGF peak center (" << x0[0] << ", " << x0[1]
                << ") lies outside the mesh bounding box\n";
    for (int i = 0; i < mesh.n_nodes(); ++i) {
      const double r2 = (mesh.nodes[i] - x0).squaredNorm();
      s.c_P[i] += c.peak_amplitude * std::exp(-r2 / (2.0 * c.peak_sigma * c.peak_sigma));
    }
  }
  return s;
}

}  // namespace restenosim
