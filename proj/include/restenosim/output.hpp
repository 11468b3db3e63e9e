#pragma once

// Result output: legacy ASCII VTK snapshots, probe CSV rows and the A-A
// section profile. All floats are written with 17 significant digits so
// reruns can be compared byte for byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "restenosim/config.hpp"
#include "restenosim/coupling.hpp"

namespace restenosim {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_vtk(const Mesh& mesh, const CoupledState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << "# vtk DataFile Version 3.0\n";
  out << "restenosim snapshot t=" << fmt(state.time) << "\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_nodes() << " double\n";
  for (const auto& p : state.current_coords) out << fmt(p[0]) << " " << fmt(p[1]) << " 0\n";

  int list_size = 0;
  for (const Element& el : mesh.elements) list_size += el.nn + 1;
  out << "CELLS " << mesh.n_elements() << " " << list_size << "\n";
  for (const Element& el : mesh.elements) {
    out << el.nn;
    for (int a = 0; a < el.nn; ++a) out << " " << el.nodes[a];
    out << "\n";
  }
  out << "CELL_TYPES " << mesh.n_elements() << "\n";
  for (const Element& el : mesh.elements) out << (el.nn == 3 ? 5 : 9) << "\n";

  out << "POINT_DATA " << mesh.n_nodes() << "\n";
  auto scalar = [&](const std::string& name, const Eigen::VectorXd& v) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < v.size(); ++i) out << fmt(v[i]) << "\n";
  };
  scalar("c_P", state.fields.c_P);
  scalar("rho_E", state.fields.rho_E);
  scalar("rho_S", state.fields.rho_S);
  out << "VECTORS displacement double\n";
  for (int i = 0; i < mesh.n_nodes(); ++i)
    out << fmt(state.displacement[2 * i]) << " " << fmt(state.displacement[2 * i + 1]) << " 0\n";

  out << "CELL_DATA " << mesh.n_elements() << "\n";
  out << "SCALARS theta double 1\nLOOKUP_TABLE default\n";
  for (int e = 0; e < mesh.n_elements(); ++e) {
    double mean = 0;
    for (const GrowthState& g : state.gp[e]) mean += g.theta;
    out << fmt(mean / state.gp[e].size()) << "\n";
  }
  out << "SCALARS J double 1\nLOOKUP_TABLE default\n";
  for (int e = 0; e < mesh.n_elements(); ++e) {
    double mean = 0;
    for (const GrowthState& g : state.gp[e]) mean += g.J_prev;
    out << fmt(mean / state.gp[e].size()) << "\n";
  }
}

// One CSV row per committed snapshot: probe field values plus global growth
// diagnostics used by the qualitative checks.
class ProbeWriter {
 public:
  ProbeWriter(const Mesh& mesh, const SimulationConfig& config, const std::string& path)
      : mesh_(mesh), config_(config), out_(path) {
    if (!out_) throw IoError("cannot open " + path);
    out_ << "time";
    for (size_t p = 0; p < config.probe_points.size(); ++p)
      out_ << ",c_P_p" << p << ",rho_E_p" << p << ",rho_S_p" << p;
    out_ << ",theta_probe,theta_min,theta_max\n";
  }

  void write_row(const CoupledState& state) {
    out_ << fmt(state.time);
    for (const auto& pt : config_.probe_points) {
      Eigen::Vector2d xi;
      // Probes are fixed in the reference configuration.
      const int e = locate_point(mesh_, pt, xi);
      if (e < 0) throw IoError("probe point outside mesh");
      out_ << "," << fmt(interpolate(mesh_, e, xi, state.fields.c_P));
      out_ << "," << fmt(interpolate(mesh_, e, xi, state.fields.rho_E));
      out_ << "," << fmt(interpolate(mesh_, e, xi, state.fields.rho_S));
    }
    double tmin = state.gp[0][0].theta, tmax = tmin;
    for (const auto& egp : state.gp)
      for (const GrowthState& g : egp) {
        tmin = std::min(tmin, g.theta);
        tmax = std::max(tmax, g.theta);
      }
    // theta at the Gauss point nearest the first probe
    double tprobe = 1.0;
    if (!config_.probe_points.empty()) {
      double best = 1e300;
      for (int e = 0; e < mesh_.n_elements(); ++e) {
        const Element& el = mesh_.elements[e];
        const QuadratureRule quad = quadrature(el.nn);
        for (size_t q = 0; q < quad.points.size(); ++q) {
          std::array<double, 4> N;
          std::array<Eigen::Vector2d, 4> dN;
          reference_shapes(el.nn, quad.points[q], N, dN);
          Eigen::Vector2d x = Eigen::Vector2d::Zero();
          for (int a = 0; a < el.nn; ++a) x += N[a] * mesh_.nodes[el.nodes[a]];
          const double d = (x - config_.probe_points[0]).squaredNorm();
          if (d < best) {
            best = d;
            tprobe = state.gp[e][q].theta;
          }
        }
      }
    }
    out_ << "," << fmt(tprobe) << "," << fmt(tmin) << "," << fmt(tmax) << "\n";
    out_.flush();
  }

 private:
  const Mesh& mesh_;
  const SimulationConfig& config_;
  std::ofstream out_;
};

// SMC (and companion) profile along the A-A section line at a fixed
// through-thickness offset, sampled at equispaced points along the length.
inline std::vector<std::array<double, 4>> sample_section(const Mesh& mesh,
                                                         const SimulationConfig& config,
                                                         const FieldState& fields) {
  std::vector<std::array<double, 4>> rows;
  const double t = config.section_offset * config.mesh_thickness;
  for (int i = 0; i < config.section_samples; ++i) {
    const double s = config.mesh_length * i / (config.section_samples - 1);
    Eigen::Vector2d x = strip_point(config, s, t);
    Eigen::Vector2d xi;
    const int e = locate_point(mesh, x, xi);
    if (e < 0) continue;
    rows.push_back({s, interpolate(mesh, e, xi, fields.c_P), interpolate(mesh, e, xi, fields.rho_E),
                    interpolate(mesh, e, xi, fields.rho_S)});
  }
  return rows;
}

inline void write_section_csv(const Mesh& mesh, const SimulationConfig& config,
                              const FieldState& fields, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << "s,c_P,rho_E,rho_S\n";
  for (const auto& row : sample_section(mesh, config, fields))
    out << fmt(row[0]) << "," << fmt(row[1]) << "," << fmt(row[2]) << "," << fmt(row[3]) << "\n";
}

}  // namespace restenosim
