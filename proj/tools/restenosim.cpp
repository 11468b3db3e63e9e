// Command-line driver: coupled/transport-only runs, the material-point
// tester, the discretization convergence study and section-profile export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "restenosim/config.hpp"
#include "restenosim/coupling.hpp"
#include "restenosim/output.hpp"

namespace fs = std::filesystem;
using namespace restenosim;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  double t_end_override = -1.0;
  double dt_override = -1.0;
  std::string mesh_override;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "configuration file (omit for defaults)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--t-end", o.t_end_override, "override time.t_end [day]");
  cmd->add_option("--dt", o.dt_override, "override time.dt [day]");
  cmd->add_option("--mesh", o.mesh_override, "override mesh.file");
}

SimulationConfig load_config(const CommonOpts& o) {
  SimulationConfig c = o.config_path.empty() ? SimulationConfig{} : parse_config(o.config_path);
  if (o.t_end_override >= 0) c.t_end = o.t_end_override;
  if (o.dt_override > 0) c.dt = o.dt_override;
  if (!o.mesh_override.empty()) c.mesh_file = o.mesh_override;
  c.validate();
  return c;
}

std::map<int, double> fixed_dofs_from_tags(const Mesh& mesh, const std::vector<std::string>& tags) {
  std::map<int, double> fixed;
  for (const BoundaryEdge& be : mesh.boundary) {
    if (std::find(tags.begin(), tags.end(), be.tag) == tags.end()) continue;
    const Element& el = mesh.elements[be.element];
    for (int ln : edge_nodes(el, be.local_edge)) {
      fixed[2 * el.nodes[ln]] = 0.0;
      fixed[2 * el.nodes[ln] + 1] = 0.0;
    }
  }
  return fixed;
}

int run_simulation(const CommonOpts& opts, bool force_transport_only, bool section_only) {
  SimulationConfig config = load_config(opts);
  if (force_transport_only) config.coupled = false;
  const Mesh mesh = build_mesh(config);
  fs::create_directories(opts.out_dir);

  FctOptions fct{config.stabilization_fct, config.fct_prelimit};
  MechanicsProblem mp(mesh, config.material);
  mp.fixed_dofs = fixed_dofs_from_tags(mesh, config.fixed_tags);
  mp.tractions = config.tractions;
  CoupledDriver driver(mesh, config.transport, mp, fct, config.coupled,
                       config.effective_growth_dim());

  std::unique_ptr<ProbeWriter> probes;
  if (!section_only)
    probes = std::make_unique<ProbeWriter>(mesh, config, opts.out_dir + "/probes.csv");

  int snapshot = 0;
  CoupledState final_state = driver.run(
      build_initial_state(config, mesh), config.dt, config.t_end, config.dt_min,
      config.output_every, [&](const CoupledState& s) {
        if (probes) probes->write_row(s);
        if (!section_only) {
          std::ostringstream name;
          name << opts.out_dir << "/snapshot_" << std::setw(4) << std::setfill('0') << snapshot
               << ".vtk";
          write_vtk(mesh, s, name.str());
        }
        ++snapshot;
      });

  write_section_csv(mesh, config, final_state.fields, opts.out_dir + "/section_AA.csv");
  std::cout << "completed " << final_state.step << " steps to t = " << final_state.time
            << " day; outputs in " << opts.out_dir << "\n";
  return 0;
}

int run_material_test(const std::string& history_path, const std::string& out_dir) {
  std::ifstream in(history_path);
  if (!in) throw IoError("cannot open F-history file: " + history_path);
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/material_test.csv");
  out << "psi,P00,P01,P02,P10,P11,P12,P20,P21,P22,fd_err_P,fd_err_A\n";

  MaterialParams mat;
  const StructureTensors st = StructureTensors::make(mat, Mode::axisym);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (v.empty()) continue;
    if (v.size() != 5 && v.size() != 10)
      throw ConfigError("F-history line needs 4 or 9 matrix entries plus theta");
    Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
    double theta;
    if (v.size() == 5) {
      F(0, 0) = v[0]; F(0, 1) = v[1]; F(1, 0) = v[2]; F(1, 1) = v[3];
      theta = v[4];
    } else {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) F(i, j) = v[3 * i + j];
      theta = v[9];
    }

    const PointResponse pr = material_point(F, theta, nullptr, st, mat);
    const double h = 1e-6 * F.norm();
    double errP = 0, errA = 0, nrmP = 0, nrmA = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Eigen::Matrix3d Fp = F, Fm = F;
        Fp(i, j) += h;
        Fm(i, j) -= h;
        const double fd = (free_energy(Fp, theta, st, mat) - free_energy(Fm, theta, st, mat)) / (2 * h);
        errP += (fd - pr.P(i, j)) * (fd - pr.P(i, j));
        nrmP += pr.P(i, j) * pr.P(i, j);
        const Eigen::Matrix3d dP =
            (pk1_stress(Fp, theta, st, mat) - pk1_stress(Fm, theta, st, mat)) / (2 * h);
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) {
            errA += (dP(k, l) - pr.A(k, l, i, j)) * (dP(k, l) - pr.A(k, l, i, j));
            nrmA += pr.A(k, l, i, j) * pr.A(k, l, i, j);
          }
      }
    out << fmt(pr.psi);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << "," << fmt(pr.P(i, j));
    out << "," << fmt(std::sqrt(errP / std::max(nrmP, 1e-24)));
    out << "," << fmt(std::sqrt(errA / std::max(nrmA, 1e-24))) << "\n";
  }
  std::cout << "wrote " << out_dir << "/material_test.csv\n";
  return 0;
}

int run_convergence(const CommonOpts& opts, int levels) {
  SimulationConfig base = load_config(opts);
  base.coupled = false;
  if (!base.mesh_file.empty())
    throw ConfigError("convergence requires the structured mesh generator");
  fs::create_directories(opts.out_dir);

  // Sample the A-A SMC profile at fixed points for each refinement level.
  std::vector<Eigen::VectorXd> profiles;
  const int n_samples = base.section_samples;
  for (int lvl = 0; lvl < levels; ++lvl) {
    SimulationConfig c = base;
    c.mesh_nx = base.mesh_nx << lvl;
    c.mesh_ny = base.mesh_ny << lvl;
    c.dt = base.dt / (1 << lvl);
    c.output_every = c.t_end;
    const Mesh mesh = build_mesh(c);
    FctOptions fct{c.stabilization_fct, c.fct_prelimit};
    MechanicsProblem mp(mesh, c.material);
    CoupledDriver driver(mesh, c.transport, mp, fct, false, c.effective_growth_dim());
    CoupledState final_state =
        driver.run(build_initial_state(c, mesh), c.dt, c.t_end, c.dt_min, c.t_end, nullptr);
    Eigen::VectorXd prof(n_samples);
    auto rows = sample_section(mesh, c, final_state.fields);
    for (int i = 0; i < n_samples; ++i) prof[i] = rows.at(i)[3];
    profiles.push_back(prof);
    std::cout << "level " << lvl << ": " << c.mesh_nx << "x" << c.mesh_ny << ", dt = " << c.dt
              << "\n";
  }

  std::ofstream out(opts.out_dir + "/convergence.csv");
  out << "level,diff_to_previous,ratio\n";
  std::cout << "level  ||p_k - p_{k-1}||  ratio\n";
  double prev_diff = -1.0;
  for (size_t k = 1; k < profiles.size(); ++k) {
    const double diff = (profiles[k] - profiles[k - 1]).norm() / std::sqrt(n_samples);
    const double ratio = prev_diff > 0 ? diff / prev_diff : 0.0;
    out << k << "," << fmt(diff) << "," << fmt(ratio) << "\n";
    std::cout << k << "      " << diff << "  " << (prev_diff > 0 ? std::to_string(ratio) : "-")
              << "\n";
    prev_diff = diff;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"restenosim: finite-element simulation of in-stent restenosis"};
  app.require_subcommand(1);

  CommonOpts run_opts, transport_opts, conv_opts, section_opts;
  std::string history_path, material_out = "out";
  int levels = 4;

  auto* cmd_run = app.add_subcommand("run", "coupled transport + growth simulation");
  add_common(cmd_run, run_opts);
  auto* cmd_transport = app.add_subcommand("transport-only", "transport without mechanics");
  add_common(cmd_transport, transport_opts);
  auto* cmd_material = app.add_subcommand("material-test", "material-point driver with FD checks");
  cmd_material->add_option("--f-history", history_path, "file with F entries plus theta per line")
      ->required();
  cmd_material->add_option("--out", material_out, "output directory");
  auto* cmd_conv = app.add_subcommand("convergence", "mesh/time-step self-convergence study");
  add_common(cmd_conv, conv_opts);
  cmd_conv->add_option("--levels", levels, "number of refinement levels");
  auto* cmd_section = app.add_subcommand("section-plot", "export the A-A section profile");
  add_common(cmd_section, section_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) return run_simulation(run_opts, false, false);
    if (cmd_transport->parsed()) return run_simulation(transport_opts, true, false);
    if (cmd_material->parsed()) return run_material_test(history_path, material_out);
    if (cmd_conv->parsed()) return run_convergence(conv_opts, levels);
    if (cmd_section->parsed()) return run_simulation(section_opts, false, true);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const MeshError& e) {
    std::cerr << "mesh error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
