#pragma once

// Growth kinematics, anisotropic hyperelastic response with dispersed fiber
// families, the consistent tangent including the growth term, and the
// quasi-static Newton-Raphson equilibrium solve.

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "restenosim/mesh.hpp"
#include "restenosim/numerics.hpp"
#include "restenosim/parallel.hpp"

namespace restenosim {

// Signals the driver to reject the step and retry with a smaller dt.
struct StepReject : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NewtonDivergence : StepReject {
  using StepReject::StepReject;
};

struct MaterialParams {
  double mu = 0.02;             // MPa
  double lambda = 10.0;         // MPa
  double k1 = 0.112;            // MPa
  double k2 = 20.61;            // dimensionless
  double kappa_disp = 0.1;      // fiber dispersion, in [0, 1/3]
  double theta_fiber_deg = 41;  // helix angle per family, from circumferential

  void validate() const {
    if (!(mu > 0 && lambda > 0 && k1 > 0 && k2 > 0))
      throw std::invalid_argument("material moduli must be strictly positive");
    if (!(kappa_disp >= 0 && kappa_disp <= 1.0 / 3.0))
      throw std::invalid_argument("dispersion parameter must lie in [0, 1/3]");
  }
};

// Tensor indices: 0 = first coordinate (x or r), 1 = second (y or z),
// 2 = out-of-plane. The circumferential direction is index 2 in both modes;
// axial is index 0 in plane mode and index 1 in axisymmetric mode.
struct StructureTensors {
  Eigen::Matrix3d H1, H2;
  Eigen::Vector3d a01, a02;

  static StructureTensors make(const MaterialParams& mat, Mode mode) {
    const double t = mat.theta_fiber_deg * std::numbers::pi / 180.0;
    StructureTensors st;
    if (mode == Mode::axisym) {
      st.a01 = {0.0, std::sin(t), std::cos(t)};
      st.a02 = {0.0, -std::sin(t), std::cos(t)};
    } else {
      st.a01 = {std::sin(t), 0.0, std::cos(t)};
      st.a02 = {-std::sin(t), 0.0, std::cos(t)};
    }
    const double k = mat.kappa_disp;
    st.H1 = k * Eigen::Matrix3d::Identity() + (1 - 3 * k) * st.a01 * st.a01.transpose();
    st.H2 = k * Eigen::Matrix3d::Identity() + (1 - 3 * k) * st.a02 * st.a02.transpose();
    return st;
  }
};

struct GrowthState {
  double theta = 1.0;
  double theta_prev = 1.0;
  double J_prev = 1.0;
};

// Incremental growth stretch. With theta_prev = J_prev = 1 this reduces to
// the total formula theta = (1 + J (rho_S/rho_S_h - 1))^(1/d).
inline double growth_stretch_incremental(double theta_prev, double J, double J_prev, double rho_S,
                                         double rho_S_h, int d) {
  const double base = 1.0 + (J / J_prev) * (rho_S / rho_S_h - 1.0);
  if (!(base > 0.0))
    throw StepReject("growth stretch base non-positive (rho_S/rho_S_h = " +
                     std::to_string(rho_S / rho_S_h) + ")");
  return theta_prev * std::pow(base, 1.0 / d);
}

struct Tensor4 {
  std::array<double, 81> v{};
  double& operator()(int i, int j, int k, int l) { return v[((i * 3 + j) * 3 + k) * 3 + l]; }
  double operator()(int i, int j, int k, int l) const { return v[((i * 3 + j) * 3 + k) * 3 + l]; }
};

struct PointResponse {
  double psi = 0.0;
  Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
  Tensor4 A;  // dP/dF + dP/dtheta (x) dtheta/dF
};

namespace detail {

// dS/dC_e for S = dpsi/dC_e, minor-symmetric in both index pairs.
struct ConstitutiveCore {
  Eigen::Matrix3d Sbar;
  Tensor4 Chat;
  double psi;
};

inline ConstitutiveCore constitutive_core(const Eigen::Matrix3d& Ce, const StructureTensors& st,
                                          const MaterialParams& mat, bool want_tangent) {
  ConstitutiveCore out;
  const Eigen::Matrix3d Ci = Ce.inverse();
  const double J2 = Ce.determinant();  // = J_e^2
  if (!(J2 > 0.0)) throw StepReject("non-positive elastic Jacobian");
  const double lnJe = 0.5 * std::log(J2);

  out.psi = 0.5 * mat.mu * (Ce.trace() - 3.0) - mat.mu * lnJe +
            0.25 * mat.lambda * (J2 - 1.0 - 2.0 * lnJe);
  out.Sbar = 0.5 * mat.mu * (Eigen::Matrix3d::Identity() - Ci) +
             0.25 * mat.lambda * (J2 - 1.0) * Ci;

  const Eigen::Matrix3d* Hs[2] = {&st.H1, &st.H2};
  double fiber_coef[2] = {0.0, 0.0};  // tangent weight per family
  for (int f = 0; f < 2; ++f) {
    const double E = (*Hs[f]).cwiseProduct(Ce).sum() - 1.0;
    if (E <= 0.0) continue;  // tension-only fibers
    const double arg = mat.k2 * E * E;
    if (arg > 700.0) throw StepReject("fiber energy overflow (exp argument " + std::to_string(arg) + ")");
    const double ex = std::exp(arg);
    out.psi += 0.5 * mat.k1 / mat.k2 * (ex - 1.0);
    out.Sbar += mat.k1 * ex * E * (*Hs[f]);
    fiber_coef[f] = mat.k1 * ex * (1.0 + 2.0 * mat.k2 * E * E);
  }

  if (want_tangent) {
    const double c_inv = -0.5 * mat.mu + 0.25 * mat.lambda * (J2 - 1.0);
    const double c_vol = 0.25 * mat.lambda * J2;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            double t = c_vol * Ci(a, b) * Ci(c, d) -
                       0.5 * c_inv * (Ci(a, c) * Ci(b, d) + Ci(a, d) * Ci(b, c));
            for (int f = 0; f < 2; ++f)
              if (fiber_coef[f] != 0.0) t += fiber_coef[f] * (*Hs[f])(a, b) * (*Hs[f])(c, d);
            out.Chat(a, b, c, d) = t;
          }
  }
  return out;
}

}  // namespace detail

inline double free_energy(const Eigen::Matrix3d& F, double theta, const StructureTensors& st,
                          const MaterialParams& mat) {
  const Eigen::Matrix3d Ce = (F.transpose() * F) / (theta * theta);
  return detail::constitutive_core(Ce, st, mat, false).psi;
}

inline Eigen::Matrix3d pk1_stress(const Eigen::Matrix3d& F, double theta,
                                  const StructureTensors& st, const MaterialParams& mat) {
  const double th2 = theta * theta;
  const Eigen::Matrix3d Ce = (F.transpose() * F) / th2;
  const auto core = detail::constitutive_core(Ce, st, mat, false);
  return (2.0 / th2) * F * core.Sbar;
}

// Full point response. dtheta_dF == nullptr freezes the growth stretch
// (the tangent then carries only the dP/dF part).
inline PointResponse material_point(const Eigen::Matrix3d& F, double theta,
                                    const Eigen::Matrix3d* dtheta_dF, const StructureTensors& st,
                                    const MaterialParams& mat, bool want_tangent = true) {
  const double th2 = theta * theta;
  const Eigen::Matrix3d Ce = (F.transpose() * F) / th2;
  const auto core = detail::constitutive_core(Ce, st, mat, want_tangent);

  PointResponse out;
  out.psi = core.psi;
  out.P = (2.0 / th2) * F * core.Sbar;
  if (!want_tangent) return out;

  // dP/dF_iJkL = (2/th^2) delta_ik Sbar_JL + (4/th^4) F_iA F_kM Chat_AJML
  for (int i = 0; i < 3; ++i)
    for (int J = 0; J < 3; ++J)
      for (int k = 0; k < 3; ++k)
        for (int L = 0; L < 3; ++L) {
          double t = (i == k) ? (2.0 / th2) * core.Sbar(J, L) : 0.0;
          double s = 0.0;
          for (int A = 0; A < 3; ++A)
            for (int M = 0; M < 3; ++M) s += F(i, A) * F(k, M) * core.Chat(A, J, M, L);
          out.A(i, J, k, L) = t + (4.0 / (th2 * th2)) * s;
        }

  if (dtheta_dF) {
    // dP/dtheta = -(2/theta) P - (4/theta^3) F (Chat : C_e)
    Eigen::Matrix3d ChatCe = Eigen::Matrix3d::Zero();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double s = 0.0;
        for (int m = 0; m < 3; ++m)
          for (int n = 0; n < 3; ++n) s += core.Chat(a, b, m, n) * Ce(m, n);
        ChatCe(a, b) = s;
      }
    const Eigen::Matrix3d dPdth =
        -(2.0 / theta) * out.P - (4.0 / (theta * th2)) * F * ChatCe;
    for (int i = 0; i < 3; ++i)
      for (int J = 0; J < 3; ++J)
        for (int k = 0; k < 3; ++k)
          for (int L = 0; L < 3; ++L) out.A(i, J, k, L) += dPdth(i, J) * (*dtheta_dF)(k, L);
  }
  return out;
}

// Per-Gauss-point growth input for the structural solve: committed history
// plus the SMC density ratio frozen within the solve.
struct GrowthInput {
  double theta_prev = 1.0;
  double J_prev = 1.0;
  double rho_ratio = 1.0;  // rho_S / rho_S_h
};

struct MechanicsProblem {
  const Mesh& mesh;
  MaterialParams material;
  StructureTensors structure;
  int growth_dim;  // d in theta = (...)^(1/d); 3 in axisym mode, 2 in plane
  std::map<int, double> fixed_dofs;                  // dof (2*node+comp) -> value
  std::map<std::string, Eigen::Vector2d> tractions;  // boundary tag -> traction [MPa]

  MechanicsProblem(const Mesh& m, MaterialParams mat)
      : mesh(m),
        material(mat),
        structure(StructureTensors::make(mat, m.mode)),
        growth_dim(m.mode == Mode::axisym ? 3 : 2) {
    material.validate();
  }
};

struct NewtonResult {
  Eigen::VectorXd u;                        // nodal displacements
  std::vector<std::vector<double>> theta;   // converged growth stretch per element x qp
  std::vector<std::vector<double>> J;       // det F per element x qp
  std::vector<double> residual_history;
  int iterations = 0;
};

namespace detail {

// Deformation gradient and the discrete delta-F rows at one Gauss point.
// In axisymmetric mode the radial dof carries the hoop component N/R.
struct KinematicPoint {
  Eigen::Matrix3d F;
  double weight;
  // dF(a, comp) as a 3x3 variation tensor per (local node, displacement comp)
  std::array<std::array<Eigen::Matrix3d, 2>, 4> dF;
  int nn;
  std::array<int, 4> nodes;
};

inline KinematicPoint kinematic_point(const Mesh& mesh, int element, const Eigen::Vector2d& qp,
                                      double w, const Eigen::VectorXd& u) {
  const ShapeEval s = shape_eval(mesh, element, qp, w);
  const Element& el = mesh.elements[element];
  KinematicPoint kp;
  kp.nn = el.nn;
  kp.nodes = el.nodes;
  kp.weight = s.detJ_times_w;
  kp.F = Eigen::Matrix3d::Identity();
  for (int a = 0; a < el.nn; ++a) {
    const Eigen::Vector2d ua(u[2 * el.nodes[a]], u[2 * el.nodes[a] + 1]);
    for (int i = 0; i < 2; ++i)
      for (int J = 0; J < 2; ++J) kp.F(i, J) += ua[i] * s.dN_dx[a][J];
  }
  if (mesh.mode == Mode::axisym) {
    double ur = 0.0;
    for (int a = 0; a < el.nn; ++a) ur += s.N[a] * u[2 * el.nodes[a]];
    kp.F(2, 2) = 1.0 + ur / s.radius;
  }
  for (int a = 0; a < el.nn; ++a)
    for (int i = 0; i < 2; ++i) {
      Eigen::Matrix3d dF = Eigen::Matrix3d::Zero();
      for (int J = 0; J < 2; ++J) dF(i, J) = s.dN_dx[a][J];
      if (mesh.mode == Mode::axisym && i == 0) dF(2, 2) = s.N[a] / s.radius;
      kp.dF[a][i] = dF;
    }
  return kp;
}

}  // namespace detail

// Quasi-static equilibrium via Newton-Raphson. The growth stretch is a
// function of J within the solve; its F-dependence enters the tangent.
inline NewtonResult newton_solve(const MechanicsProblem& prob,
                                 const std::vector<std::vector<GrowthInput>>& growth,
                                 const Eigen::VectorXd& u_initial, int max_iters = 25) {
  const Mesh& mesh = prob.mesh;
  const int ndof = 2 * mesh.n_nodes();
  NewtonResult result;
  result.u = u_initial.size() == ndof ? u_initial : Eigen::VectorXd::Zero(ndof);
  result.theta.assign(mesh.n_elements(), {});
  result.J.assign(mesh.n_elements(), {});

  for (auto& [dof, v] : prob.fixed_dofs) result.u[dof] = v;

  // External force from boundary tractions (reference configuration).
  Eigen::VectorXd f_ext = Eigen::VectorXd::Zero(ndof);
  for (const BoundaryEdge& be : mesh.boundary) {
    auto tr = prob.tractions.find(be.tag);
    if (tr == prob.tractions.end()) continue;
    const Element& el = mesh.elements[be.element];
    for (const EdgeEval& e : edge_quadrature(mesh, be)) {
      for (int a = 0; a < el.nn; ++a)
        for (int i = 0; i < 2; ++i)
          f_ext[2 * el.nodes[a] + i] += e.N[a] * tr->second[i] * e.ds_times_w;
    }
  }

  double res0 = -1.0;
  for (int iter = 0; iter <= max_iters; ++iter) {
    SparseAssembler assemK(ndof);
    Eigen::VectorXd f_int = Eigen::VectorXd::Zero(ndof);

    struct ElemContribution {
      Eigen::MatrixXd K;
      Eigen::VectorXd f;
      std::vector<double> theta, J;
    };
    std::vector<ElemContribution> contrib(mesh.n_elements());

    std::exception_ptr first_error;
    std::mutex err_mutex;
    parallel_for(mesh.n_elements(), [&](int e) {
      try {
        const Element& el = mesh.elements[e];
        const QuadratureRule quad = quadrature(el.nn);
        ElemContribution& c = contrib[e];
        c.K = Eigen::MatrixXd::Zero(2 * el.nn, 2 * el.nn);
        c.f = Eigen::VectorXd::Zero(2 * el.nn);
        for (size_t q = 0; q < quad.points.size(); ++q) {
          const auto kp = detail::kinematic_point(mesh, e, quad.points[q], quad.weights[q], result.u);
          const GrowthInput& g = growth[e][q];
          const double J = kp.F.determinant();
          if (!(J > 0.0)) throw StepReject("element " + std::to_string(e) + " inverted (J <= 0)");
          const double theta =
              growth_stretch_incremental(g.theta_prev, J, g.J_prev, g.rho_ratio, 1.0, prob.growth_dim);
          c.theta.push_back(theta);
          c.J.push_back(J);

          Eigen::Matrix3d dth_dF = Eigen::Matrix3d::Zero();
          const Eigen::Matrix3d* dth = nullptr;
          if (g.rho_ratio != 1.0) {
            const double base = 1.0 + (J / g.J_prev) * (g.rho_ratio - 1.0);
            const double coef = g.theta_prev / prob.growth_dim *
                                std::pow(base, 1.0 / prob.growth_dim - 1.0) *
                                (g.rho_ratio - 1.0) / g.J_prev;
            dth_dF = coef * J * kp.F.inverse().transpose();
            dth = &dth_dF;
          }
          const PointResponse pr = material_point(kp.F, theta, dth, prob.structure, prob.material);

          for (int a = 0; a < kp.nn; ++a)
            for (int i = 0; i < 2; ++i) {
              c.f[2 * a + i] += pr.P.cwiseProduct(kp.dF[a][i]).sum() * kp.weight;
              for (int b = 0; b < kp.nn; ++b)
                for (int k = 0; k < 2; ++k) {
                  double s = 0.0;
                  const Eigen::Matrix3d& dFa = kp.dF[a][i];
                  const Eigen::Matrix3d& dFb = kp.dF[b][k];
                  for (int p = 0; p < 3; ++p)
                    for (int q2 = 0; q2 < 3; ++q2) {
                      if (dFa(p, q2) == 0.0) continue;
                      double inner = 0.0;
                      for (int r = 0; r < 3; ++r)
                        for (int t = 0; t < 3; ++t) {
                          if (dFb(r, t) == 0.0) continue;
                          inner += pr.A(p, q2, r, t) * dFb(r, t);
                        }
                      s += dFa(p, q2) * inner;
                    }
                  c.K(2 * a + i, 2 * b + k) += s * kp.weight;
                }
            }
        }
      } catch (...) {
        std::scoped_lock lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
    if (first_error) std::rethrow_exception(first_error);

    for (int e = 0; e < mesh.n_elements(); ++e) {
      const Element& el = mesh.elements[e];
      std::vector<int> dofs;
      for (int a = 0; a < el.nn; ++a) {
        dofs.push_back(2 * el.nodes[a]);
        dofs.push_back(2 * el.nodes[a] + 1);
      }
      assemK.add_block(dofs, contrib[e].K);
      for (size_t a = 0; a < dofs.size(); ++a) f_int[dofs[a]] += contrib[e].f[a];
      result.theta[e] = contrib[e].theta;
      result.J[e] = contrib[e].J;
    }

    Eigen::VectorXd g = f_int - f_ext;
    for (auto& [dof, v] : prob.fixed_dofs) g[dof] = 0.0;
    const double res = g.norm();
    result.residual_history.push_back(res);
    if (res0 < 0.0) res0 = res;
    if (res <= std::max(1e-10, 1e-8 * res0)) {
      result.iterations = iter;
      return result;
    }
    if (iter == max_iters)
      throw NewtonDivergence("Newton did not converge in " + std::to_string(max_iters) +
                             " iterations (residual " + std::to_string(res) + ")");

    LinearSystem sys{assemK.build(), -g, {}};
    for (auto& [dof, v] : prob.fixed_dofs) sys.dirichlet[dof] = 0.0;
    try {
      result.u += solve(std::move(sys));
    } catch (const SolverError& e) {
      // a breaking-down stiffness matrix is a divergence symptom, not a bug
      throw NewtonDivergence(std::string("linear solve failed in Newton iteration: ") + e.what());
    }
  }
  return result;  // unreachable
}

}  // namespace restenosim
