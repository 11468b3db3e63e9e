#pragma once

// Semi-implicit backward-Euler transport of PDGF, ECM and SMC on the
// current configuration. Coefficients are frozen at step n; the PDGF and
// SMC updates are stabilized with flux-corrected transport.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "restenosim/fct.hpp"
#include "restenosim/mesh.hpp"
#include "restenosim/numerics.hpp"
#include "restenosim/parallel.hpp"

namespace restenosim {

struct TransportParams {
  double D_P = 0.01;         // mm^2/day
  double alpha = 1.0e-13;    // mm^3/cell/day
  double beta = 5.0e-8;      // mol/cell/day
  double gamma = 5.0e17;     // mm^3/mol/day
  double chi = 1.0e19;       // mm^5/cell/day
  double kappa = 1.0e-2;     // mm^3/mol/cell/day
  double rho_E_th = 7.7e-9;  // mol/mm^3 (1.1 * rho_E_0)
  double rho_S_h = 3.16e6;   // cells/mm^3

  void validate() const {
    for (double v : {D_P, alpha, beta, gamma, chi, kappa, rho_E_th, rho_S_h})
      if (!(v > 0.0)) throw std::invalid_argument("transport parameters must be strictly positive");
  }
};

struct FieldState {
  Eigen::VectorXd c_P;    // mol/mm^3
  Eigen::VectorXd rho_E;  // mol/mm^3
  Eigen::VectorXd rho_S;  // cells/mm^3
  double time = 0.0;      // day
};

inline FieldState healthy_state(int n_nodes, const TransportParams& p, double rho_E_0) {
  FieldState s;
  s.c_P = Eigen::VectorXd::Zero(n_nodes);
  s.rho_E = Eigen::VectorXd::Constant(n_nodes, rho_E_0);
  s.rho_S = Eigen::VectorXd::Constant(n_nodes, p.rho_S_h);
  return s;
}

struct ElementTransportMatrices {
  Eigen::MatrixXd M, L, P, T, K, Q;
  Eigen::VectorXd R;
};

// The seven appendix blocks for one element, with state-n coefficients
// evaluated at the quadrature points of the current configuration.
inline ElementTransportMatrices element_transport_matrices(const Mesh& mesh, int element,
                                                           const FieldState& state,
                                                           const TransportParams& p,
                                                           const Coords* coords = nullptr) {
  const Element& el = mesh.elements[element];
  const int n = el.nn;
  ElementTransportMatrices m;
  m.M = Eigen::MatrixXd::Zero(n, n);
  m.L = m.M;
  m.P = m.M;
  m.T = m.M;
  m.K = m.M;
  m.Q = m.M;
  m.R = Eigen::VectorXd::Zero(n);

  const QuadratureRule quad = quadrature(el.nn);
  for (size_t q = 0; q < quad.points.size(); ++q) {
    const ShapeEval s = shape_eval(mesh, element, quad.points[q], quad.weights[q], coords);
    const double w = s.detJ_times_w;

    double cP = 0, rE = 0, rS = 0;
    Eigen::Vector2d grad_rE = Eigen::Vector2d::Zero();
    for (int a = 0; a < n; ++a) {
      const int g = el.nodes[a];
      cP += s.N[a] * state.c_P[g];
      rE += s.N[a] * state.rho_E[g];
      rS += s.N[a] * state.rho_S[g];
      grad_rE += s.dN_dx[a] * state.rho_E[g];
    }
    const double logistic = 1.0 - rE / p.rho_E_th;

    for (int a = 0; a < n; ++a) {
      const double chem_a = p.chi * cP * logistic * s.dN_dx[a].dot(grad_rE);
      for (int b = 0; b < n; ++b) {
        const double NN = s.N[a] * s.N[b] * w;
        m.M(a, b) += NN;
        m.L(a, b) += p.D_P * s.dN_dx[a].dot(s.dN_dx[b]) * w;
        m.P(a, b) += p.alpha * rS * NN;
        m.T(a, b) += (p.beta * rS / p.rho_E_th + p.gamma * cP) * NN;
        m.K(a, b) += chem_a * s.N[b] * w;
        m.Q(a, b) += p.kappa * cP * logistic * NN;
      }
      m.R[a] += p.beta * rS * s.N[a] * w;
    }
  }
  return m;
}

namespace detail {

enum class Block { M, L, P, T, K, Q };

struct GlobalTransport {
  SpMat M, L, P, T, K, Q;
  Eigen::VectorXd R;
};

inline GlobalTransport assemble_transport(const Mesh& mesh, const FieldState& state,
                                          const TransportParams& p,
                                          const Coords* coords = nullptr) {
  const int ne = mesh.n_elements();
  std::vector<ElementTransportMatrices> local(ne);
  parallel_for(ne, [&](int e) { local[e] = element_transport_matrices(mesh, e, state, p, coords); });

  const int nd = mesh.n_nodes();
  SparseAssembler aM(nd), aL(nd), aP(nd), aT(nd), aK(nd), aQ(nd);
  Eigen::VectorXd R = Eigen::VectorXd::Zero(nd);
  for (int e = 0; e < ne; ++e) {
    const Element& el = mesh.elements[e];
    std::vector<int> dofs(el.nodes.begin(), el.nodes.begin() + el.nn);
    aM.add_block(dofs, local[e].M);
    aL.add_block(dofs, local[e].L);
    aP.add_block(dofs, local[e].P);
    aT.add_block(dofs, local[e].T);
    aK.add_block(dofs, local[e].K);
    aQ.add_block(dofs, local[e].Q);
    for (int a = 0; a < el.nn; ++a) R[dofs[a]] += local[e].R[a];
  }
  return {aM.build(), aL.build(), aP.build(), aT.build(), aK.build(), aQ.build(), R};
}

// One semi-implicit update [M + dt*spatial + sign*dt*reaction] u = M u_n + dt*source,
// optionally FCT-corrected. `scale` sets the clipping tolerance for round-off
// negatives; larger negatives indicate a limiter bug and abort.
inline Eigen::VectorXd semi_implicit_update(const SpMat& M, const SpMat* spatial,
                                            const SpMat& reaction, double reaction_sign,
                                            const Eigen::VectorXd* source,
                                            const Eigen::VectorXd& u_n, double dt,
                                            const FctOptions& fct, double scale,
                                            bool clip_negative) {
  SpMat A_high = M + reaction_sign * dt * reaction;
  if (spatial) A_high += dt * *spatial;
  Eigen::VectorXd b_high = M * u_n;
  if (source) b_high += dt * *source;
  Eigen::VectorXd u_high = solve_direct(A_high, b_high);

  Eigen::VectorXd u = u_high;
  if (fct.enabled && spatial) {
    const SpMat D = artificial_diffusion(*spatial);
    const Eigen::VectorXd mL = lump_rows(M);
    const Eigen::VectorXd rL = lump_rows(reaction);

    SpMat A_low = dt * (*spatial + D);
    {
      std::vector<Eigen::Triplet<double>> trip;
      const int n = static_cast<int>(mL.size());
      for (int i = 0; i < n; ++i) trip.emplace_back(i, i, mL[i] + reaction_sign * dt * rL[i]);
      SpMat diag(n, n);
      diag.setFromTriplets(trip.begin(), trip.end());
      A_low += diag;
    }
    Eigen::VectorXd b_low = mL.cwiseProduct(u_n);
    if (source) b_low += dt * *source;
    const Eigen::VectorXd u_low = solve_direct(A_low, b_low);

    // Raw antidiffusive fluxes: consistent-mass correction plus removed
    // diffusion, evaluated at the high-order solution.
    FluxGraph graph;
    graph.lumped_mass = mL;
    graph.low_order = u_low;
    const Eigen::VectorXd du = u_high - u_n;
    const SpMat pattern = M + D;
    for (int k = 0; k < pattern.outerSize(); ++k)
      for (SpMat::InnerIterator it(pattern, k); it; ++it) {
        const int i = it.row(), j = static_cast<int>(it.col());
        if (j <= i) continue;
        const double mij = M.coeff(i, j);
        const double dij = -D.coeff(i, j);  // = max(0, a_ij, a_ji) >= 0
        const double f = (mij * (du[i] - du[j]) + dt * dij * (u_high[i] - u_high[j])) / dt;
        if (f != 0.0) graph.edges.push_back({i, j, f});
      }
    u = zalesak_limit(A_high, graph, dt, fct.prelimit);
  }

  if (clip_negative) {
    const double tol = 1e-12 * scale;
    for (int i = 0; i < u.size(); ++i) {
      if (u[i] < -tol)
        throw std::logic_error("negative value beyond tolerance after transport update: " +
                               std::to_string(u[i]) + " at node " + std::to_string(i));
      if (u[i] < 0.0) u[i] = 0.0;
    }
  }
  return u;
}

}  // namespace detail

class TransportSolver {
 public:
  TransportSolver(const Mesh& mesh, TransportParams params, FctOptions fct = {})
      : mesh_(mesh), params_(params), fct_(fct) {
    params_.validate();
  }

  const TransportParams& params() const { return params_; }

  // [M + dt L + dt P] c^{n+1} = M c^n, FCT-corrected.
  Eigen::VectorXd step_pdgf(const FieldState& state, double dt,
                            const Coords* coords = nullptr) const {
    auto g = detail::assemble_transport(mesh_, state, params_, coords);
    const double scale = std::max(state.c_P.cwiseAbs().maxCoeff(), 1e-300);
    return detail::semi_implicit_update(g.M, &g.L, g.P, +1.0, nullptr, state.c_P, dt, fct_, scale,
                                        true);
  }

  // [M + dt T] rho_E^{n+1} = M rho_E^n + dt R; non-diffusive, no FCT.
  Eigen::VectorXd step_ecm(const FieldState& state, double dt,
                           const Coords* coords = nullptr) const {
    auto g = detail::assemble_transport(mesh_, state, params_, coords);
    return detail::semi_implicit_update(g.M, nullptr, g.T, +1.0, &g.R, state.rho_E, dt, fct_,
                                        params_.rho_E_th, false);
  }

  // [M + dt K - dt Q] rho_S^{n+1} = M rho_S^n, FCT-corrected.
  Eigen::VectorXd step_smc(const FieldState& state, double dt,
                           const Coords* coords = nullptr) const {
    auto g = detail::assemble_transport(mesh_, state, params_, coords);
    const double scale = std::max(state.rho_S.cwiseAbs().maxCoeff(), params_.rho_S_h);
    return detail::semi_implicit_update(g.M, &g.K, g.Q, -1.0, nullptr, state.rho_S, dt, fct_,
                                        scale, true);
  }

  // All three updates read the same state-n snapshot.
  FieldState advance(const FieldState& state, double dt, const Coords* coords = nullptr) const {
    FieldState next;
    next.c_P = step_pdgf(state, dt, coords);
    next.rho_E = step_ecm(state, dt, coords);
    next.rho_S = step_smc(state, dt, coords);
    next.time = state.time + dt;
    return next;
  }

  // Total amount of a nodal field on the given configuration.
  double integrate(const Eigen::VectorXd& nodal, const Coords* coords = nullptr) const {
    double total = 0.0;
    for (int e = 0; e < mesh_.n_elements(); ++e) {
      const Element& el = mesh_.elements[e];
      const QuadratureRule quad = quadrature(el.nn);
      for (size_t q = 0; q < quad.points.size(); ++q) {
        const ShapeEval s = shape_eval(mesh_, e, quad.points[q], quad.weights[q], coords);
        double v = 0;
        for (int a = 0; a < el.nn; ++a) v += s.N[a] * nodal[el.nodes[a]];
        total += v * s.detJ_times_w;
      }
    }
    return total;
  }

 private:
  const Mesh& mesh_;
  TransportParams params_;
  FctOptions fct_;
};

}  // namespace restenosim
