#pragma once

// Staggered driver: transport on the current configuration, SMC density to
// the growth/mechanics solve, configuration update, and the (J-/J) pushback
// of transport fields through Gauss points back to the nodes.

#include <functional>
#include <vector>

#include "restenosim/mechanics.hpp"
#include "restenosim/transport.hpp"

namespace restenosim {

struct CoupledState {
  FieldState fields;
  Eigen::VectorXd displacement;               // 2 dofs per node
  Coords current_coords;
  std::vector<std::vector<GrowthState>> gp;   // per element x quadrature point
  int step = 0;
  double time = 0.0;
};

// Element-local extrapolation of Gauss-point values to corners followed by
// volume-weighted nodal averaging. Exact for per-element constants and, on
// single elements, for linear fields.
inline Eigen::VectorXd gp_to_node_extrapolate(const Mesh& mesh,
                                              const std::vector<std::vector<double>>& gp_values,
                                              const Coords* coords = nullptr) {
  const int nn = mesh.n_nodes();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(nn), den = Eigen::VectorXd::Zero(nn);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Element& el = mesh.elements[e];
    const QuadratureRule quad = quadrature(el.nn);
    const int nq = static_cast<int>(quad.points.size());
    double volume = 0.0;
    for (int q = 0; q < nq; ++q)
      volume += shape_eval(mesh, e, quad.points[q], quad.weights[q], coords).detJ_times_w;

    Eigen::VectorXd corner(el.nn);
    if (nq == el.nn) {
      // Solve N(xi_g) c = v_g for the corner values.
      Eigen::MatrixXd N(nq, el.nn);
      Eigen::VectorXd v(nq);
      for (int q = 0; q < nq; ++q) {
        std::array<double, 4> Nq;
        std::array<Eigen::Vector2d, 4> dN;
        reference_shapes(el.nn, quad.points[q], Nq, dN);
        for (int a = 0; a < el.nn; ++a) N(q, a) = Nq[a];
        v[q] = gp_values[e][q];
      }
      corner = N.fullPivLu().solve(v);
    } else {
      double mean = 0.0;
      for (int q = 0; q < nq; ++q) mean += gp_values[e][q];
      corner.setConstant(mean / nq);
    }
    for (int a = 0; a < el.nn; ++a) {
      num[el.nodes[a]] += volume * corner[a];
      den[el.nodes[a]] += volume;
    }
  }
  return num.cwiseQuotient(den);
}

class CoupledDriver {
 public:
  CoupledDriver(const Mesh& mesh, const TransportParams& tp, const MechanicsProblem& mp,
                FctOptions fct = {}, bool coupled = true, int growth_dim_override = 0)
      : mesh_(mesh), transport_(mesh, tp, fct), mechanics_(mp), coupled_(coupled) {
    if (growth_dim_override > 0) mechanics_.growth_dim = growth_dim_override;
  }

  CoupledState initial_state(FieldState fields) const {
    CoupledState s;
    s.fields = std::move(fields);
    s.displacement = Eigen::VectorXd::Zero(2 * mesh_.n_nodes());
    s.current_coords = mesh_.nodes;
    s.gp.resize(mesh_.n_elements());
    for (int e = 0; e < mesh_.n_elements(); ++e)
      s.gp[e].resize(quadrature(mesh_.elements[e].nn).points.size());
    return s;
  }

  const TransportSolver& transport() const { return transport_; }
  const MechanicsProblem& mechanics() const { return mechanics_; }

  // One staggered step; throws StepReject / NewtonDivergence on failure,
  // leaving the input state untouched.
  CoupledState staggered_step(const CoupledState& state, double dt) const {
    CoupledState next = state;

    // (1) transport on the current configuration
    next.fields = transport_.advance(state.fields, dt, &state.current_coords);

    if (coupled_) {
      // (2) SMC density at Gauss points; (3)+(4) incremental growth stretch
      // resolved self-consistently inside the Newton solve
      std::vector<std::vector<GrowthInput>> growth(mesh_.n_elements());
      for (int e = 0; e < mesh_.n_elements(); ++e) {
        const Element& el = mesh_.elements[e];
        const QuadratureRule quad = quadrature(el.nn);
        for (size_t q = 0; q < quad.points.size(); ++q) {
          std::array<double, 4> N;
          std::array<Eigen::Vector2d, 4> dN;
          reference_shapes(el.nn, quad.points[q], N, dN);
          double rho = 0.0;
          for (int a = 0; a < el.nn; ++a) rho += N[a] * next.fields.rho_S[el.nodes[a]];
          growth[e].push_back({state.gp[e][q].theta_prev, state.gp[e][q].J_prev,
                               rho / transport_.params().rho_S_h});
        }
      }
      const NewtonResult nr = newton_solve(mechanics_, growth, state.displacement);

      // (5) pushback phi* = (J-/J) phi at Gauss points, extrapolated to nodes
      auto pushback = [&](const Eigen::VectorXd& nodal) {
        std::vector<std::vector<double>> gpv(mesh_.n_elements());
        for (int e = 0; e < mesh_.n_elements(); ++e) {
          const Element& el = mesh_.elements[e];
          const QuadratureRule quad = quadrature(el.nn);
          for (size_t q = 0; q < quad.points.size(); ++q) {
            std::array<double, 4> N;
            std::array<Eigen::Vector2d, 4> dN;
            reference_shapes(el.nn, quad.points[q], N, dN);
            double v = 0.0;
            for (int a = 0; a < el.nn; ++a) v += N[a] * nodal[el.nodes[a]];
            gpv[e].push_back(v * state.gp[e][q].J_prev / nr.J[e][q]);
          }
        }
        return gp_to_node_extrapolate(mesh_, gpv);
      };
      next.fields.c_P = pushback(next.fields.c_P);
      next.fields.rho_E = pushback(next.fields.rho_E);
      next.fields.rho_S = pushback(next.fields.rho_S);
      for (int i = 0; i < next.fields.c_P.size(); ++i) {
        if (next.fields.c_P[i] < 0) next.fields.c_P[i] = 0;
        if (next.fields.rho_S[i] < 0) next.fields.rho_S[i] = 0;
      }

      // (6) refresh the current configuration; (7) commit growth history
      next.displacement = nr.u;
      for (int i = 0; i < mesh_.n_nodes(); ++i)
        next.current_coords[i] = mesh_.nodes[i] + Eigen::Vector2d(nr.u[2 * i], nr.u[2 * i + 1]);
      for (int e = 0; e < mesh_.n_elements(); ++e)
        for (size_t q = 0; q < next.gp[e].size(); ++q) {
          next.gp[e][q].theta = nr.theta[e][q];
          next.gp[e][q].theta_prev = nr.theta[e][q];
          next.gp[e][q].J_prev = nr.J[e][q];
        }
    }

    next.step = state.step + 1;
    next.time = state.time + dt;
    next.fields.time = next.time;
    return next;
  }

  // Advances to t_end, calling on_snapshot at t = 0 and at every multiple of
  // output_every. Newton failures retry with halved dt down to dt_min.
  CoupledState run(FieldState initial, double dt, double t_end, double dt_min,
                   double output_every,
                   const std::function<void(const CoupledState&)>& on_snapshot) const {
    CoupledState state = initial_state(std::move(initial));
    if (on_snapshot) on_snapshot(state);
    if (t_end <= 0.0) return state;
    if (output_every <= 0.0) output_every = t_end;

    double next_output = output_every;
    const double eps = 1e-12 * std::max(t_end, 1.0);
    while (state.time < t_end - eps) {
      double step_dt = std::min(dt, t_end - state.time);
      step_dt = std::min(step_dt, next_output - state.time + eps);
      for (;;) {
        try {
          state = staggered_step(state, step_dt);
          break;
        } catch (const StepReject&) {
          step_dt *= 0.5;
          if (step_dt < dt_min) throw;
        }
      }
      if (state.time >= next_output - eps) {
        if (on_snapshot) on_snapshot(state);
        next_output += output_every;
      }
    }
    return state;
  }

 private:
  const Mesh& mesh_;
  TransportSolver transport_;
  MechanicsProblem mechanics_;
  bool coupled_;
};

}  // namespace restenosim
