#pragma once

// Algebraic flux-corrected transport: artificial diffusion for a
// positivity-preserving low-order update plus Zalesak-limited
// antidiffusive fluxes reconstructing the high-order solution.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "restenosim/numerics.hpp"

namespace restenosim {

struct FctOptions {
  bool enabled = true;
  bool prelimit = true;
};

// D with d_ij = -max(0, a_ij, a_ji) off-diagonal and zero row sums, so that
// (A + D) has no positive off-diagonal entries.
inline SpMat artificial_diffusion(const SpMat& A) {
  if (A.rows() != A.cols()) throw SolverError("artificial_diffusion: matrix not square");
  const int n = static_cast<int>(A.rows());
  SpMat At = SpMat(A.transpose());
  std::vector<Eigen::Triplet<double>> trip;
  // Walk the symmetrized pattern column by column.
  std::vector<double> diag(n, 0.0);
  for (int k = 0; k < n; ++k) {
    SpMat::InnerIterator ia(A, k), it(At, k);
    while (ia || it) {
      int row;
      double aij = 0.0, aji = 0.0;
      if (ia && (!it || ia.row() <= it.row())) row = ia.row();
      else row = it.row();
      if (ia && ia.row() == row) { aij = ia.value(); ++ia; }
      if (it && it.row() == row) { aji = it.value(); ++it; }
      if (row == k) continue;
      const double d = std::max({0.0, aij, aji});
      if (d > 0.0) {
        trip.emplace_back(row, k, -d);
        diag[row] += d;
      }
    }
  }
  for (int i = 0; i < n; ++i)
    if (diag[i] != 0.0) trip.emplace_back(i, i, diag[i]);
  SpMat D(n, n);
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

struct FluxEdge {
  int i, j;
  double flux;  // raw antidiffusive flux rate f_ij = -f_ji
};

struct FluxGraph {
  std::vector<FluxEdge> edges;     // stored once per pair with i < j
  Eigen::VectorXd lumped_mass;
  Eigen::VectorXd low_order;
};

struct LimiterBounds {
  Eigen::VectorXd u_max, u_min;   // stencil extrema of the low-order solution
  Eigen::VectorXd Qp, Qm;         // admissible increments
  Eigen::VectorXd Rp, Rm;         // limiter coefficients in [0, 1]
};

// Stencil bounds from matrix-graph neighbors (incl. self) of the low-order field.
inline void stencil_bounds(const SpMat& pattern, const Eigen::VectorXd& u, Eigen::VectorXd& umax,
                           Eigen::VectorXd& umin) {
  umax = u;
  umin = u;
  for (int k = 0; k < pattern.outerSize(); ++k)
    for (SpMat::InnerIterator it(pattern, k); it; ++it) {
      const int i = it.row(), j = static_cast<int>(it.col());
      umax[i] = std::max(umax[i], u[j]);
      umin[i] = std::min(umin[i], u[j]);
    }
}

// Classical Zalesak limiter. Fluxes are rates; the corrected solution is
// u_i = low_i + (dt / m_i) * sum_j alpha_ij f_ij and stays within the
// stencil bounds of the low-order solution.
inline Eigen::VectorXd zalesak_limit(const FluxGraph& graph, const LimiterBounds& bounds,
                                     double dt, bool prelimit = true) {
  const int n = static_cast<int>(graph.low_order.size());
  const Eigen::VectorXd& u = graph.low_order;

  std::vector<double> flux(graph.edges.size());
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    double f = graph.edges[e].flux;
    // Prelimiting: cancel antidiffusive fluxes that would steepen the
    // low-order profile further.
    if (prelimit && f * (u[graph.edges[e].j] - u[graph.edges[e].i]) > 0.0) f = 0.0;
    flux[e] = f;
  }

  Eigen::VectorXd Pp = Eigen::VectorXd::Zero(n), Pm = Eigen::VectorXd::Zero(n);
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& ed = graph.edges[e];
    const double f = flux[e];
    if (f > 0) {
      Pp[ed.i] += f;
      Pm[ed.j] -= f;
    } else if (f < 0) {
      Pm[ed.i] += f;
      Pp[ed.j] -= f;
    }
  }

  Eigen::VectorXd Rp(n), Rm(n);
  for (int i = 0; i < n; ++i) {
    const double Qp = graph.lumped_mass[i] * (bounds.u_max[i] - u[i]) / dt;
    const double Qm = graph.lumped_mass[i] * (bounds.u_min[i] - u[i]) / dt;
    Rp[i] = Pp[i] > 0 ? std::min(1.0, Qp / Pp[i]) : 1.0;
    Rm[i] = Pm[i] < 0 ? std::min(1.0, Qm / Pm[i]) : 1.0;
  }

  Eigen::VectorXd out = u;
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& ed = graph.edges[e];
    const double f = flux[e];
    const double alpha = f > 0 ? std::min(Rp[ed.i], Rm[ed.j]) : std::min(Rm[ed.i], Rp[ed.j]);
    out[ed.i] += dt / graph.lumped_mass[ed.i] * alpha * f;
    out[ed.j] -= dt / graph.lumped_mass[ed.j] * alpha * f;
  }

  for (int i = 0; i < n; ++i) {
    const double slack = 1e-10 * (std::abs(bounds.u_max[i]) + std::abs(bounds.u_min[i]) + 1e-300);
    if (out[i] > bounds.u_max[i] + slack || out[i] < bounds.u_min[i] - slack)
      throw std::logic_error("zalesak_limit: bound violation at node " + std::to_string(i));
  }
  return out;
}

inline Eigen::VectorXd zalesak_limit(const SpMat& stencil_pattern, const FluxGraph& graph,
                                     double dt, bool prelimit = true) {
  LimiterBounds b;
  stencil_bounds(stencil_pattern, graph.low_order, b.u_max, b.u_min);
  return zalesak_limit(graph, b, dt, prelimit);
}

}  // namespace restenosim
