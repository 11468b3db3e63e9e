#include <doctest.h>

#include <cmath>
#include <vector>

#include "restenosim/transport.hpp"

using namespace restenosim;

namespace {

Mesh unit_square_quad() {
  Mesh m;
  m.mode = Mode::plane;
  m.nodes = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  Element el;
  el.nn = 4;
  el.nodes = {0, 1, 2, 3};
  m.elements.push_back(el);
  return m;
}

FieldState uniform_state(int n, double cP, double rE, double rS) {
  FieldState s;
  s.c_P = Eigen::VectorXd::Constant(n, cP);
  s.rho_E = Eigen::VectorXd::Constant(n, rE);
  s.rho_S = Eigen::VectorXd::Constant(n, rS);
  return s;
}

}  // namespace

TEST_CASE("bilinear element mass matrix equals (1/36)[[4,2,1,2],...]") {
  Mesh m = unit_square_quad();
  TransportParams p;
  FieldState s = uniform_state(4, 0.0, p.rho_E_th, p.rho_S_h);
  auto em = element_transport_matrices(m, 0, s, p);
  Eigen::MatrixXd ref(4, 4);
  ref << 4, 2, 1, 2, 2, 4, 2, 1, 1, 2, 4, 2, 2, 1, 2, 4;
  ref /= 36.0;
  CHECK((em.M - ref).lpNorm<Eigen::Infinity>() < 1e-14);
  // proliferation block is alpha * rho_S * M for uniform rho_S
  CHECK((em.P - p.alpha * p.rho_S_h * ref).lpNorm<Eigen::Infinity>() < 1e-14 * p.alpha * p.rho_S_h);
}

TEST_CASE("linear triangle mass matrix equals area/12 [[2,1,1],...]") {
  Mesh m;
  m.mode = Mode::plane;
  m.nodes = {{0, 0}, {1, 0}, {0, 1}};
  Element el;
  el.nn = 3;
  el.nodes = {0, 1, 2};
  m.elements.push_back(el);
  TransportParams p;
  FieldState s = uniform_state(3, 0.0, p.rho_E_th, p.rho_S_h);
  auto em = element_transport_matrices(m, 0, s, p);
  Eigen::MatrixXd ref(3, 3);
  ref << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  ref *= 0.5 / 12.0;
  CHECK((em.M - ref).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("chemotaxis block vanishes for uniform ECM") {
  Mesh m = unit_square_quad();
  TransportParams p;
  FieldState s = uniform_state(4, 1e-11, 5e-9, p.rho_S_h);
  auto em = element_transport_matrices(m, 0, s, p);
  CHECK(em.K.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("without PDGF the ECM decay block reduces to its synthesis part") {
  Mesh m = unit_square_quad();
  TransportParams p;
  FieldState s = uniform_state(4, 0.0, 5e-9, p.rho_S_h);
  auto em = element_transport_matrices(m, 0, s, p);
  CHECK(em.Q.lpNorm<Eigen::Infinity>() == 0.0);
  const double coef = p.beta * p.rho_S_h / p.rho_E_th;
  CHECK((em.T - coef * em.M).lpNorm<Eigen::Infinity>() < 1e-14 * coef);
}

TEST_CASE("uniform-field closed forms for all three updates") {
  Mesh mesh = structured_rectangle(2.0, 1.0, 4, 2, Mode::plane);
  const int n = mesh.n_nodes();
  const double dt = 0.01;

  SUBCASE("PDGF decays by 1/(1 + dt alpha rho_S); here dt alpha rho_S = 1") {
    TransportParams p;
    p.alpha = 1.0 / (dt * p.rho_S_h);
    TransportSolver solver(mesh, p);
    FieldState s = uniform_state(n, 3e-11, p.rho_E_th, p.rho_S_h);
    Eigen::VectorXd c1 = solver.step_pdgf(s, dt);
    for (int i = 0; i < n; ++i) CHECK(c1[i] == doctest::Approx(1.5e-11).epsilon(1e-12));
  }

  SUBCASE("ECM relaxation follows (r + dt b rS)/(1 + dt (b rS / r_th + g c))") {
    TransportParams p;
    TransportSolver solver(mesh, p);
    const double cP = 4e-12, rE0 = 5e-9;
    FieldState s = uniform_state(n, cP, rE0, p.rho_S_h);
    Eigen::VectorXd r1 = solver.step_ecm(s, dt);
    const double expected = (rE0 + dt * p.beta * p.rho_S_h) /
                            (1.0 + dt * (p.beta * p.rho_S_h / p.rho_E_th + p.gamma * cP));
    for (int i = 0; i < n; ++i) CHECK(r1[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("ECM with negligible synthesis decays by 1/(1 + dt gamma c)") {
    TransportParams p;
    p.beta = 1e-40;
    TransportSolver solver(mesh, p);
    const double cP = 4e-12, rE0 = 5e-9;
    FieldState s = uniform_state(n, cP, rE0, p.rho_S_h);
    Eigen::VectorXd r1 = solver.step_ecm(s, dt);
    for (int i = 0; i < n; ++i)
      CHECK(r1[i] == doctest::Approx(rE0 / (1.0 + dt * p.gamma * cP)).epsilon(1e-12));
  }

  SUBCASE("SMC grows by 1/(1 - dt kappa c (1 - rE/r_th)); here that factor is 0.9") {
    TransportParams p;
    const double rE0 = 0.5 * p.rho_E_th;  // logistic factor = 1/2
    const double cP = 2e-11;              // physical scale keeps chi round-off harmless
    p.kappa = 0.1 / (dt * cP * 0.5);
    TransportSolver solver(mesh, p);
    FieldState s = uniform_state(n, cP, rE0, p.rho_S_h);
    Eigen::VectorXd r1 = solver.step_smc(s, dt);
    for (int i = 0; i < n; ++i)
      CHECK(r1[i] == doctest::Approx(p.rho_S_h / 0.9).epsilon(1e-12));
  }
}

TEST_CASE("pure diffusion conserves the PDGF amount") {
  Mesh mesh = structured_rectangle(6.0, 0.8, 24, 4, Mode::plane);
  TransportParams p;
  p.alpha = 1e-300;  // effectively no consumption
  TransportSolver solver(mesh, p);
  const int n = mesh.n_nodes();
  FieldState s = uniform_state(n, 0.0, p.rho_E_th, p.rho_S_h);
  for (int i = 0; i < n; ++i) {
    const double x = mesh.nodes[i][0];
    s.c_P[i] = 1e-11 * std::exp(-(x - 3.0) * (x - 3.0) / (2 * 0.2 * 0.2));
  }
  const double before = solver.integrate(s.c_P);
  FieldState next = s;
  for (int k = 0; k < 10; ++k) {
    next.c_P = solver.step_pdgf(next, 0.005);
  }
  CHECK(solver.integrate(next.c_P) == doctest::Approx(before).epsilon(1e-10));
  for (int i = 0; i < n; ++i) CHECK(next.c_P[i] >= 0.0);
}

TEST_CASE("PDGF amount is non-increasing with consumption active") {
  Mesh mesh = structured_rectangle(6.0, 0.8, 24, 4, Mode::plane);
  TransportParams p;
  TransportSolver solver(mesh, p);
  const int n = mesh.n_nodes();
  FieldState s = uniform_state(n, 0.0, 7e-9, p.rho_S_h);
  for (int i = 0; i < n; ++i) {
    const double x = mesh.nodes[i][0];
    s.c_P[i] = 2e-11 * std::exp(-(x - 3.0) * (x - 3.0) / (2 * 0.2 * 0.2));
  }
  double prev = solver.integrate(s.c_P);
  for (int k = 0; k < 5; ++k) {
    s = solver.advance(s, 0.01);
    const double now = solver.integrate(s.c_P);
    CHECK(now <= prev * (1.0 + 1e-12));
    prev = now;
  }
}

TEST_CASE("ECM recovers monotonically toward the threshold without PDGF") {
  Mesh mesh = structured_rectangle(2.0, 1.0, 4, 2, Mode::plane);
  TransportParams p;
  TransportSolver solver(mesh, p);
  const int n = mesh.n_nodes();
  FieldState s = uniform_state(n, 0.0, 4e-9, p.rho_S_h);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd next = solver.step_ecm(s, 0.1);
    for (int i = 0; i < n; ++i) {
      CHECK(next[i] >= s.rho_E[i]);
      CHECK(next[i] <= p.rho_E_th * (1.0 + 1e-12));
    }
    s.rho_E = next;
  }
  // long-time limit is the threshold density
  CHECK(s.rho_E[0] == doctest::Approx(p.rho_E_th).epsilon(1e-3));
}

TEST_CASE("healthy state is a fixed point of the SMC update") {
  Mesh mesh = structured_rectangle(2.0, 1.0, 4, 2, Mode::plane);
  TransportParams p;
  TransportSolver solver(mesh, p);
  FieldState s = healthy_state(mesh.n_nodes(), p, 7e-9);
  Eigen::VectorXd r1 = solver.step_smc(s, 0.01);
  for (int i = 0; i < mesh.n_nodes(); ++i)
    CHECK(r1[i] == doctest::Approx(p.rho_S_h).epsilon(1e-13));
}

TEST_CASE("SMC stays non-negative under sharp chemotaxis with FCT") {
  Mesh mesh = structured_rectangle(6.0, 0.8, 30, 4, Mode::plane);
  TransportParams p;
  TransportSolver solver(mesh, p);
  const int n = mesh.n_nodes();
  FieldState s = uniform_state(n, 0.0, 7e-9, p.rho_S_h);
  for (int i = 0; i < n; ++i) {
    const double x = mesh.nodes[i][0];
    s.c_P[i] = 2e-11 * std::exp(-(x - 3.0) * (x - 3.0) / (2 * 0.2 * 0.2));
    // sharp ECM degradation well drives a steep chemotactic velocity
    s.rho_E[i] = (x > 2.5 && x < 3.5) ? 2e-9 : 7e-9;
  }
  for (int k = 0; k < 10; ++k) {
    s = solver.advance(s, 0.01);
    for (int i = 0; i < n; ++i) CHECK(s.rho_S[i] >= 0.0);
  }
}

TEST_CASE("advance reads one snapshot: manual three-step composition matches") {
  Mesh mesh = structured_rectangle(4.0, 0.8, 10, 2, Mode::plane);
  TransportParams p;
  TransportSolver solver(mesh, p);
  const int n = mesh.n_nodes();
  FieldState s = uniform_state(n, 0.0, 6e-9, p.rho_S_h);
  for (int i = 0; i < n; ++i)
    s.c_P[i] = 1e-11 * (1.0 + std::sin(mesh.nodes[i][0]));
  FieldState a = solver.advance(s, 0.01);
  Eigen::VectorXd c = solver.step_pdgf(s, 0.01);
  Eigen::VectorXd rE = solver.step_ecm(s, 0.01);
  Eigen::VectorXd rS = solver.step_smc(s, 0.01);
  CHECK((a.c_P - c).norm() == 0.0);
  CHECK((a.rho_E - rE).norm() == 0.0);
  CHECK((a.rho_S - rS).norm() == 0.0);
  CHECK(a.time == doctest::Approx(0.01));
}

TEST_CASE("invalid parameters are rejected") {
  Mesh mesh = structured_rectangle(1.0, 1.0, 1, 1, Mode::plane);
  TransportParams p;
  p.D_P = -1.0;
  CHECK_THROWS_AS(TransportSolver(mesh, p), std::invalid_argument);
}
