#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "restenosim/mechanics.hpp"

using namespace restenosim;

namespace {

Eigen::Matrix3d fd_pk1(const Eigen::Matrix3d& F, double theta, const StructureTensors& st,
                       const MaterialParams& mat) {
  const double h = 1e-6 * std::max(1.0, F.norm());
  Eigen::Matrix3d P;
  for (int i = 0; i < 3; ++i)
    for (int J = 0; J < 3; ++J) {
      Eigen::Matrix3d Fp = F, Fm = F;
      Fp(i, J) += h;
      Fm(i, J) -= h;
      P(i, J) = (free_energy(Fp, theta, st, mat) - free_energy(Fm, theta, st, mat)) / (2 * h);
    }
  return P;
}

Eigen::Matrix3d random_near_identity(std::mt19937& rng, double spread) {
  std::uniform_real_distribution<double> d(-spread, spread);
  Eigen::Matrix3d F;
  do {
    F = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) F(i, j) += d(rng);
  } while (F.determinant() < 0.4);
  return F;
}

}  // namespace

TEST_CASE("undeformed, ungrown state is energy- and stress-free") {
  MaterialParams mat;
  for (Mode mode : {Mode::plane, Mode::axisym}) {
    const StructureTensors st = StructureTensors::make(mat, mode);
    CHECK(free_energy(Eigen::Matrix3d::Identity(), 1.0, st, mat) == 0.0);
    CHECK(pk1_stress(Eigen::Matrix3d::Identity(), 1.0, st, mat).norm() < 1e-16);
  }
}

TEST_CASE("pure growth F = theta I is exactly stress-free") {
  MaterialParams mat;
  const StructureTensors st = StructureTensors::make(mat, Mode::axisym);
  for (double theta : {0.95, 1.0, 1.1}) {
    const Eigen::Matrix3d F = theta * Eigen::Matrix3d::Identity();
    CHECK(free_energy(F, theta, st, mat) < 1e-15);
    CHECK(pk1_stress(F, theta, st, mat).norm() < 1e-14);
  }
}

TEST_CASE("volumetric compression matches the isotropic closed form") {
  // Fibers see E = lambda^2 - 1 < 0 in compression and stay inactive, so
  // psi = mu/2 (3 lam^2 - 3) - 3 mu ln(lam) + Lam/4 (lam^6 - 1 - 6 ln(lam)).
  MaterialParams mat;
  const StructureTensors st = StructureTensors::make(mat, Mode::plane);
  const double lam = 0.9;
  const Eigen::Matrix3d F = lam * Eigen::Matrix3d::Identity();
  const double expected = 0.5 * mat.mu * (3 * lam * lam - 3) - 3.0 * mat.mu * std::log(lam) +
                          0.25 * mat.lambda *
                              (std::pow(lam, 6) - 1.0 - 6.0 * std::log(lam));
  CHECK(free_energy(F, 1.0, st, mat) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("axial fiber stretch adds the exponential family energy") {
  MaterialParams mat;
  mat.kappa_disp = 0.0;
  mat.theta_fiber_deg = 0.0;  // both families along the circumferential axis e3
  const StructureTensors st = StructureTensors::make(mat, Mode::plane);
  const double lam = 1.05;
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  F(2, 2) = lam;

  MaterialParams iso = mat;  // same ground matrix, fibers never activated below
  const double E = lam * lam - 1.0;
  const double fiber = mat.k1 / mat.k2 * (std::exp(mat.k2 * E * E) - 1.0);

  Eigen::Matrix3d Fc = F;
  Fc(2, 2) = 1.0 / lam;  // compression: tension-only switch disables fibers
  const double psi_compressed = free_energy(Fc, 1.0, st, iso);
  // compare against an independent evaluation of the isotropic part
  const double J2 = F.determinant() * F.determinant();
  const double psi_iso = 0.5 * mat.mu * ((F.transpose() * F).trace() - 3.0) -
                         0.5 * mat.mu * std::log(J2) +
                         0.25 * mat.lambda * (J2 - 1.0 - std::log(J2));
  CHECK(free_energy(F, 1.0, st, mat) == doctest::Approx(psi_iso + fiber).epsilon(1e-12));
  CHECK(psi_compressed < free_energy(F, 1.0, st, mat));  // no fiber energy in compression
}

TEST_CASE("tension-only switch: compressed fibers contribute nothing") {
  MaterialParams mat;
  const StructureTensors st = StructureTensors::make(mat, Mode::axisym);
  // uniform compression: every direction shortened, all E_i < 0
  const double lam = 0.93;
  const Eigen::Matrix3d F = lam * Eigen::Matrix3d::Identity();
  const double J2 = std::pow(lam, 6);
  const double psi_iso = 0.5 * mat.mu * (3 * lam * lam - 3.0) - 0.5 * mat.mu * std::log(J2) +
                         0.25 * mat.lambda * (J2 - 1.0 - std::log(J2));
  CHECK(free_energy(F, 1.0, st, mat) == doctest::Approx(psi_iso).epsilon(1e-13));
}

TEST_CASE("structure tensors: unit trace direction vectors and H properties") {
  MaterialParams mat;
  for (Mode mode : {Mode::plane, Mode::axisym}) {
    const StructureTensors st = StructureTensors::make(mat, mode);
    CHECK(st.a01.norm() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(st.a02.norm() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(st.H1.trace() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(st.H2.trace() == doctest::Approx(1.0).epsilon(1e-14));
    // circumferential component shared, in-plane components mirrored
    CHECK(st.a01[2] == st.a02[2]);
  }
}

TEST_CASE("stress is the exact gradient of the energy (finite differences)") {
  MaterialParams mat;
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> th(0.9, 1.2);
  for (Mode mode : {Mode::plane, Mode::axisym}) {
    const StructureTensors st = StructureTensors::make(mat, mode);
    for (int k = 0; k < 100; ++k) {
      const Eigen::Matrix3d F = random_near_identity(rng, 0.1);
      const double theta = th(rng);
      const Eigen::Matrix3d P = pk1_stress(F, theta, st, mat);
      const Eigen::Matrix3d Pfd = fd_pk1(F, theta, st, mat);
      const double scale = P.norm() + mat.mu;
      CHECK((P - Pfd).norm() / scale < 1e-6);
    }
  }
}

TEST_CASE("frozen-growth tangent matches finite differences of the stress") {
  MaterialParams mat;
  std::mt19937 rng(7);
  const StructureTensors st = StructureTensors::make(mat, Mode::axisym);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Matrix3d F = random_near_identity(rng, 0.1);
    const double theta = 1.05;
    const PointResponse pr = material_point(F, theta, nullptr, st, mat);
    const double h = 1e-6;
    double max_err = 0.0, scale = mat.mu;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l)
          for (int m = 0; m < 3; ++m) scale = std::max(scale, std::abs(pr.A(i, j, l, m)));
    for (int kk = 0; kk < 3; ++kk)
      for (int L = 0; L < 3; ++L) {
        Eigen::Matrix3d Fp = F, Fm = F;
        Fp(kk, L) += h;
        Fm(kk, L) -= h;
        const Eigen::Matrix3d dP =
            (pk1_stress(Fp, theta, st, mat) - pk1_stress(Fm, theta, st, mat)) / (2 * h);
        for (int i = 0; i < 3; ++i)
          for (int J = 0; J < 3; ++J)
            max_err = std::max(max_err, std::abs(dP(i, J) - pr.A(i, J, kk, L)));
      }
    CHECK(max_err / scale < 1e-5);
  }
}

TEST_CASE("growth-coupled tangent matches finite differences with theta(F)") {
  MaterialParams mat;
  std::mt19937 rng(19);
  const StructureTensors st = StructureTensors::make(mat, Mode::axisym);
  const double theta_prev = 1.02, J_prev = 1.05, rho_ratio = 1.1;
  const int d = 3;
  auto theta_of = [&](const Eigen::Matrix3d& F) {
    return growth_stretch_incremental(theta_prev, F.determinant(), J_prev, rho_ratio, 1.0, d);
  };
  for (int k = 0; k < 10; ++k) {
    const Eigen::Matrix3d F = random_near_identity(rng, 0.08);
    const double J = F.determinant();
    const double theta = theta_of(F);
    const double base = 1.0 + (J / J_prev) * (rho_ratio - 1.0);
    const double coef =
        theta_prev / d * std::pow(base, 1.0 / d - 1.0) * (rho_ratio - 1.0) / J_prev;
    const Eigen::Matrix3d dth_dF = coef * J * F.inverse().transpose();

    // analytic dtheta/dF against finite differences first
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Eigen::Matrix3d Fp = F, Fm = F;
        Fp(i, j) += h;
        Fm(i, j) -= h;
        CHECK(dth_dF(i, j) ==
              doctest::Approx((theta_of(Fp) - theta_of(Fm)) / (2 * h)).epsilon(1e-6));
      }

    const PointResponse pr = material_point(F, theta, &dth_dF, st, mat);
    double max_err = 0.0, scale = mat.mu;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l)
          for (int m = 0; m < 3; ++m) scale = std::max(scale, std::abs(pr.A(i, j, l, m)));
    for (int kk = 0; kk < 3; ++kk)
      for (int L = 0; L < 3; ++L) {
        Eigen::Matrix3d Fp = F, Fm = F;
        Fp(kk, L) += h;
        Fm(kk, L) -= h;
        const Eigen::Matrix3d dP = (pk1_stress(Fp, theta_of(Fp), st, mat) -
                                    pk1_stress(Fm, theta_of(Fm), st, mat)) /
                                   (2 * h);
        for (int i = 0; i < 3; ++i)
          for (int J2 = 0; J2 < 3; ++J2)
            max_err = std::max(max_err, std::abs(dP(i, J2) - pr.A(i, J2, kk, L)));
      }
    CHECK(max_err / scale < 1e-5);
  }
}

TEST_CASE("growth stretch algebra") {
  // identity history: total form (1 + J (r - 1))^(1/d)
  CHECK(growth_stretch_incremental(1.0, 1.0, 1.0, 1.331, 1.0, 3) ==
        doctest::Approx(1.1).epsilon(1e-14));
  CHECK(growth_stretch_incremental(1.0, 1.0, 1.0, 1.21, 1.0, 2) ==
        doctest::Approx(1.1).epsilon(1e-14));
  // healthy density leaves theta unchanged regardless of J
  CHECK(growth_stretch_incremental(1.07, 1.3, 0.9, 3.16e6, 3.16e6, 3) ==
        doctest::Approx(1.07).epsilon(1e-15));
  // chaining with updated history multiplies the increments
  const double t1 = growth_stretch_incremental(1.0, 1.0, 1.0, 1.2, 1.0, 3);
  const double t2 = growth_stretch_incremental(t1, 1.1, 1.0, 1.05, 1.0, 3);
  CHECK(t2 == doctest::Approx(t1 * std::pow(1.0 + 1.1 * 0.05, 1.0 / 3.0)).epsilon(1e-14));
  // full resorption is rejected as a step failure
  CHECK_THROWS_AS(growth_stretch_incremental(1.0, 1.0, 1.0, 0.0, 1.0, 3), StepReject);
}

TEST_CASE("Newton on an unloaded healthy strip converges immediately to zero") {
  Mesh mesh = structured_rectangle(2.0, 0.8, 4, 2, Mode::plane);
  MechanicsProblem prob(mesh, MaterialParams{});
  for (const BoundaryEdge& be : mesh.boundary) {
    if (be.tag != "left" && be.tag != "right") continue;
    const Element& el = mesh.elements[be.element];
    for (int a : edge_nodes(el, be.local_edge)) {
      prob.fixed_dofs[2 * el.nodes[a]] = 0.0;
      prob.fixed_dofs[2 * el.nodes[a] + 1] = 0.0;
    }
  }
  std::vector<std::vector<GrowthInput>> growth(mesh.n_elements(),
                                               std::vector<GrowthInput>(4));
  NewtonResult r = newton_solve(prob, growth, Eigen::VectorXd());
  CHECK(r.iterations == 0);
  CHECK(r.u.norm() == 0.0);
  for (auto& th : r.theta)
    for (double t : th) CHECK(t == 1.0);
}

TEST_CASE("axisymmetric hoop kinematics: u_r = 0.1 R gives F = diag(1.1, 1, 1.1)") {
  Mesh mesh = structured_rectangle(2.0, 0.8, 4, 2, Mode::axisym, 1.5);
  MechanicsProblem prob(mesh, MaterialParams{});
  for (int n = 0; n < mesh.n_nodes(); ++n) {
    prob.fixed_dofs[2 * n] = 0.1 * mesh.nodes[n][0];
    prob.fixed_dofs[2 * n + 1] = 0.0;
  }
  std::vector<std::vector<GrowthInput>> growth(mesh.n_elements(),
                                               std::vector<GrowthInput>(4));
  NewtonResult r = newton_solve(prob, growth, Eigen::VectorXd());
  for (auto& Je : r.J)
    for (double J : Je) CHECK(J == doctest::Approx(1.21).epsilon(1e-12));
}

TEST_CASE("patch test: uniform deformation is reproduced on a distorted mesh") {
  Mesh mesh = structured_rectangle(2.0, 1.0, 4, 3, Mode::plane);
  // distort the interior
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-0.06, 0.06);
  std::vector<bool> on_boundary(mesh.n_nodes(), false);
  for (const BoundaryEdge& be : mesh.boundary) {
    const Element& el = mesh.elements[be.element];
    for (int a : edge_nodes(el, be.local_edge)) on_boundary[el.nodes[a]] = true;
  }
  for (int n = 0; n < mesh.n_nodes(); ++n)
    if (!on_boundary[n]) {
      mesh.nodes[n][0] += d(rng);
      mesh.nodes[n][1] += d(rng);
    }

  Eigen::Matrix2d A;
  A << 0.01, 0.005, 0.002, -0.008;
  MechanicsProblem prob(mesh, MaterialParams{});
  for (int n = 0; n < mesh.n_nodes(); ++n)
    if (on_boundary[n]) {
      const Eigen::Vector2d ub = A * Eigen::Vector2d(mesh.nodes[n][0], mesh.nodes[n][1]);
      prob.fixed_dofs[2 * n] = ub[0];
      prob.fixed_dofs[2 * n + 1] = ub[1];
    }
  std::vector<std::vector<GrowthInput>> growth(mesh.n_elements(),
                                               std::vector<GrowthInput>(4));
  NewtonResult r = newton_solve(prob, growth, Eigen::VectorXd());
  for (int n = 0; n < mesh.n_nodes(); ++n) {
    const Eigen::Vector2d exact = A * Eigen::Vector2d(mesh.nodes[n][0], mesh.nodes[n][1]);
    CHECK(r.u[2 * n] == doctest::Approx(exact[0]).epsilon(1e-10));
    CHECK(r.u[2 * n + 1] == doctest::Approx(exact[1]).epsilon(1e-10));
  }
}

TEST_CASE("inner pressure load deflects the strip outward and converges") {
  Mesh mesh = structured_rectangle(4.0, 0.8, 8, 2, Mode::plane);
  MechanicsProblem prob(mesh, MaterialParams{});
  for (const BoundaryEdge& be : mesh.boundary) {
    if (be.tag != "left" && be.tag != "right") continue;
    const Element& el = mesh.elements[be.element];
    for (int a : edge_nodes(el, be.local_edge)) {
      prob.fixed_dofs[2 * el.nodes[a]] = 0.0;
      prob.fixed_dofs[2 * el.nodes[a] + 1] = 0.0;
    }
  }
  prob.tractions["inner"] = Eigen::Vector2d(0.0, 1e-3);  // push in +y
  std::vector<std::vector<GrowthInput>> growth(mesh.n_elements(),
                                               std::vector<GrowthInput>(4));
  NewtonResult r = newton_solve(prob, growth, Eigen::VectorXd());
  // midspan node on the inner face moves in +y
  double best = 0.0;
  for (int n = 0; n < mesh.n_nodes(); ++n)
    if (mesh.nodes[n][1] == 0.0) best = std::max(best, r.u[2 * n + 1]);
  CHECK(best > 1e-4);
  CHECK(r.residual_history.back() <= 1e-10);
}

TEST_CASE("Newton reports divergence instead of returning garbage") {
  Mesh mesh = structured_rectangle(2.0, 0.8, 2, 1, Mode::plane);
  MechanicsProblem prob(mesh, MaterialParams{});
  prob.tractions["inner"] = Eigen::Vector2d(0.0, 5.0);  // far beyond a sensible load
  std::vector<std::vector<GrowthInput>> growth(mesh.n_elements(),
                                               std::vector<GrowthInput>(4));
  CHECK_THROWS_AS(newton_solve(prob, growth, Eigen::VectorXd(), 3), StepReject);
}
