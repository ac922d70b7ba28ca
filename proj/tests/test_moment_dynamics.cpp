#include <doctest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"

using namespace qmem;
using oracle::cplx;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<double> uniform_grid(double t_end, int steps) {
  std::vector<double> g;
  for (int k = 0; k <= steps; ++k) g.push_back(t_end * k / steps);
  return g;
}

InitialMoments zero_mean(const SystemParams& sys) { return InitialMoments::from_mean(sys.sc, VectorXd::Zero(sys.n())); }

}  // namespace

TEST_CASE("initial moments and weights") {
  const auto sc = pauli_structure();

  SUBCASE("P and Pi from the mean") {
    const VectorXd mu = (VectorXd(3) << 0.1, -0.2, 0.3).finished();
    const auto init = InitialMoments::from_mean(sc, mu);
    CHECK(oracle::max_abs(MatrixXd(init.P - MatrixXd::Identity(3, 3))) == 0.0);
    const MatrixXcd pi = MatrixXcd::Identity(3, 3) + oracle::loops_dot(sc.beta().sections(), mu.cast<cplx>());
    CHECK(oracle::max_abs(MatrixXcd(init.Pi - pi)) <= 1e-15);
    CHECK(admissibility_margin(sc, mu) == doctest::Approx(1.0 - mu.norm()));
  }

  SUBCASE("means outside the Bloch ball are inadmissible") {
    CHECK_THROWS_AS(InitialMoments::from_mean(sc, VectorXd::Constant(3, 1.0)), DomainError);
    CHECK_NOTHROW(InitialMoments::from_mean(sc, VectorXd::Unit(3, 0)));
  }

  SUBCASE("weighting factorizations") {
    MatrixXd s(3, 3);
    s << 2, 1, 0, 1, 2, 0, 0, 0, 0;
    const auto w = WeightingSpec::from_sigma(s);
    CHECK(oracle::max_abs(MatrixXd(w.F.transpose() * w.F - s)) <= 1e-10);
    CHECK(w.nu() == 2);

    MatrixXd f(2, 3);
    f << 1, 0, 2, 0, 1, 0;
    const auto wf = WeightingSpec::from_factor(f);
    CHECK(oracle::max_abs(MatrixXd(wf.Sigma - f.transpose() * f)) <= 1e-15);

    CHECK_THROWS_AS(WeightingSpec::from_sigma(-s), InvalidInput);
    MatrixXd asym = s;
    asym(0, 2) = 1.0;
    CHECK_THROWS_AS(WeightingSpec::from_sigma(asym), InvalidInput);
    MatrixXd dependent(2, 3);
    dependent << 1, 2, 3, 2, 4, 6;
    CHECK_THROWS_AS(WeightingSpec::from_factor(dependent), InvalidInput);

    const auto init = InitialMoments::from_mean(sc, VectorXd::Zero(3));
    CHECK(WeightingSpec::identity(3).reference(init) == doctest::Approx(3.0));
  }
}

TEST_CASE("psi_matrix") {
  SUBCASE("A = 0 gives t I") {
    CHECK(oracle::max_abs(MatrixXd(psi_matrix(MatrixXd::Zero(3, 3), 2.5) - 2.5 * MatrixXd::Identity(3, 3))) <= 1e-14);
  }
  SUBCASE("diagonal Hurwitz limit") {
    const MatrixXd a = (VectorXd(3) << -2, -2, -4).finished().asDiagonal();
    for (double t : {0.3, 1.0, 40.0}) {
      const MatrixXd psi = psi_matrix(a, t);
      for (int i = 0; i < 3; ++i) CHECK(psi(i, i) == doctest::Approx((std::exp(t * a(i, i)) - 1.0) / a(i, i)).epsilon(1e-13));
    }
    CHECK(oracle::max_abs(MatrixXd(psi_matrix(a, 40.0) - (VectorXd(3) << 0.5, 0.5, 0.25).finished().asDiagonal().toDenseMatrix())) <= 1e-12);
  }
  SUBCASE("matches Simpson quadrature of e^{sA}") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
      const MatrixXd a = MatrixXd::Random(4, 4);
      const double t = 1.3;
      const int panels = 400;
      MatrixXd acc = MatrixXd::Zero(4, 4);
      for (int i = 0; i <= panels; ++i) {
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * oracle::taylor_expm(i * t / panels * a);
      }
      acc *= t / panels / 3.0;
      CHECK(oracle::max_abs(MatrixXd(psi_matrix(a, t) - acc)) <= 1e-7);
    }
  }
  SUBCASE("singular A") {
    MatrixXd a = MatrixXd::Zero(2, 2);
    a(0, 1) = 1.0;  // nilpotent: psi = t I + t^2/2 A
    MatrixXd expected = 0.7 * MatrixXd::Identity(2, 2) + 0.245 * a;
    CHECK(oracle::max_abs(MatrixXd(psi_matrix(a, 0.7) - expected)) <= 1e-15);
  }
  CHECK_THROWS_AS(psi_matrix(MatrixXd::Zero(2, 2), -1.0), InvalidInput);
}

TEST_CASE("expm agrees with the Taylor oracle") {
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd a = 3.0 * MatrixXd::Random(5, 5);
    const MatrixXd e = oracle::taylor_expm(a);
    CHECK(oracle::max_abs(MatrixXd(expm(a) - e)) <= 1e-12 * std::max(1.0, oracle::max_abs(e)));
  }
}

TEST_CASE("mean dynamics") {
  SUBCASE("frozen when A = 0 and b = 0") {
    const SystemParams iso(pauli_structure(), VectorXd::Zero(3), MatrixXd::Zero(2, 3), VectorXd::Zero(2));
    const VectorXd mu0 = (VectorXd(3) << 0.1, 0.2, 0.3).finished();
    const auto mu = mean_trajectory(coefficients(iso), InitialMoments::from_mean(iso.sc, mu0), uniform_grid(3.0, 6));
    for (const auto& m : mu) CHECK((m - mu0).norm() == 0.0);
  }
  SUBCASE("worked example relaxes to e3") {
    const auto sys = oracle::worked_system();
    const auto c = coefficients(sys);
    const auto grid = uniform_grid(2.0, 20);
    const auto mu = mean_trajectory(c, zero_mean(sys), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK(mu[k].head(2).norm() <= 1e-15);
      CHECK(mu[k](2) == doctest::Approx(1.0 - std::exp(-4.0 * grid[k])).epsilon(1e-13));
    }
    const auto lim = mean_limit(c);
    REQUIRE(lim.has_value());
    CHECK((*lim - VectorXd::Unit(3, 2)).norm() <= 1e-14);
  }
  SUBCASE("non-Hurwitz rotation has no limit") {
    const SystemParams rot(pauli_structure(), VectorXd::Unit(3, 2), MatrixXd::Zero(2, 3), VectorXd::Zero(2));
    CHECK_FALSE(mean_limit(coefficients(rot)).has_value());
    CHECK_FALSE(is_hurwitz(coefficients(rot).A));
  }
  SUBCASE("A = -I gives b") {
    CoefficientSet c;
    c.A = -MatrixXd::Identity(3, 3);
    c.b = (VectorXd(3) << 1, -2, 3).finished();
    CHECK((*mean_limit(c) - c.b).norm() <= 1e-15);
  }
  SUBCASE("random instances match an RK4 oracle of mu' = A mu + b") {
    std::mt19937 rng(32);
    for (int trial = 0; trial < 5; ++trial) {
      const auto inst = oracle::random_pauli_instance(rng);
      const auto c = coefficients(inst.sys);
      const auto mu = mean_trajectory(c, inst.init, {0.0, 1.0});
      VectorXd y = inst.bloch;
      const int steps = 4000;
      const double h = 1.0 / steps;
      auto f = [&](const VectorXd& v) -> VectorXd { return c.A * v + c.b; };
      for (int i = 0; i < steps; ++i) {
        const VectorXd k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2), k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      CHECK((mu[1] - y).norm() <= 1e-9 * std::max(1.0, y.norm()));
    }
  }
  SUBCASE("isolated systems conserve E^T mu") {
    std::mt19937 rng(33);
    for (int trial = 0; trial < 5; ++trial) {
      auto inst = oracle::random_pauli_instance(rng);
      const SystemParams iso(inst.sys.sc, inst.sys.E, MatrixXd::Zero(2, 3), VectorXd::Zero(2));
      const auto mu = mean_trajectory(coefficients(iso), inst.init, uniform_grid(5.0, 25));
      for (const auto& m : mu) CHECK(std::abs(iso.E.dot(m - inst.bloch)) <= 1e-10);
    }
  }
}

TEST_CASE("Lyapunov solver") {
  const MatrixXd a = (VectorXd(3) << -2, -2, -4).finished().asDiagonal();
  const MatrixXd q = (VectorXd(3) << 4, 4, 0).finished().asDiagonal();
  const MatrixXd p = solve_lyapunov(a, q);
  CHECK(oracle::max_abs(MatrixXd(p - (VectorXd(3) << 1, 1, 0).finished().asDiagonal().toDenseMatrix())) <= 1e-14);

  std::mt19937 rng(34);
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXd m = MatrixXd::Random(4, 4) - 3.0 * MatrixXd::Identity(4, 4);
    MatrixXd qq = MatrixXd::Random(4, 4);
    qq = (qq * qq.transpose()).eval();
    const MatrixXd x = solve_lyapunov(m, qq);
    CHECK(oracle::max_abs(MatrixXd(m * x + x * m.transpose() + qq)) <= 1e-10);
  }
  CHECK_THROWS_AS(solve_lyapunov(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2)), DomainError);
}

TEST_CASE("second moments V") {
  SUBCASE("zero coupling gives V = 0") {
    const SystemParams iso(pauli_structure(), VectorXd::Ones(3), MatrixXd::Zero(2, 3), VectorXd::Zero(2));
    for (const auto& v : second_moment_V(iso, zero_mean(iso), uniform_grid(1.0, 10))) CHECK(oracle::max_abs(v) == 0.0);
  }

  SUBCASE("worked example against Simpson quadrature") {
    const auto sys = oracle::worked_system();
    const auto c = coefficients(sys);
    const auto grid = uniform_grid(2.0, 8);
    const auto v = second_moment_V(sys, zero_mean(sys), grid);
    auto lam = [&](const VectorXd& mu) -> MatrixXcd { return lambda_matrix(sys, mu); };
    for (std::size_t k = 1; k < grid.size(); ++k) {
      const MatrixXcd ref = oracle::simpson_V(c.A, c.b, VectorXd::Zero(3), lam, grid[k], 400);
      CHECK(oracle::max_abs(MatrixXcd(v[k] - ref)) <= 1e-6 * oracle::max_abs(ref));
    }
  }

  SUBCASE("derivatives at zero") {
    std::mt19937 rng(35);
    const auto inst = oracle::random_pauli_instance(rng);
    const auto c = coefficients(inst.sys);
    const double h = 1e-3;
    const auto v = second_moment_V(inst.sys, inst.init, {0.0, h, 2 * h, 3 * h});
    const MatrixXcd l0 = lambda_matrix(inst.sys, inst.bloch);
    const MatrixXcd ld = lambda_dot0(inst.sys, c, inst.bloch);
    const MatrixXcd vdd = c.A.cast<cplx>() * l0 + l0 * c.A.transpose().cast<cplx>() + ld;
    // stencils on V(h), V(2h), V(3h) that cancel the cubic term
    const MatrixXcd second = (-5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h);
    const MatrixXcd first = (18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h);
    CHECK(oracle::max_abs(MatrixXcd(first - l0)) <= 1e-4 * std::max(1.0, oracle::max_abs(l0)));
    CHECK(oracle::max_abs(MatrixXcd(second - vdd)) <= 1e-3 * std::max(1.0, oracle::max_abs(vdd)));
  }

  SUBCASE("converges to the steady-state Gramian") {
    const auto sys = oracle::worked_system();
    const auto ss = steady_state(sys, zero_mean(sys), WeightingSpec::identity(3));
    REQUIRE(ss.has_value());
    const double t = 10.0 / std::abs(spectral_abscissa(coefficients(sys).A));
    const auto v = second_moment_V(sys, zero_mean(sys), {0.0, t});
    CHECK(oracle::max_abs(MatrixXd(v[1].real() - ss->P_inf)) <= 1e-4 * oracle::max_abs(ss->P_inf));
  }

  SUBCASE("grid validation") {
    const auto sys = oracle::worked_system();
    CHECK_THROWS_AS(second_moment_V(sys, zero_mean(sys), {0.1, 0.2}), InvalidInput);
    CHECK_THROWS_AS(second_moment_V(sys, zero_mean(sys), {0.0, 0.2, 0.2}), InvalidInput);
  }
}

TEST_CASE("mean-square deviation") {
  SUBCASE("frozen isolated system") {
    const SystemParams iso(pauli_structure(), VectorXd::Zero(3), MatrixXd::Zero(2, 3), VectorXd::Zero(2));
    for (double d : deviation_delta(iso, zero_mean(iso), WeightingSpec::identity(3), uniform_grid(5.0, 10))) CHECK(d == 0.0);
  }

  SUBCASE("rotation is periodic with zeros at multiples of pi") {
    const SystemParams rot(pauli_structure(), VectorXd::Unit(3, 2), MatrixXd::Zero(2, 3), VectorXd::Zero(2));
    const VectorXd mu0 = (VectorXd(3) << 0.3, 0.1, 0.2).finished();
    const auto init = InitialMoments::from_mean(rot.sc, mu0);
    const double pi = std::numbers::pi;
    const std::vector<double> grid{0.0, 0.4, pi / 2, pi, 2 * pi};
    const auto d = deviation_delta(rot, init, WeightingSpec::identity(3), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      // e^{tA0} rotates the first two coordinates by 2t
      MatrixXd r = MatrixXd::Identity(3, 3);
      r.topLeftCorner(2, 2) << std::cos(2 * grid[k]), -std::sin(2 * grid[k]), std::sin(2 * grid[k]), std::cos(2 * grid[k]);
      const double expected = (r - MatrixXd::Identity(3, 3)).squaredNorm();
      CHECK(d[k] == doctest::Approx(expected).epsilon(1e-10).scale(1.0));
    }
    CHECK(std::abs(d[3]) <= 1e-10);
    CHECK(std::abs(d[4]) <= 1e-10);
  }

  SUBCASE("worked example: small-t fit and convergence") {
    const auto sys = oracle::worked_system();
    const auto d = deviation_delta(sys, zero_mean(sys), WeightingSpec::identity(3), {0.0, 1e-3, 2e-3, 4e-3, 5.0});
    CHECK(d[0] == 0.0);
    for (int k = 1; k <= 3; ++k) {
      const double t = k == 3 ? 4e-3 : k * 1e-3;
      CHECK(d[k] == doctest::Approx(16 * t - 24 * t * t).epsilon(1e-3));
    }
    CHECK(std::abs(d[4] - 6.0) <= 1e-3);
  }

  SUBCASE("agrees with the dense semigroup on random instances") {
    std::mt19937 rng(36);
    const auto rep = qubit_representation();
    for (int trial = 0; trial < 10; ++trial) {
      const auto inst = oracle::random_pauli_instance(rng);
      const oracle::DenseModel dense(rep, inst.sys);
      const auto rho = oracle::bloch_state(inst.bloch);
      const std::vector<double> grid{0.0, 0.05, 0.3, 1.0};
      const auto d = deviation_delta(inst.sys, inst.init, inst.weights, grid);
      for (std::size_t k = 1; k < grid.size(); ++k) {
        const double ref = dense.delta(rho, inst.weights.Sigma, grid[k]);
        CHECK(d[k] == doctest::Approx(ref).epsilon(1e-6));
      }
    }
  }

  SUBCASE("simulate bundles consistent columns") {
    std::mt19937 rng(37);
    const auto inst = oracle::random_pauli_instance(rng);
    const auto grid = uniform_grid(1.0, 10);
    const auto traj = simulate(inst.sys, inst.init, inst.weights, grid);
    const auto d = deviation_delta(inst.sys, inst.init, inst.weights, grid);
    REQUIRE(traj.t.size() == grid.size());
    CHECK(oracle::max_abs(traj.V[0]) == 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK(traj.delta[k] == doctest::Approx(d[k]).epsilon(1e-12));
      CHECK(traj.delta[k] >= 0.0);
      CHECK(oracle::max_abs(MatrixXcd(traj.V[k] - traj.V[k].adjoint())) <= 1e-12);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(traj.V[k].real());
      CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
  }
}

TEST_CASE("derivatives of Delta at zero") {
  SUBCASE("worked example, term by term") {
    const auto sys = oracle::worked_system();
    const auto c = coefficients(sys);
    const MatrixXd p = MatrixXd::Identity(3, 3);
    const MatrixXd l0 = lambda_matrix(sys, VectorXd::Zero(3)).real();
    const MatrixXd ld = lambda_dot0(sys, c, VectorXd::Zero(3)).real();
    const double t1 = (2.0 * c.A * p * c.A.transpose()).trace();
    const double t2 = (2.0 * c.A * l0).trace();
    const double t3 = ld.trace();
    const double t4 = 2.0 * c.b.squaredNorm();
    CHECK(t1 == doctest::Approx(48.0));
    CHECK(t2 == doctest::Approx(-96.0));
    CHECK(t3 == doctest::Approx(-32.0));
    CHECK(t4 == doctest::Approx(32.0));

    const auto dd = delta_derivatives0(sys, zero_mean(sys), WeightingSpec::identity(3));
    CHECK(dd.first == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(dd.second == doctest::Approx(t1 + t2 + t3 + t4).epsilon(1e-12));
  }

  SUBCASE("zero coupling: pure rotation") {
    const SystemParams rot(pauli_structure(), (VectorXd(3) << 0.2, -0.5, 1.0).finished(), MatrixXd::Zero(2, 3),
                           VectorXd::Zero(2));
    const auto init = zero_mean(rot);
    const auto dd = delta_derivatives0(rot, init, WeightingSpec::identity(3));
    const MatrixXd a0 = coefficients(rot).A0;
    CHECK(dd.first == 0.0);
    CHECK(dd.second == doctest::Approx((2.0 * a0 * init.P * a0.transpose()).trace()).epsilon(1e-12));
  }

  SUBCASE("linear in Sigma") {
    std::mt19937 rng(38);
    const auto inst = oracle::random_pauli_instance(rng);
    const auto one = delta_derivatives0(inst.sys, inst.init, inst.weights);
    const auto two = delta_derivatives0(inst.sys, inst.init, WeightingSpec::from_sigma(2.0 * inst.weights.Sigma));
    CHECK(two.first == doctest::Approx(2.0 * one.first).epsilon(1e-12));
    CHECK(two.second == doctest::Approx(2.0 * one.second).epsilon(1e-12));
  }

  SUBCASE("finite differences of Delta on random instances") {
    std::mt19937 rng(39);
    for (int trial = 0; trial < 10; ++trial) {
      const auto inst = oracle::random_pauli_instance(rng);
      const auto dd = delta_derivatives0(inst.sys, inst.init, inst.weights);
      // Richardson on Delta(h) = a h + b h^2 / 2 + c h^3 + ...
      const double h = 2e-3;
      const auto d = deviation_delta(inst.sys, inst.init, inst.weights, {0.0, h, 2 * h, 3 * h});
      const double first = (18 * d[1] - 9 * d[2] + 2 * d[3]) / (6 * h);
      const double second = (-5 * d[1] + 4 * d[2] - d[3]) / (h * h);
      CHECK(first == doctest::Approx(dd.first).epsilon(1e-5));
      CHECK(second == doctest::Approx(dd.second).epsilon(1e-3).scale(std::abs(dd.first)));
    }
  }
}

TEST_CASE("steady state") {
  SUBCASE("worked example") {
    const auto sys = oracle::worked_system();
    const auto ss = steady_state(sys, zero_mean(sys), WeightingSpec::identity(3));
    REQUIRE(ss.has_value());
    CHECK((ss->mu_inf - VectorXd::Unit(3, 2)).norm() <= 1e-12);
    CHECK(oracle::max_abs(MatrixXd(ss->Lambda_inf.real() - (VectorXd(3) << 4, 4, 0).finished().asDiagonal().toDenseMatrix())) <= 1e-12);
    CHECK(oracle::max_abs(MatrixXd(ss->P_inf - (VectorXd(3) << 1, 1, 0).finished().asDiagonal().toDenseMatrix())) <= 1e-12);
    CHECK(ss->delta_inf == doctest::Approx(6.0).epsilon(1e-12));
    const MatrixXd a = coefficients(sys).A;
    CHECK(oracle::max_abs(MatrixXd(a * ss->P_inf + ss->P_inf * a.transpose() + ss->Lambda_inf.real())) <= 1e-10);
  }

  SUBCASE("isolated systems are never Hurwitz") {
    const SystemParams rot(pauli_structure(), VectorXd::Ones(3), MatrixXd::Zero(2, 3), VectorXd::Zero(2));
    CHECK_FALSE(steady_state(rot, zero_mean(rot), WeightingSpec::identity(3)).has_value());
  }

  SUBCASE("Delta(t) approaches Delta_inf on random dissipative instances") {
    std::mt19937 rng(40);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const auto inst = oracle::random_pauli_instance(rng);
      const auto ss = steady_state(inst.sys, inst.init, inst.weights);
      if (!ss) continue;
      const double t = 25.0 / std::abs(spectral_abscissa(coefficients(inst.sys).A));
      const auto d = deviation_delta(inst.sys, inst.init, inst.weights, {0.0, t});
      CHECK(d[1] == doctest::Approx(ss->delta_inf).epsilon(1e-6).scale(1.0));
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("propagator copies are independent") {
  const auto sys = oracle::worked_system();
  DeviationPropagator p(sys, zero_mean(sys), WeightingSpec::identity(3));
  p.advance(0.01);
  DeviationPropagator q = p;
  q.advance(0.01);
  CHECK(p.time() == doctest::Approx(0.01));
  CHECK(q.time() == doctest::Approx(0.02));
  DeviationPropagator fresh(sys, zero_mean(sys), WeightingSpec::identity(3));
  fresh.advance(0.01);
  CHECK(p.delta() == fresh.delta());
  fresh.advance(0.01);
  CHECK(q.delta() == fresh.delta());

  // a single RK4 step of 0.01 against the finer default stepping
  const auto d = deviation_delta(sys, zero_mean(sys), WeightingSpec::identity(3), {0.0, 0.01, 0.02});
  CHECK(p.delta() == doctest::Approx(d[1]).epsilon(1e-5));
  CHECK(q.delta() == doctest::Approx(d[2]).epsilon(1e-5));
  CHECK_THROWS_AS(p.advance(0.0), InvalidInput);
}
