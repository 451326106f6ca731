#include <cmath>

#include <doctest.h>

#include "piesn/dynamics.hpp"
#include "piesn/trajectory_io.hpp"
#include "test_support.hpp"

using namespace piesn;

namespace {
constexpr double kPi = 3.14159265358979323846;

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}
}  // namespace

TEST_SUITE_BEGIN("dynamics");

TEST_CASE("lorenz rhs at the origin and the nontrivial equilibria") {
  const LorenzParams p;
  CHECK(lorenz_rhs(Vec::Zero(3), p).norm() == 0.0);

  // u1 = u2 = +-sqrt(beta*(rho-1)), u3 = rho - 1.
  const double r = std::sqrt(p.beta * (p.rho - 1.0));
  for (const double s : {1.0, -1.0}) {
    const Vec f = lorenz_rhs(vec3(s * r, s * r, p.rho - 1.0), p);
    CHECK(f.lpNorm<Eigen::Infinity>() < 1e-13);
  }
}

TEST_CASE("lorenz rhs hand evaluation at (1,1,1)") {
  const Vec f = lorenz_rhs(vec3(1, 1, 1), LorenzParams{});
  CHECK(f(0) == 0.0);
  CHECK(f(1) == 26.0);
  CHECK(f(2) == doctest::Approx(1.0 - 8.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("lorenz jacobian matches finite differences") {
  const LorenzParams p;
  const Vec u = vec3(-3.2, 4.1, 17.0);
  const Mat j = lorenz_jacobian(u, p);
  const double h = 1e-6;
  for (int c = 0; c < 3; ++c) {
    Vec up = u, um = u;
    up(c) += h;
    um(c) -= h;
    const Vec col = (lorenz_rhs(up, p) - lorenz_rhs(um, p)) / (2 * h);
    CHECK((j.col(c) - col).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("cdv coefficients: closed-form spot values") {
  const CdvCoefficients c = cdv_coefficients(CdvParams{});
  CHECK(c.epsilon_coef == doctest::Approx(16.0 * std::sqrt(2.0) / (5.0 * kPi))
                              .epsilon(1e-15));
  CHECK(c.epsilon_coef == doctest::Approx(1.44054).epsilon(1e-5));
  // gamma*_1 = gamma * 4 sqrt(2) b / (3 pi) for m = 1.
  CHECK(c.gamma_star[0] ==
        doctest::Approx(0.2 * 4.0 * std::sqrt(2.0) * 0.5 / (3.0 * kPi))
            .epsilon(1e-15));
  CHECK(c.gamma_star[0] == doctest::Approx(0.060021).epsilon(1e-4));
}

TEST_CASE("cdv coefficients: full re-evaluation of the closed forms") {
  CdvParams p;
  p.beta_param = 0.97;
  p.gamma_param = 0.31;
  p.channel_b = 1.7;
  const CdvCoefficients c = cdv_coefficients(p);
  const double b2 = p.channel_b * p.channel_b;
  for (int i = 0; i < 2; ++i) {
    const double m = i + 1.0;
    const double m2 = m * m;
    CHECK(c.alpha[i] == 8.0 * std::sqrt(2.0) * m2 * (b2 + m2 - 1.0) /
                            (kPi * (4.0 * m2 - 1.0) * (b2 + m2)));
    CHECK(c.beta[i] == p.beta_param * b2 / (b2 + m2));
    CHECK(c.delta[i] ==
          64.0 * std::sqrt(2.0) / (15.0 * kPi) * (b2 - m2 + 1.0) / (b2 + m2));
    CHECK(c.gamma_star[i] == p.gamma_param * 4.0 * std::sqrt(2.0) * m *
                                 p.channel_b / (kPi * (4.0 * m2 - 1.0)));
    CHECK(c.gamma[i] == p.gamma_param * 4.0 * std::sqrt(2.0) * m2 * m *
                            p.channel_b /
                            (kPi * (4.0 * m2 - 1.0) * (b2 + m2)));
  }
}

TEST_CASE("cdv coefficients: gamma terms vanish with gamma = 0; b <= 0 rejected") {
  CdvParams p;
  p.gamma_param = 0.0;
  const CdvCoefficients c = cdv_coefficients(p);
  for (int i = 0; i < 2; ++i) {
    CHECK(c.gamma[i] == 0.0);
    CHECK(c.gamma_star[i] == 0.0);
  }
  p.channel_b = 0.0;
  CHECK_THROWS_AS(cdv_coefficients(p), std::invalid_argument);
  p.channel_b = -0.5;
  CHECK_THROWS_AS(cdv_coefficients(p), std::invalid_argument);
}

TEST_CASE("cdv rhs at the origin") {
  const SystemModel m = make_cdv();
  const Vec f = m.rhs(Vec::Zero(6));
  CHECK(f(0) == doctest::Approx(0.095).epsilon(1e-14));
  CHECK(f(1) == 0.0);
  CHECK(f(2) == 0.0);
  CHECK(f(3) == doctest::Approx(-0.076095).epsilon(1e-14));
  CHECK(f(4) == 0.0);
  CHECK(f(5) == 0.0);
}

TEST_CASE("cdv rhs at (u1*,0,0,u4*,0,0): only the linear gamma terms survive") {
  const SystemModel m = make_cdv();
  Vec u = Vec::Zero(6);
  u(0) = m.cdv.u1_star;
  u(3) = m.cdv.u4_star;
  const Vec f = m.rhs(u);
  CHECK(f(0) == 0.0);
  CHECK(f(1) == 0.0);
  CHECK(f(2) == doctest::Approx(-m.cdv_coef.gamma[0] * m.cdv.u1_star)
                    .epsilon(1e-15));
  CHECK(f(3) == 0.0);
  CHECK(f(4) == 0.0);
  CHECK(f(5) == doctest::Approx(-m.cdv_coef.gamma[1] * m.cdv.u4_star)
                    .epsilon(1e-15));
}

TEST_CASE("cdv rhs: doubling C doubles exactly the relaxation terms") {
  CdvParams p;
  const CdvCoefficients c = cdv_coefficients(p);
  CdvParams p2 = p;
  p2.damping_c *= 2.0;
  const Vec u = test::random_vec(6, 42, 0.4);
  const Vec diff = cdv_rhs(u, p2, c) - cdv_rhs(u, p, c);
  Vec relax(6);
  relax << u(0) - p.u1_star, u(1), u(2), u(3) - p.u4_star, u(4), u(5);
  CHECK((diff + p.damping_c * relax).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("cdv jacobian matches finite differences") {
  const SystemModel m = make_cdv();
  const Vec u = test::random_vec(6, 7, 0.5);
  const Mat j = m.rhs_jacobian(u);
  const double h = 1e-6;
  for (int c = 0; c < 6; ++c) {
    Vec up = u, um = u;
    up(c) += h;
    um(c) -= h;
    const Vec col = (m.rhs(up) - m.rhs(um)) / (2 * h);
    CHECK((j.col(c) - col).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("euler step hand evaluation on the Lorenz system") {
  const SystemModel m = make_lorenz();
  const Vec next = euler_step(vec3(1, 1, 1), 0.01,
                              [&](const Vec& u) { return m.rhs(u); });
  CHECK(next(0) == 1.0);
  CHECK(next(1) == doctest::Approx(1.26).epsilon(1e-15));
  CHECK(next(2) == doctest::Approx(1.0 - 0.01 * 5.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("euler step is the identity for a zero right-hand side") {
  const Vec u = test::random_vec(4, 3);
  const Vec next = euler_step(u, 0.7, [](const Vec& v) { return Vec::Zero(v.size()).eval(); });
  CHECK(next == u);
}

TEST_CASE("integrator self-convergence orders on the Lorenz system") {
  const SystemModel m = make_lorenz();
  const Vec u0 = spun_up_state(m, 0.01);
  const double horizon = 1.0 / m.lambda_max;  // one Lyapunov time

  const auto final_state = [&](double dt, Scheme s) {
    const auto n = static_cast<Eigen::Index>(std::llround(horizon / dt));
    const Trajectory t = generate_trajectory(m, u0, dt, n + 1, s);
    return Vec(t.states.row(n).transpose());
  };

  const Vec reference = final_state(1e-4, Scheme::rk4);

  // Euler: fitted slope over {base, base/2, base/4} within [0.8, 1.2].
  const double base = 2e-3;
  const double e1 = (final_state(base, Scheme::euler) - reference).norm();
  const double e4 = (final_state(base / 4, Scheme::euler) - reference).norm();
  const double euler_slope = std::log2(e1 / e4) / 2.0;
  CHECK(euler_slope > 0.8);
  CHECK(euler_slope < 1.2);

  const double r1 = (final_state(0.02, Scheme::rk4) - reference).norm();
  const double r4 = (final_state(0.005, Scheme::rk4) - reference).norm();
  const double rk4_slope = std::log2(r1 / r4) / 2.0;
  CHECK(rk4_slope > 3.5);
  CHECK(rk4_slope < 4.5);
}

TEST_CASE("generate_trajectory base case reproduces a single euler step") {
  const SystemModel m = make_lorenz();
  const Vec u0 = vec3(1, 2, 3);
  const Trajectory t = generate_trajectory(m, u0, 0.01, 2, Scheme::euler);
  CHECK(t.states.row(0).transpose() == u0);
  const Vec expected = euler_step(u0, 0.01, [&](const Vec& u) { return m.rhs(u); });
  CHECK(t.states.row(1).transpose() == expected);
}

TEST_CASE("lorenz default run stays bounded") {
  const SystemModel m = make_lorenz();
  const Trajectory t =
      generate_trajectory(m, spun_up_state(m, 0.01), 0.01, 1000);
  CHECK(t.states.cwiseAbs().maxCoeff() < 100.0);
}

TEST_CASE("cdv default run stays bounded and alternates regimes") {
  const SystemModel m = make_cdv();
  const Trajectory t = generate_trajectory(m, spun_up_state(m, 0.1), 0.1, 9000);
  CHECK(t.states.cwiseAbs().maxCoeff() < 100.0);
  const double u1_range =
      t.states.col(0).maxCoeff() - t.states.col(0).minCoeff();
  CHECK(u1_range > 0.5);
}

TEST_CASE("generate_trajectory signals divergence") {
  const SystemModel m = make_lorenz();
  CHECK_THROWS_AS(generate_trajectory(m, vec3(1, 1, 1), 1.0, 50),
                  DivergenceError);
  CHECK_THROWS_AS(generate_trajectory(m, vec3(1, 1, 1), 0.01, 1),
                  std::invalid_argument);
}

TEST_CASE("physics residual vanishes on euler-generated sequences") {
  for (const auto& m : {make_lorenz(), make_cdv()}) {
    const double dt = m.default_dt();
    const Trajectory t =
        generate_trajectory(m, spun_up_state(m, dt), dt, 200);
    const Mat res = physics_residual(t.states, dt, m);
    const double tol =
        10.0 * std::numeric_limits<double>::epsilon() *
        (t.states.cwiseAbs().maxCoeff() / dt);
    CHECK(res.cwiseAbs().maxCoeff() < tol);
  }
}

TEST_CASE("physics residual of a constant sequence is -rhs") {
  const SystemModel m = make_cdv();
  const Vec c = test::random_vec(6, 11, 0.3);
  Mat seq(4, 6);
  for (int k = 0; k < 4; ++k) seq.row(k) = c.transpose();
  const Mat res = physics_residual(seq, 0.1, m);
  const Vec expected = -m.rhs(c);
  for (int p = 0; p < 3; ++p) {
    CHECK(res.row(p).transpose() == expected);
  }
}

TEST_CASE("physics residual stencil locality") {
  const SystemModel m = make_lorenz();
  const Trajectory t = generate_trajectory(m, spun_up_state(m, 0.01), 0.01, 12);
  const Mat base = physics_residual(t.states, 0.01, m);
  Mat bumped = t.states;
  const Eigen::Index p = 5;
  bumped(p, 1) += 1e-3;
  const Mat pert = physics_residual(bumped, 0.01, m);
  for (Eigen::Index row = 0; row < base.rows(); ++row) {
    if (row == p - 1 || row == p) {
      CHECK((pert.row(row) - base.row(row)).norm() > 0.0);
    } else {
      CHECK(pert.row(row) == base.row(row));
    }
  }
}

TEST_CASE("measurement noise: huge SNR leaves the series unchanged") {
  const SystemModel m = make_lorenz();
  const Trajectory t = generate_trajectory(m, spun_up_state(m, 0.01), 0.01, 200);
  const Trajectory noisy = add_measurement_noise(t, 400.0, 1);
  CHECK((noisy.states - t.states).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("measurement noise: variance 4 at 20 dB gives noise std 0.2") {
  // Alternating +-2 series: zero mean, population variance exactly 4.
  const Eigen::Index n = 100000;
  Trajectory t;
  t.dt = 1.0;
  t.states.resize(n, 1);
  for (Eigen::Index k = 0; k < n; ++k) t.states(k, 0) = k % 2 == 0 ? 2.0 : -2.0;

  const Trajectory noisy = add_measurement_noise(t, 20.0, 99);
  const Vec noise = noisy.states.col(0) - t.states.col(0);
  const double mean = noise.mean();
  const double std_dev =
      std::sqrt((noise.array() - mean).square().sum() / (n - 1));
  CHECK(std_dev == doctest::Approx(0.2).epsilon(0.02));

  // Empirical SNR within 0.5 dB of the target.
  const double snr = 10.0 * std::log10(4.0 / (std_dev * std_dev));
  CHECK(std::abs(snr - 20.0) < 0.5);
}

TEST_CASE("measurement noise: seed determinism and decorrelation") {
  const SystemModel m = make_lorenz();
  const Trajectory t =
      generate_trajectory(m, spun_up_state(m, 0.01), 0.01, 10000);
  const Trajectory a = add_measurement_noise(t, 20.0, 5);
  const Trajectory b = add_measurement_noise(t, 20.0, 5);
  CHECK(a.states == b.states);

  const Trajectory c = add_measurement_noise(t, 20.0, 6);
  const Vec na =
      (a.states.col(0) - t.states.col(0)).array() -
      (a.states.col(0) - t.states.col(0)).mean();
  const Vec nc =
      (c.states.col(0) - t.states.col(0)).array() -
      (c.states.col(0) - t.states.col(0)).mean();
  const double corr = na.dot(nc) / (na.norm() * nc.norm());
  CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("measurement noise rejects zero-variance components") {
  Trajectory t;
  t.dt = 1.0;
  t.states = Mat::Ones(100, 2);
  t.states.col(0) = test::random_vec(100, 3);
  CHECK_THROWS_AS(add_measurement_noise(t, 20.0, 1), std::invalid_argument);
}

TEST_CASE("trajectory csv round trip is bit-exact") {
  const SystemModel m = make_lorenz();
  const Trajectory t = generate_trajectory(m, spun_up_state(m, 0.01), 0.01, 50);
  test::TempDir dir("traj");
  const auto path = dir.path() / "t.csv";
  save_trajectory_csv(t, path);
  const Trajectory back = load_trajectory_csv(path);
  CHECK(back.states == t.states);
  CHECK(back.dt == doctest::Approx(t.dt).epsilon(1e-15));
}

TEST_CASE("perturb_parameter scales a single parameter") {
  const SystemModel lorenz = make_lorenz();
  const SystemModel lp = perturb_parameter(lorenz, PerturbedParam::rho, 0.05);
  CHECK(lp.lorenz.rho == doctest::Approx(29.4).epsilon(1e-14));
  CHECK(lp.lorenz.sigma == lorenz.lorenz.sigma);

  const SystemModel cdv = make_cdv();
  const SystemModel cb = perturb_parameter(cdv, PerturbedParam::b, 1.0);
  CHECK(cb.cdv.channel_b == doctest::Approx(1.0).epsilon(1e-14));
  // Coefficients are re-derived from the perturbed b.
  CHECK(cb.cdv_coef.beta[0] ==
        doctest::Approx(cdv.cdv.beta_param * 1.0 / 2.0).epsilon(1e-14));
  CHECK_THROWS_AS(perturb_parameter(lorenz, PerturbedParam::b, 0.1),
                  std::invalid_argument);
}

TEST_SUITE_END();
