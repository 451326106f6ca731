#include "piesn/dynamics.hpp"

#include <cmath>
#include <random>

#include "piesn/seeds.hpp"

namespace piesn {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Vec lorenz_rhs(const Vec& u, const LorenzParams& p) {
  Vec f(3);
  f(0) = p.sigma * (u(1) - u(0));
  f(1) = u(0) * (p.rho - u(2)) - u(1);
  f(2) = u(0) * u(1) - p.beta * u(2);
  return f;
}

Mat lorenz_jacobian(const Vec& u, const LorenzParams& p) {
  Mat j(3, 3);
  j << -p.sigma, p.sigma, 0.0,
       p.rho - u(2), -1.0, -u(0),
       u(1), u(0), -p.beta;
  return j;
}

CdvCoefficients cdv_coefficients(const CdvParams& p) {
  if (!(p.channel_b > 0.0)) {
    throw std::invalid_argument("cdv_coefficients: channel_b must be > 0");
  }
  const double b2 = p.channel_b * p.channel_b;
  const double root2 = std::sqrt(2.0);
  CdvCoefficients c{};
  for (int i = 0; i < 2; ++i) {
    const double m = static_cast<double>(i + 1);
    const double m2 = m * m;
    c.alpha[i] = 8.0 * root2 * m2 * (b2 + m2 - 1.0) /
                 (kPi * (4.0 * m2 - 1.0) * (b2 + m2));
    c.beta[i] = p.beta_param * b2 / (b2 + m2);
    c.delta[i] = 64.0 * root2 / (15.0 * kPi) * (b2 - m2 + 1.0) / (b2 + m2);
    c.gamma_star[i] =
        p.gamma_param * 4.0 * root2 * m * p.channel_b / (kPi * (4.0 * m2 - 1.0));
    c.gamma[i] = p.gamma_param * 4.0 * root2 * m2 * m * p.channel_b /
                 (kPi * (4.0 * m2 - 1.0) * (b2 + m2));
  }
  c.epsilon_coef = 16.0 * root2 / (5.0 * kPi);
  return c;
}

Vec cdv_rhs(const Vec& u, const CdvParams& p, const CdvCoefficients& c) {
  const double C = p.damping_c;
  Vec f(6);
  f(0) = c.gamma_star[0] * u(2) - C * (u(0) - p.u1_star);
  f(1) = -(c.alpha[0] * u(0) - c.beta[0]) * u(2) - C * u(1) -
         c.delta[0] * u(3) * u(5);
  f(2) = (c.alpha[0] * u(0) - c.beta[0]) * u(1) - c.gamma[0] * u(0) -
         C * u(2) + c.delta[0] * u(3) * u(4);
  f(3) = c.gamma_star[1] * u(5) - C * (u(3) - p.u4_star) +
         c.epsilon_coef * (u(1) * u(5) - u(2) * u(4));
  f(4) = -(c.alpha[1] * u(0) - c.beta[1]) * u(5) - C * u(4) -
         c.delta[1] * u(3) * u(2);
  f(5) = (c.alpha[1] * u(0) - c.beta[1]) * u(4) - c.gamma[1] * u(3) -
         C * u(5) + c.delta[1] * u(3) * u(1);
  return f;
}

Mat cdv_jacobian(const Vec& u, const CdvParams& p, const CdvCoefficients& c) {
  const double C = p.damping_c;
  const double a1u = c.alpha[0] * u(0) - c.beta[0];
  const double a2u = c.alpha[1] * u(0) - c.beta[1];
  Mat j = Mat::Zero(6, 6);
  j(0, 0) = -C;
  j(0, 2) = c.gamma_star[0];

  j(1, 0) = -c.alpha[0] * u(2);
  j(1, 1) = -C;
  j(1, 2) = -a1u;
  j(1, 3) = -c.delta[0] * u(5);
  j(1, 5) = -c.delta[0] * u(3);

  j(2, 0) = c.alpha[0] * u(1) - c.gamma[0];
  j(2, 1) = a1u;
  j(2, 2) = -C;
  j(2, 3) = c.delta[0] * u(4);
  j(2, 4) = c.delta[0] * u(3);

  j(3, 1) = c.epsilon_coef * u(5);
  j(3, 2) = -c.epsilon_coef * u(4);
  j(3, 3) = -C;
  j(3, 4) = -c.epsilon_coef * u(2);
  j(3, 5) = c.gamma_star[1] + c.epsilon_coef * u(1);

  j(4, 0) = -c.alpha[1] * u(5);
  j(4, 2) = -c.delta[1] * u(3);
  j(4, 3) = -c.delta[1] * u(2);
  j(4, 4) = -C;
  j(4, 5) = -a2u;

  j(5, 0) = c.alpha[1] * u(4);
  j(5, 1) = c.delta[1] * u(3);
  j(5, 3) = -c.gamma[1] + c.delta[1] * u(1);
  j(5, 4) = a2u;
  j(5, 5) = -C;
  return j;
}

Vec SystemModel::rhs(const Vec& u) const {
  return kind == Kind::lorenz ? lorenz_rhs(u, lorenz) : cdv_rhs(u, cdv, cdv_coef);
}

Mat SystemModel::rhs_jacobian(const Vec& u) const {
  return kind == Kind::lorenz ? lorenz_jacobian(u, lorenz)
                              : cdv_jacobian(u, cdv, cdv_coef);
}

SystemModel make_lorenz(const LorenzParams& p, double lambda_max) {
  SystemModel m;
  m.kind = SystemModel::Kind::lorenz;
  m.name = "lorenz";
  m.dim = 3;
  m.lambda_max = lambda_max;
  m.lorenz = p;
  return m;
}

SystemModel make_cdv(const CdvParams& p, double lambda_max) {
  SystemModel m;
  m.kind = SystemModel::Kind::cdv;
  m.name = "cdv";
  m.dim = 6;
  m.lambda_max = lambda_max;
  m.cdv = p;
  m.cdv_coef = cdv_coefficients(p);
  return m;
}

SystemModel perturb_parameter(const SystemModel& model, PerturbedParam which,
                              double epsilon) {
  SystemModel out = model;
  switch (which) {
    case PerturbedParam::rho:
      if (model.kind != SystemModel::Kind::lorenz) {
        throw std::invalid_argument("perturb_parameter: rho requires lorenz");
      }
      out.lorenz.rho *= (1.0 + epsilon);
      break;
    case PerturbedParam::b:
      if (model.kind != SystemModel::Kind::cdv) {
        throw std::invalid_argument("perturb_parameter: b requires cdv");
      }
      out.cdv.channel_b *= (1.0 + epsilon);
      out.cdv_coef = cdv_coefficients(out.cdv);
      break;
    case PerturbedParam::c:
      if (model.kind != SystemModel::Kind::cdv) {
        throw std::invalid_argument("perturb_parameter: C requires cdv");
      }
      out.cdv.damping_c *= (1.0 + epsilon);
      break;
  }
  return out;
}

std::string to_string(PerturbedParam p) {
  switch (p) {
    case PerturbedParam::rho: return "rho";
    case PerturbedParam::b: return "b";
    case PerturbedParam::c: return "C";
  }
  return "?";
}

PerturbedParam perturbed_param_from_string(const std::string& s) {
  if (s == "rho") return PerturbedParam::rho;
  if (s == "b") return PerturbedParam::b;
  if (s == "C" || s == "c") return PerturbedParam::c;
  throw std::invalid_argument("unknown perturbed parameter: " + s);
}

Vec euler_step(const Vec& u, double dt, const RhsFn& rhs) {
  return u + dt * rhs(u);
}

Vec rk4_step(const Vec& u, double dt, const RhsFn& rhs) {
  const Vec k1 = rhs(u);
  const Vec k2 = rhs(u + 0.5 * dt * k1);
  const Vec k3 = rhs(u + 0.5 * dt * k2);
  const Vec k4 = rhs(u + dt * k3);
  return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::string to_string(Scheme s) { return s == Scheme::euler ? "euler" : "rk4"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "euler") return Scheme::euler;
  if (s == "rk4") return Scheme::rk4;
  throw std::invalid_argument("unknown integration scheme: " + s);
}

Trajectory generate_trajectory(const SystemModel& model, const Vec& u0,
                               double dt, Eigen::Index n_steps, Scheme scheme,
                               double divergence_bound) {
  if (n_steps < 2) {
    throw std::invalid_argument("generate_trajectory: n_steps must be >= 2");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("generate_trajectory: dt must be > 0");
  }
  Trajectory traj;
  traj.dt = dt;
  traj.states.resize(n_steps, model.dim);
  traj.states.row(0) = u0.transpose();
  Vec u = u0;
  const RhsFn rhs = [&model](const Vec& v) { return model.rhs(v); };
  for (Eigen::Index k = 1; k < n_steps; ++k) {
    u = scheme == Scheme::euler ? euler_step(u, dt, rhs) : rk4_step(u, dt, rhs);
    if (!u.allFinite() || u.norm() > divergence_bound) {
      throw DivergenceError("generate_trajectory: state norm exceeded " +
                            std::to_string(divergence_bound) + " at step " +
                            std::to_string(k));
    }
    traj.states.row(k) = u.transpose();
  }
  return traj;
}

Vec spun_up_state(const SystemModel& model, double dt, Eigen::Index n_spinup,
                  Scheme scheme) {
  Vec u0;
  if (model.kind == SystemModel::Kind::lorenz) {
    u0 = Vec(3);
    u0 << 1.0, 1.0, 1.0;
  } else {
    u0 = Vec::Zero(6);
    u0(0) = model.cdv.u1_star;
    u0(3) = model.cdv.u4_star;
  }
  const Trajectory spin =
      generate_trajectory(model, u0, dt, n_spinup + 1, scheme);
  return spin.states.row(n_spinup).transpose();
}

Mat physics_residual(const Mat& y_seq, double dt, const SystemModel& model) {
  if (y_seq.rows() < 2) {
    throw std::invalid_argument("physics_residual: need at least 2 rows");
  }
  const Eigen::Index n = y_seq.rows() - 1;
  Mat res(n, y_seq.cols());
  for (Eigen::Index p = 0; p < n; ++p) {
    const Vec y = y_seq.row(p).transpose();
    res.row(p) =
        ((y_seq.row(p + 1) - y_seq.row(p)) / dt).transpose() - model.rhs(y);
  }
  return res;
}

Trajectory add_measurement_noise(const Trajectory& traj, double snr_db,
                                 std::uint64_t seed) {
  const Eigen::Index n = traj.states.rows();
  const Eigen::Index d = traj.states.cols();
  if (n < 2) {
    throw std::invalid_argument("add_measurement_noise: degenerate trajectory");
  }
  const Vec mean = traj.states.colwise().mean().transpose();
  Vec var(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    var(i) = (traj.states.col(i).array() - mean(i)).square().sum() /
             static_cast<double>(n);
  }
  if ((var.array() <= 0.0).any()) {
    throw std::invalid_argument(
        "add_measurement_noise: zero-variance component");
  }
  const double power_ratio = std::pow(10.0, snr_db / 10.0);
  const Vec noise_std = (var / power_ratio).cwiseSqrt();

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Trajectory out = traj;
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) {
      out.states(k, i) += noise_std(i) * normal(gen);
    }
  }
  return out;
}

}  // namespace piesn
