#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "piesn/types.hpp"

namespace piesn {

// Thrown when a trajectory leaves the configured state-norm bound.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct CdvParams {
  double u1_star = 0.95;
  double u4_star = -0.76095;
  double damping_c = 0.1;
  double beta_param = 1.25;
  double gamma_param = 0.2;
  double channel_b = 0.5;
};

// Closed-form coefficients of the 6-mode truncation, mode index m in {1,2}.
struct CdvCoefficients {
  double alpha[2];
  double beta[2];
  double delta[2];
  double gamma[2];
  double gamma_star[2];
  double epsilon_coef;
};

struct SystemModel {
  enum class Kind { lorenz, cdv };

  Kind kind = Kind::lorenz;
  std::string name = "lorenz";
  int dim = 3;
  double lambda_max = 0.934;
  LorenzParams lorenz;
  CdvParams cdv;
  CdvCoefficients cdv_coef{};

  Vec rhs(const Vec& u) const;
  Mat rhs_jacobian(const Vec& u) const;
  double default_dt() const { return kind == Kind::lorenz ? 0.01 : 0.1; }
};

SystemModel make_lorenz(const LorenzParams& p = {}, double lambda_max = 0.934);
SystemModel make_cdv(const CdvParams& p = {}, double lambda_max = 0.033791);

// Hybrid approximate models: one parameter scaled by (1+epsilon).
enum class PerturbedParam { rho, b, c };
SystemModel perturb_parameter(const SystemModel& model, PerturbedParam which,
                              double epsilon);
std::string to_string(PerturbedParam p);
PerturbedParam perturbed_param_from_string(const std::string& s);

Vec lorenz_rhs(const Vec& u, const LorenzParams& p);
Mat lorenz_jacobian(const Vec& u, const LorenzParams& p);
CdvCoefficients cdv_coefficients(const CdvParams& p);
Vec cdv_rhs(const Vec& u, const CdvParams& p, const CdvCoefficients& c);
Mat cdv_jacobian(const Vec& u, const CdvParams& p, const CdvCoefficients& c);

using RhsFn = std::function<Vec(const Vec&)>;

Vec euler_step(const Vec& u, double dt, const RhsFn& rhs);
Vec rk4_step(const Vec& u, double dt, const RhsFn& rhs);

struct Trajectory {
  double dt = 0.0;
  Mat states;  // row n = state at time n*dt

  Eigen::Index n_steps() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
};

enum class Scheme { euler, rk4 };
std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

Trajectory generate_trajectory(const SystemModel& model, const Vec& u0,
                               double dt, Eigen::Index n_steps,
                               Scheme scheme = Scheme::euler,
                               double divergence_bound = 1e6);

// State after integrating n_spinup steps from a canonical off-attractor point;
// used to start datasets on the attractor.
Vec spun_up_state(const SystemModel& model, double dt,
                  Eigen::Index n_spinup = 1000, Scheme scheme = Scheme::euler);

// Row p = (y(p+1) - y(p))/dt - rhs(y(p)); zero on exact Euler trajectories.
Mat physics_residual(const Mat& y_seq, double dt, const SystemModel& model);

// Per-component Gaussian noise with variance var_i / 10^(snr_db/10).
Trajectory add_measurement_noise(const Trajectory& traj, double snr_db,
                                 std::uint64_t seed);

}  // namespace piesn
