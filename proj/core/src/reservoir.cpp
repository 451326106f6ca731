#include "piesn/reservoir.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "piesn/seeds.hpp"

namespace piesn {

EsnHyperParams lorenz_hyperparams(int n_x, std::uint64_t seed) {
  EsnHyperParams hp;
  hp.n_x = n_x;
  hp.n_u = hp.n_y = 3;
  hp.sigma_in = 0.15;
  hp.spectral_radius_target = 0.4;
  hp.avg_connectivity = 3.0;
  hp.tikhonov_gamma = 1e-4;
  hp.seed = seed;
  return hp;
}

EsnHyperParams cdv_hyperparams(int n_x, std::uint64_t seed) {
  EsnHyperParams hp;
  hp.n_x = n_x;
  hp.n_u = hp.n_y = 6;
  hp.sigma_in = 2.0;
  hp.spectral_radius_target = 0.9;
  hp.avg_connectivity = 3.0;
  hp.tikhonov_gamma = 1e-4;
  hp.seed = seed;
  return hp;
}

namespace {

double dense_spectral_radius(const SpMat& w) {
  const Eigen::EigenSolver<Mat> solver(Mat(w), false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void validate(const EsnHyperParams& hp) {
  if (hp.n_x < 1 || hp.n_u < 1 || hp.n_y < 1) {
    throw std::invalid_argument("generate_weights: dimensions must be >= 1");
  }
  if (!(hp.spectral_radius_target > 0.0) || hp.spectral_radius_target > 1.0) {
    throw std::invalid_argument(
        "generate_weights: spectral radius target must be in (0, 1]");
  }
  if (hp.avg_connectivity < 1.0) {
    throw std::invalid_argument("generate_weights: avg_connectivity must be >= 1");
  }
  if (hp.tikhonov_gamma < 0.0) {
    throw std::invalid_argument("generate_weights: tikhonov_gamma must be >= 0");
  }
}

Mat make_input_matrix(int n_x, int n_cols, double sigma_in, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> col(0, n_cols - 1);
  std::uniform_real_distribution<double> value(-sigma_in, sigma_in);
  Mat w_in = Mat::Zero(n_x, n_cols);
  for (int r = 0; r < n_x; ++r) {
    const int c = col(gen);
    w_in(r, c) = value(gen);
  }
  return w_in;
}

// Erdos-Renyi sparsity: each entry nonzero with probability <d>/n_x, values
// uniform in [-1, 1], then rescaled to the target spectral radius.
SpMat make_recurrent_matrix(const EsnHyperParams& hp) {
  const double p = std::min(1.0, hp.avg_connectivity / hp.n_x);
  for (int attempt = 0; attempt < 5; ++attempt) {
    std::mt19937_64 gen(derive_seed(hp.seed, "reservoir-w", attempt));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(hp.avg_connectivity * hp.n_x * 1.5));
    for (int i = 0; i < hp.n_x; ++i) {
      for (int j = 0; j < hp.n_x; ++j) {
        if (unit(gen) < p) {
          triplets.emplace_back(i, j, value(gen));
        }
      }
    }
    SpMat w(hp.n_x, hp.n_x);
    w.setFromTriplets(triplets.begin(), triplets.end());
    const double rho = spectral_radius(w);
    if (rho > 1e-12) {
      w *= hp.spectral_radius_target / rho;
      return w;
    }
  }
  throw std::runtime_error(
      "generate_weights: recurrent matrix has zero spectral radius after 5 attempts");
}

}  // namespace

double spectral_radius(const SpMat& w) {
  const Eigen::Index n = w.rows();
  if (n == 0) return 0.0;
  if (n == 1) return std::abs(w.coeff(0, 0));

  std::mt19937_64 gen(0x5eed5eedULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = unit(gen);
  v.normalize();

  double lambda = 0.0;
  int stable = 0;
  for (int it = 0; it < 10000; ++it) {
    Vec wv = w * v;
    const double nrm = wv.norm();
    if (nrm < 1e-300) return 0.0;
    const double estimate = v.dot(wv);
    if (std::abs(estimate - lambda) <= 1e-9 * std::max(1.0, std::abs(estimate))) {
      ++stable;
    } else {
      stable = 0;
    }
    lambda = estimate;
    v = wv / nrm;
    if (stable >= 3) {
      // Backward-error check; fails when the dominant pair is complex.
      if ((w * v - lambda * v).norm() <= 1e-8 * std::max(1.0, std::abs(lambda))) {
        return std::abs(lambda);
      }
      break;
    }
  }
  return dense_spectral_radius(w);
}

EsnWeights generate_weights(const EsnHyperParams& hp) {
  validate(hp);
  EsnWeights weights;
  weights.hp = hp;
  weights.w_in =
      make_input_matrix(hp.n_x, hp.n_u, hp.sigma_in, derive_seed(hp.seed, "w-in"));
  weights.w = make_recurrent_matrix(hp);
  weights.w_out = Mat::Zero(hp.n_y, hp.n_x);
  return weights;
}

HybridEsnWeights generate_hybrid_weights(const EsnHyperParams& hp,
                                         const SystemModel& true_model,
                                         PerturbedParam which, double epsilon) {
  validate(hp);
  HybridEsnWeights weights;
  weights.hp = hp;
  weights.w_in = make_input_matrix(hp.n_x, hp.n_u + hp.n_y, hp.sigma_in,
                                   derive_seed(hp.seed, "w-in"));
  weights.w = make_recurrent_matrix(hp);
  weights.approx_model = perturb_parameter(true_model, which, epsilon);
  weights.perturbed = which;
  weights.epsilon_perturb = epsilon;
  weights.w_out = Mat::Zero(hp.n_y, hp.n_x + hp.n_y);
  return weights;
}

Vec step(const Vec& state, const Vec& input, const EsnWeights& weights) {
  return (weights.w_in * input + weights.w * state).array().tanh();
}

Vec readout(const Vec& state, const EsnWeights& weights) {
  return weights.w_out * state;
}

TeacherForcedRun run_teacher_forced(const EsnWeights& weights,
                                    const Trajectory& inputs,
                                    Eigen::Index washout, const Vec& x0) {
  const Eigen::Index n_t = inputs.n_steps();
  if (washout < 0 || washout >= n_t - 1) {
    throw std::invalid_argument("run_teacher_forced: washout must be < N_t - 1");
  }
  const Eigen::Index n_kept = n_t - 1 - washout;
  TeacherForcedRun run;
  run.states.resize(weights.hp.n_x, n_kept);
  run.targets.resize(weights.hp.n_y, n_kept);
  Vec x = x0.size() == 0 ? Vec::Zero(weights.hp.n_x) : x0;
  for (Eigen::Index n = 0; n < n_t; ++n) {
    x = step(x, inputs.states.row(n).transpose(), weights);
    const Eigen::Index k = n - washout;  // x is x(n+1) in 1-based indexing
    if (k >= 0 && k < n_kept) {
      run.states.col(k) = x;
      run.targets.col(k) = inputs.states.row(n + 1).transpose();
    }
  }
  run.final_state = x;
  return run;
}

AutonomousRun run_autonomous(const EsnWeights& weights, const Vec& x0,
                             Eigen::Index n_steps, double divergence_bound) {
  AutonomousRun run;
  run.predictions.resize(n_steps, weights.hp.n_y);
  Vec x = x0;
  for (Eigen::Index k = 0; k < n_steps; ++k) {
    const Vec y = readout(x, weights);
    run.predictions.row(k) = y.transpose();
    if (!y.allFinite() || y.cwiseAbs().maxCoeff() > divergence_bound) {
      run.diverged = true;
      run.divergence_step = k;
      run.predictions.conservativeResize(k + 1, Eigen::NoChange);
      break;
    }
    x = step(x, y, weights);
  }
  return run;
}

std::pair<Vec, Vec> hybrid_step_and_readout(const HybridEsnWeights& weights,
                                            const Vec& state, const Vec& input,
                                            double dt) {
  const Vec ytilde = euler_step(
      input, dt, [&](const Vec& u) { return weights.approx_model.rhs(u); });
  Vec aug_in(input.size() + ytilde.size());
  aug_in << input, ytilde;
  const Vec x_next = (weights.w_in * aug_in + weights.w * state).array().tanh();
  Vec aug_state(x_next.size() + ytilde.size());
  aug_state << x_next, ytilde;
  return {x_next, weights.w_out * aug_state};
}

HybridTeacherForcedRun run_hybrid_teacher_forced(
    const HybridEsnWeights& weights, const Trajectory& inputs,
    Eigen::Index washout) {
  const Eigen::Index n_t = inputs.n_steps();
  if (washout < 0 || washout >= n_t - 1) {
    throw std::invalid_argument(
        "run_hybrid_teacher_forced: washout must be < N_t - 1");
  }
  const Eigen::Index n_x = weights.hp.n_x;
  const Eigen::Index n_y = weights.hp.n_y;
  const Eigen::Index n_kept = n_t - 1 - washout;
  HybridTeacherForcedRun run;
  run.aug_states.resize(n_x + n_y, n_kept);
  run.targets.resize(n_y, n_kept);
  Vec x = Vec::Zero(n_x);
  Vec ytilde;
  for (Eigen::Index n = 0; n < n_t; ++n) {
    const Vec u = inputs.states.row(n).transpose();
    ytilde = euler_step(u, inputs.dt,
                        [&](const Vec& v) { return weights.approx_model.rhs(v); });
    Vec aug_in(u.size() + ytilde.size());
    aug_in << u, ytilde;
    x = (weights.w_in * aug_in + weights.w * x).array().tanh();
    const Eigen::Index k = n - washout;
    if (k >= 0 && k < n_kept) {
      run.aug_states.col(k).head(n_x) = x;
      run.aug_states.col(k).tail(n_y) = ytilde;
      run.targets.col(k) = inputs.states.row(n + 1).transpose();
    }
  }
  run.final_state = x;
  run.final_model_pred = ytilde;
  return run;
}

AutonomousRun run_hybrid_autonomous(const HybridEsnWeights& weights,
                                    const Vec& x0, const Vec& ytilde0,
                                    Eigen::Index n_steps, double dt,
                                    double divergence_bound) {
  const Eigen::Index n_x = weights.hp.n_x;
  const Eigen::Index n_y = weights.hp.n_y;
  AutonomousRun run;
  run.predictions.resize(n_steps, n_y);
  Vec x = x0;
  Vec ytilde = ytilde0;
  for (Eigen::Index k = 0; k < n_steps; ++k) {
    Vec aug_state(n_x + n_y);
    aug_state << x, ytilde;
    const Vec y = weights.w_out * aug_state;
    run.predictions.row(k) = y.transpose();
    if (!y.allFinite() || y.cwiseAbs().maxCoeff() > divergence_bound) {
      run.diverged = true;
      run.divergence_step = k;
      run.predictions.conservativeResize(k + 1, Eigen::NoChange);
      break;
    }
    ytilde = euler_step(
        y, dt, [&](const Vec& u) { return weights.approx_model.rhs(u); });
    Vec aug_in(y.size() + ytilde.size());
    aug_in << y, ytilde;
    x = (weights.w_in * aug_in + weights.w * x).array().tanh();
  }
  return run;
}

Forecaster::Forecaster(AnyEsn weights, double dt)
    : weights_(std::move(weights)), dt_(dt) {
  reset();
}

void Forecaster::reset() {
  if (const auto* esn = std::get_if<EsnWeights>(&weights_)) {
    x_ = Vec::Zero(esn->hp.n_x);
    ytilde_ = Vec();
  } else {
    const auto& hybrid = std::get<HybridEsnWeights>(weights_);
    x_ = Vec::Zero(hybrid.hp.n_x);
    ytilde_ = Vec::Zero(hybrid.hp.n_y);
  }
}

void Forecaster::synchronize(const Mat& inputs) {
  if (const auto* esn = std::get_if<EsnWeights>(&weights_)) {
    for (Eigen::Index n = 0; n < inputs.rows(); ++n) {
      x_ = step(x_, inputs.row(n).transpose(), *esn);
    }
  } else {
    const auto& hybrid = std::get<HybridEsnWeights>(weights_);
    for (Eigen::Index n = 0; n < inputs.rows(); ++n) {
      const Vec u = inputs.row(n).transpose();
      ytilde_ = euler_step(
          u, dt_, [&](const Vec& v) { return hybrid.approx_model.rhs(v); });
      Vec aug_in(u.size() + ytilde_.size());
      aug_in << u, ytilde_;
      x_ = (hybrid.w_in * aug_in + hybrid.w * x_).array().tanh();
    }
  }
}

AutonomousRun Forecaster::predict(Eigen::Index n_steps,
                                  double divergence_bound) {
  if (const auto* esn = std::get_if<EsnWeights>(&weights_)) {
    return run_autonomous(*esn, x_, n_steps, divergence_bound);
  }
  const auto& hybrid = std::get<HybridEsnWeights>(weights_);
  return run_hybrid_autonomous(hybrid, x_, ytilde_, n_steps, dt_,
                               divergence_bound);
}

}  // namespace piesn
