#pragma once

#include <vector>

#include "piesn/dynamics.hpp"
#include "piesn/optimizer.hpp"
#include "piesn/reservoir.hpp"

namespace piesn {

class IllConditionedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingSet {
  Trajectory inputs;  // u(1..N_t); targets are the one-step-shifted inputs
  Eigen::Index washout = 100;
};

struct PhysicsConfig {
  Eigen::Index n_collocation = 1000;  // N_p
  SystemModel model;
  double dt = 0.01;
  // Optional balance factor on E_p; the combined loss is unweighted (1.0) in
  // the reference formulation.
  double physics_weight = 1.0;
  // When false, collocation states are treated as fixed and only the direct
  // readout dependence is differentiated (ablation variant).
  bool full_gradient = true;
  double divergence_bound = 1e6;
};

struct LossReport {
  double e_data = 0.0;
  double e_physics = 0.0;  // as it enters e_total (physics_weight applied)
  double e_total = 0.0;
};

// W_out = Y X^T (X X^T + gamma I)^-1 via an SPD solve with one refinement
// step. Throws IllConditionedError when gamma = 0 and X X^T is numerically
// singular.
Mat ridge_train(const Mat& X, const Mat& Y, double gamma);

// E_d = (1/N_y) sum_i (1/M) sum_n (y^_i(n) - y_i(n))^2 with y^ = W_out X.
double data_loss(const Mat& w_out, const Mat& X, const Mat& Y);
Mat data_loss_gradient(const Mat& w_out, const Mat& X, const Mat& Y);

struct PhysicsLossResult {
  double e_p = 0.0;    // raw mean-squared residual (no physics_weight)
  Mat collocation;     // (N_p + 1) x N_y closed-loop predictions
  bool diverged = false;
};

// Runs the closed loop for N_p + 1 steps from the end-of-training state x_T
// and averages the squared Euler residual over the collocation points.
// Divergent rollouts yield a large finite penalty so the line search stays
// well-defined.
PhysicsLossResult physics_loss(const Mat& w_out, const EsnWeights& weights,
                               const Vec& x_T, const PhysicsConfig& cfg);

// Exact reverse-mode derivative of (physics_weight * E_p) w.r.t. W_out,
// including the recurrent dependence of every collocation state on W_out.
Mat physics_loss_gradient(const Mat& w_out, const EsnWeights& weights,
                          const Vec& x_T, const PhysicsConfig& cfg);

struct PiTrainResult {
  EsnWeights weights;
  std::vector<LossReport> history;  // one entry per accepted iteration
  OptimizationTrace trace;
  bool optimizer_failed = false;
};

// Conventional ESN: ridge regression on the teacher-forced states.
EsnWeights train_esn(EsnWeights weights, const TrainingSet& data);

// PI-ESN: ridge initial guess, then L-BFGS on E_tot = E_d + E_p.
PiTrainResult train_pi_esn(EsnWeights weights, const TrainingSet& data,
                           const PhysicsConfig& cfg, const LbfgsConfig& opt);

// Hybrid ESN: ridge regression on [x(n); y~(n)] augmented states.
HybridEsnWeights train_hybrid(HybridEsnWeights weights, const TrainingSet& data,
                              double gamma);

// Row-major flattening of W_out used as the optimizer parameter vector.
Vec flatten_row_major(const Mat& m);
Mat unflatten_row_major(const Vec& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace piesn
