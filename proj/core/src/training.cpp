#include "piesn/training.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace piesn {

Vec flatten_row_major(const Mat& m) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor rm = m;
  return Eigen::Map<const Vec>(rm.data(), rm.size());
}

Mat unflatten_row_major(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw std::invalid_argument("unflatten_row_major: size mismatch");
  }
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(v.data(), rows, cols);
}

Mat ridge_train(const Mat& X, const Mat& Y, double gamma) {
  if (X.cols() != Y.cols()) {
    throw std::invalid_argument("ridge_train: X and Y column counts differ");
  }
  if (gamma < 0.0) {
    throw std::invalid_argument("ridge_train: gamma must be >= 0");
  }
  Mat a = X * X.transpose();
  a.diagonal().array() += gamma;
  const Mat b = X * Y.transpose();

  const auto ldlt = a.ldlt();
  Mat z = ldlt.solve(b);
  z += ldlt.solve(b - a * z);  // one refinement step

  const double b_norm = b.norm();
  const double residual = (a * z - b).norm();
  if (residual > 1e-8 * std::max(b_norm, 1e-300)) {
    throw IllConditionedError(
        "ridge_train: normal equations numerically singular (gamma = " +
        std::to_string(gamma) + ")");
  }
  return z.transpose();
}

double data_loss(const Mat& w_out, const Mat& X, const Mat& Y) {
  const double n = static_cast<double>(Y.rows()) * static_cast<double>(Y.cols());
  return (w_out * X - Y).squaredNorm() / n;
}

Mat data_loss_gradient(const Mat& w_out, const Mat& X, const Mat& Y) {
  const double n = static_cast<double>(Y.rows()) * static_cast<double>(Y.cols());
  return 2.0 / n * (w_out * X - Y) * X.transpose();
}

namespace {

struct Rollout {
  Mat states;  // n_x x (n_p + 1)
  Mat preds;   // (n_p + 1) x n_y
  bool diverged = false;
  double max_abs = 0.0;
};

Rollout roll_forward(const Mat& w_out, const EsnWeights& weights, const Vec& x_T,
                     const PhysicsConfig& cfg) {
  const Eigen::Index n_p = cfg.n_collocation;
  const Eigen::Index n_x = weights.hp.n_x;
  Rollout r;
  r.states.resize(n_x, n_p + 1);
  r.preds.resize(n_p + 1, w_out.rows());
  Vec x = x_T;
  for (Eigen::Index k = 0; k <= n_p; ++k) {
    r.states.col(k) = x;
    const Vec y = w_out * x;
    r.preds.row(k) = y.transpose();
    const double m = y.allFinite() ? y.cwiseAbs().maxCoeff()
                                   : std::numeric_limits<double>::infinity();
    r.max_abs = std::max(r.max_abs, m);
    if (m > cfg.divergence_bound) {
      r.diverged = true;
      r.preds.conservativeResize(k + 1, Eigen::NoChange);
      r.states.conservativeResize(Eigen::NoChange, k + 1);
      return r;
    }
    if (k < n_p) {
      x = (weights.w_in * y + weights.w * x).array().tanh();
    }
  }
  return r;
}

double divergence_penalty(const Rollout& r, const PhysicsConfig& cfg) {
  const double excess =
      std::isfinite(r.max_abs) ? r.max_abs - cfg.divergence_bound : 1e6;
  return 1e12 + std::max(0.0, excess);
}

double residual_mean_square(const Mat& preds, const PhysicsConfig& cfg,
                            Mat* residuals) {
  const Mat res = physics_residual(preds, cfg.dt, cfg.model);
  if (residuals) *residuals = res;
  const double n =
      static_cast<double>(res.rows()) * static_cast<double>(res.cols());
  return res.squaredNorm() / n;
}

}  // namespace

PhysicsLossResult physics_loss(const Mat& w_out, const EsnWeights& weights,
                               const Vec& x_T, const PhysicsConfig& cfg) {
  if (cfg.n_collocation < 1) {
    throw std::invalid_argument("physics_loss: n_collocation must be >= 1");
  }
  const Rollout r = roll_forward(w_out, weights, x_T, cfg);
  PhysicsLossResult out;
  out.collocation = r.preds;
  if (r.diverged) {
    out.diverged = true;
    out.e_p = divergence_penalty(r, cfg);
    return out;
  }
  out.e_p = residual_mean_square(r.preds, cfg, nullptr);
  return out;
}

namespace {

// Reverse sweep through y^(k) = W_out x(k), x(k+1) = tanh(W_in y^(k) + W x(k)).
Mat backward_gradient(const Mat& w_out, const EsnWeights& weights,
                      const PhysicsConfig& cfg, const Rollout& r,
                      const Mat& residuals) {
  const Eigen::Index n_p = cfg.n_collocation;
  const Eigen::Index n_y = w_out.rows();
  const double scale =
      cfg.physics_weight * 2.0 /
      (static_cast<double>(n_y) * static_cast<double>(n_p));

  // Residual-operator contribution to each prediction's adjoint.
  Mat ybar_res = Mat::Zero(n_p + 1, n_y);
  for (Eigen::Index p = 0; p < n_p; ++p) {
    const Vec rp = residuals.row(p).transpose();
    const Vec y = r.preds.row(p).transpose();
    ybar_res.row(p + 1) += (scale / cfg.dt) * rp.transpose();
    ybar_res.row(p) -= (scale / cfg.dt) * rp.transpose();
    ybar_res.row(p) -=
        scale * (cfg.model.rhs_jacobian(y).transpose() * rp).transpose();
  }

  if (!cfg.full_gradient) {
    // Ablation: collocation states held fixed.
    return ybar_res.transpose() * r.states.transpose();
  }

  const SpMat w_t = weights.w.transpose();
  Mat grad = Mat::Zero(n_y, w_out.cols());
  Vec ybar = ybar_res.row(n_p).transpose();
  grad.noalias() += ybar * r.states.col(n_p).transpose();
  Vec xbar = w_out.transpose() * ybar;
  for (Eigen::Index k = n_p - 1; k >= 0; --k) {
    const Vec abar =
        (1.0 - r.states.col(k + 1).array().square()) * xbar.array();
    ybar = ybar_res.row(k).transpose() + weights.w_in.transpose() * abar;
    grad.noalias() += ybar * r.states.col(k).transpose();
    xbar = w_t * abar + w_out.transpose() * ybar;
  }
  return grad;
}

}  // namespace

Mat physics_loss_gradient(const Mat& w_out, const EsnWeights& weights,
                          const Vec& x_T, const PhysicsConfig& cfg) {
  const Rollout r = roll_forward(w_out, weights, x_T, cfg);
  if (r.diverged) {
    return Mat::Zero(w_out.rows(), w_out.cols());
  }
  Mat residuals;
  residual_mean_square(r.preds, cfg, &residuals);
  return backward_gradient(w_out, weights, cfg, r, residuals);
}

EsnWeights train_esn(EsnWeights weights, const TrainingSet& data) {
  const TeacherForcedRun run =
      run_teacher_forced(weights, data.inputs, data.washout);
  weights.w_out = ridge_train(run.states, run.targets, weights.hp.tikhonov_gamma);
  return weights;
}

PiTrainResult train_pi_esn(EsnWeights weights, const TrainingSet& data,
                           const PhysicsConfig& cfg, const LbfgsConfig& opt) {
  if (cfg.model.dim != weights.hp.n_y || weights.hp.n_u != weights.hp.n_y) {
    throw std::invalid_argument("train_pi_esn: model/network dimension mismatch");
  }
  if (std::abs(cfg.dt - data.inputs.dt) > 1e-12 * std::max(1.0, cfg.dt)) {
    throw std::invalid_argument("train_pi_esn: physics dt differs from data dt");
  }

  const TeacherForcedRun run =
      run_teacher_forced(weights, data.inputs, data.washout);
  const Mat w0 = ridge_train(run.states, run.targets, weights.hp.tikhonov_gamma);
  const Vec x_T = run.final_state;
  const Eigen::Index n_y = w0.rows();
  const Eigen::Index n_x = w0.cols();

  struct LastEval {
    double f = std::numeric_limits<double>::quiet_NaN();
    double e_d = 0.0;
    double e_p = 0.0;
  };
  LastEval last;

  const auto split_losses = [&](const Mat& w, double& e_d, double& e_p) {
    e_d = data_loss(w, run.states, run.targets);
    e_p = cfg.physics_weight * physics_loss(w, weights, x_T, cfg).e_p;
  };

  const Objective objective = [&](const Vec& theta, Vec& grad) {
    const Mat w = unflatten_row_major(theta, n_y, n_x);
    const Rollout roll = roll_forward(w, weights, x_T, cfg);
    const double e_d = data_loss(w, run.states, run.targets);
    Mat g = data_loss_gradient(w, run.states, run.targets);
    double e_p;
    if (roll.diverged) {
      e_p = cfg.physics_weight * divergence_penalty(roll, cfg);
    } else {
      Mat residuals;
      e_p = cfg.physics_weight * residual_mean_square(roll.preds, cfg, &residuals);
      g += backward_gradient(w, weights, cfg, roll, residuals);
    }
    grad = flatten_row_major(g);
    last = {e_d + e_p, e_d, e_p};
    return e_d + e_p;
  };

  PiTrainResult result;
  {
    double e_d0, e_p0;
    split_losses(w0, e_d0, e_p0);
    result.history.push_back({e_d0, e_p0, e_d0 + e_p0});
  }

  const auto on_accept = [&](const Vec& theta, double f) {
    if (f == last.f) {
      result.history.push_back({last.e_d, last.e_p, f});
    } else {
      double e_d, e_p;
      split_losses(unflatten_row_major(theta, n_y, n_x), e_d, e_p);
      result.history.push_back({e_d, e_p, e_d + e_p});
    }
  };

  const MinimizeResult mr =
      minimize(objective, flatten_row_major(w0), opt, on_accept);
  weights.w_out = unflatten_row_major(mr.x, n_y, n_x);
  result.weights = std::move(weights);
  result.trace = mr.trace;
  result.optimizer_failed =
      mr.trace.termination == TerminationReason::line_search_failure;
  return result;
}

HybridEsnWeights train_hybrid(HybridEsnWeights weights, const TrainingSet& data,
                              double gamma) {
  const HybridTeacherForcedRun run =
      run_hybrid_teacher_forced(weights, data.inputs, data.washout);
  weights.w_out = ridge_train(run.aug_states, run.targets, gamma);
  return weights;
}

}  // namespace piesn
