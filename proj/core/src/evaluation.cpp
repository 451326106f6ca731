#include "piesn/evaluation.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "piesn/seeds.hpp"

namespace piesn {

double rms_norm(const Mat& states) {
  return std::sqrt(states.squaredNorm() / static_cast<double>(states.rows()));
}

Vec normalized_error(const Mat& pred, const Mat& truth, double denom) {
  if (pred.cols() != truth.cols()) {
    throw std::invalid_argument("normalized_error: dimension mismatch");
  }
  if (!(denom > 0.0)) {
    throw std::invalid_argument("normalized_error: zero denominator");
  }
  const Eigen::Index n = std::min(pred.rows(), truth.rows());
  Vec e(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    e(k) = (truth.row(k) - pred.row(k)).norm() / denom;
  }
  return e;
}

Vec normalized_error(const Trajectory& pred, const Trajectory& truth) {
  return normalized_error(pred.states, truth.states, rms_norm(truth.states));
}

HorizonResult predictability_horizon(const Vec& errors, double dt,
                                     double lambda_max, double threshold) {
  if (!(threshold > 0.0)) {
    throw std::invalid_argument("predictability_horizon: threshold must be > 0");
  }
  HorizonResult result;
  result.error_series = errors;
  Eigen::Index k = 0;
  for (; k < errors.size(); ++k) {
    if (!(errors(k) <= threshold)) break;  // NaN counts as exceedance
  }
  result.censored = (k == errors.size());
  result.horizon_lt = static_cast<double>(k) * dt * lambda_max;
  return result;
}

HorizonEnsemble summarize(std::vector<HorizonResult> per_ic) {
  HorizonEnsemble ens;
  ens.per_ic = std::move(per_ic);
  ens.count = static_cast<int>(ens.per_ic.size());
  if (ens.count == 0) return ens;

  double sum = 0.0, sum_unc = 0.0;
  int n_unc = 0;
  for (const auto& h : ens.per_ic) {
    sum += h.horizon_lt;
    if (h.censored) {
      ++ens.n_censored;
    } else {
      sum_unc += h.horizon_lt;
      ++n_unc;
    }
    if (h.diverged) ++ens.n_diverged;
  }
  ens.mean_lt = sum / ens.count;
  ens.mean_uncensored_lt = n_unc > 0 ? sum_unc / n_unc : 0.0;
  double ss = 0.0;
  for (const auto& h : ens.per_ic) {
    ss += (h.horizon_lt - ens.mean_lt) * (h.horizon_lt - ens.mean_lt);
  }
  ens.std_lt = ens.count > 1 ? std::sqrt(ss / (ens.count - 1)) : 0.0;
  return ens;
}

HorizonEnsemble run_ensemble(const AnyEsn& model, const Trajectory& reference,
                             const SystemModel& system,
                             const EnsembleConfig& cfg) {
  if (cfg.n_ics < 1) {
    throw std::invalid_argument("run_ensemble: n_ics must be >= 1");
  }
  const double dt = reference.dt;
  const double lt_steps = 1.0 / (system.lambda_max * dt);
  const auto n_pred =
      static_cast<Eigen::Index>(std::ceil(cfg.prediction_lt * lt_steps));
  const auto spacing =
      static_cast<Eigen::Index>(std::ceil(cfg.spacing_lt * lt_steps));
  const Eigen::Index slot = 2 * spacing;  // jitter stays below `spacing`

  std::mt19937_64 gen(derive_seed(cfg.seed, "ensemble-starts"));
  std::uniform_int_distribution<Eigen::Index> jitter(0, spacing - 1);

  const Eigen::Index member_len = cfg.sync_steps + n_pred;
  const Eigen::Index last_start =
      cfg.first_start + (cfg.n_ics - 1) * slot + (spacing - 1);
  if (last_start + member_len > reference.n_steps()) {
    throw std::invalid_argument(
        "run_ensemble: reference trajectory too short; need " +
        std::to_string(last_start + member_len) + " rows, have " +
        std::to_string(reference.n_steps()));
  }

  const double denom = rms_norm(reference.states);

  std::vector<HorizonResult> members;
  members.reserve(cfg.n_ics);
  for (int m = 0; m < cfg.n_ics; ++m) {
    const Eigen::Index start = cfg.first_start + m * slot + jitter(gen);
    Forecaster fc(model, dt);
    fc.synchronize(reference.states.middleRows(start, cfg.sync_steps));
    AutonomousRun run = fc.predict(n_pred, cfg.divergence_bound);
    const Mat truth =
        reference.states.middleRows(start + cfg.sync_steps, n_pred);
    const Vec errors = normalized_error(run.predictions, truth, denom);
    HorizonResult h =
        predictability_horizon(errors, dt, system.lambda_max, cfg.threshold);
    h.diverged = run.diverged;
    members.push_back(std::move(h));
  }
  return summarize(std::move(members));
}

}  // namespace piesn
