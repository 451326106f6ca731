#pragma once

#include <cstdint>
#include <vector>

#include "piesn/dynamics.hpp"
#include "piesn/reservoir.hpp"

namespace piesn {

// sqrt of the time-averaged squared state norm; the denominator of the
// normalized error.
double rms_norm(const Mat& states);

// E(n) = ||u(n) - u^(n)|| / denom. Rows of pred beyond truth (or vice versa)
// are ignored; comparison runs over the common prefix.
Vec normalized_error(const Mat& pred, const Mat& truth, double denom);
Vec normalized_error(const Trajectory& pred, const Trajectory& truth);

struct HorizonResult {
  double horizon_lt = 0.0;
  bool diverged = false;
  bool censored = false;  // error never exceeded the threshold
  Vec error_series;
};

// First index k with E(k) > threshold gives horizon k*dt*lambda_max; a series
// that never exceeds the threshold is censored at its full length.
HorizonResult predictability_horizon(const Vec& errors, double dt,
                                     double lambda_max,
                                     double threshold = 0.2);

struct HorizonEnsemble {
  std::vector<HorizonResult> per_ic;
  double mean_lt = 0.0;
  double std_lt = 0.0;  // sample standard deviation
  double mean_uncensored_lt = 0.0;
  int n_censored = 0;
  int n_diverged = 0;
  int count = 0;
};

HorizonEnsemble summarize(std::vector<HorizonResult> per_ic);

struct EnsembleConfig {
  int n_ics = 100;
  double prediction_lt = 20.0;  // per-member autonomous window
  int sync_steps = 100;         // teacher-forced steps before prediction
  double spacing_lt = 1.0;      // minimum gap between member start points
  double threshold = 0.2;
  double divergence_bound = 1e6;
  std::uint64_t seed = 0;
  Eigen::Index first_start = 0;  // earliest usable row of the reference
};

// Members start at seed-jittered points along `reference`, spaced at least
// spacing_lt apart; each synchronizes on true data, then runs autonomously.
HorizonEnsemble run_ensemble(const AnyEsn& model, const Trajectory& reference,
                             const SystemModel& system,
                             const EnsembleConfig& cfg);

}  // namespace piesn
