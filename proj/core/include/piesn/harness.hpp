#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "piesn/evaluation.hpp"
#include "piesn/model_io.hpp"
#include "piesn/training.hpp"

namespace piesn {

inline constexpr const char* kCodeVersion = "piesn-0.1.0";

struct ExperimentConfig {
  std::string system = "lorenz";  // lorenz | cdv
  std::string variant = "esn";    // esn | pi_esn | hybrid
  std::string hybrid_param = "rho";
  double hybrid_epsilon = 0.05;
  int n_x = 200;
  Eigen::Index n_train = 1000;
  Eigen::Index n_p = 1000;
  double dt = 0.01;
  std::optional<double> snr_db;
  std::uint64_t master_seed = 1;
  int ensemble_size = 100;
  double prediction_lt = 20.0;
  double spacing_lt = 1.0;
  int sync_steps = 100;
  Eigen::Index washout = 100;
  Eigen::Index n_continuation = 0;  // 0 = sized from the ensemble settings
  std::string scheme = "euler";
  double physics_weight = 1.0;
  bool full_gradient = true;
  int lbfgs_max_iterations = 500;
  double lbfgs_grad_tolerance = 1e-8;
  double divergence_bound = 1e6;
  std::vector<int> sweep_n_x = {50, 100, 200, 400, 600, 1000};
  std::vector<std::string> sweep_variants = {"esn", "pi_esn"};
};

// Paper defaults: Lorenz (N_t=1000, dt=0.01, N_p=1000, 20 LT window),
// CDV (N_t=9000, dt=0.1, N_p=3000, 12 LT window).
ExperimentConfig default_config(const std::string& system);

// `key = value` assignments; unknown keys are rejected.
void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value);
ExperimentConfig load_config_file(const std::filesystem::path& path);

std::uint64_t config_hash(const ExperimentConfig& cfg);
SystemModel system_for(const ExperimentConfig& cfg);
std::string variant_label(const ExperimentConfig& cfg);
Eigen::Index required_reference_rows(const ExperimentConfig& cfg);

struct Dataset {
  SystemModel model;
  Trajectory truth;  // clean series: training window plus continuation
  Trajectory train;  // first n_train rows, noisy when snr_db is set
  Eigen::Index n_train = 0;
  std::optional<double> snr_db;
  std::uint64_t master_seed = 0;
};

Dataset build_dataset(const ExperimentConfig& cfg);

struct TrainOutput {
  TrainedModel model;
  std::vector<LossReport> history;
  OptimizationTrace trace;   // pi_esn only
  bool optimizer_failed = false;
};

TrainOutput train_variant(const ExperimentConfig& cfg, const Dataset& data);

HorizonEnsemble evaluate_model(const TrainedModel& model, const Dataset& data,
                               const ExperimentConfig& cfg);

// Commands return process exit codes: 0 on success, 1 when a requested
// artifact could not be produced, 3 when training hit a line-search failure
// (best-so-far model still saved).
int cmd_generate(const ExperimentConfig& cfg,
                 const std::filesystem::path& out_dir, bool force);
int cmd_train(const ExperimentConfig& cfg,
              const std::filesystem::path& data_dir,
              const std::filesystem::path& out_dir, bool force);
int cmd_predict(const std::filesystem::path& model_file,
                const std::filesystem::path& data_dir, Eigen::Index n_steps,
                const std::filesystem::path& out_dir, bool force);
int cmd_ensemble(const ExperimentConfig& cfg,
                 const std::filesystem::path& model_file,
                 const std::filesystem::path& data_dir,
                 const std::filesystem::path& out_dir, bool force);

struct SweepOutcome {
  int cells_run = 0;
  int cells_skipped = 0;
  int cells_failed = 0;
};

int cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
              int jobs, bool force, SweepOutcome* outcome = nullptr);

// Dataset directory I/O (truth.csv, train.csv, manifest.json).
void write_dataset(const Dataset& data, const ExperimentConfig& cfg,
                   const std::filesystem::path& dir, bool force);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace piesn
