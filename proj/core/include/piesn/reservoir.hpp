#pragma once

#include <cstdint>
#include <variant>

#include "piesn/dynamics.hpp"
#include "piesn/types.hpp"

namespace piesn {

struct EsnHyperParams {
  int n_x = 200;
  int n_u = 3;
  int n_y = 3;
  double sigma_in = 0.15;
  double spectral_radius_target = 0.4;  // Lambda, in (0, 1]
  double avg_connectivity = 3.0;        // <d>
  double tikhonov_gamma = 1e-4;
  std::uint64_t seed = 0;
};

// Paper defaults per benchmark system (reservoir size and seed supplied).
EsnHyperParams lorenz_hyperparams(int n_x, std::uint64_t seed);
EsnHyperParams cdv_hyperparams(int n_x, std::uint64_t seed);

struct EsnWeights {
  Mat w_in;   // n_x x n_u, one nonzero per row
  SpMat w;    // n_x x n_x, spectral radius = Lambda
  Mat w_out;  // n_y x n_x, zero until trained
  EsnHyperParams hp;
};

// ESN augmented with an approximate model (one parameter scaled by 1+eps).
// The model's one-step Euler prediction is appended to both the input and
// the readout, so w_in has n_u + n_y columns and w_out n_x + n_y columns.
struct HybridEsnWeights {
  Mat w_in;   // n_x x (n_u + n_y)
  SpMat w;    // n_x x n_x
  Mat w_out;  // n_y x (n_x + n_y)
  SystemModel approx_model;
  PerturbedParam perturbed = PerturbedParam::rho;
  double epsilon_perturb = 0.0;
  EsnHyperParams hp;
};

using AnyEsn = std::variant<EsnWeights, HybridEsnWeights>;

// Largest absolute eigenvalue. Power iteration fast path (1e-9 relative
// tolerance, 1e4 iteration cap) with a dense eigensolver fallback when the
// dominant eigenvalue is complex and the iteration stalls.
double spectral_radius(const SpMat& w);

EsnWeights generate_weights(const EsnHyperParams& hp);
HybridEsnWeights generate_hybrid_weights(const EsnHyperParams& hp,
                                         const SystemModel& true_model,
                                         PerturbedParam which, double epsilon);

Vec step(const Vec& state, const Vec& input, const EsnWeights& weights);
Vec readout(const Vec& state, const EsnWeights& weights);

struct TeacherForcedRun {
  Mat states;       // n_x x n_kept, column k = x(washout+1+k)
  Mat targets;      // n_y x n_kept, column k = u(washout+2+k)
  Vec final_state;  // state after feeding every input row
};

TeacherForcedRun run_teacher_forced(const EsnWeights& weights,
                                    const Trajectory& inputs,
                                    Eigen::Index washout,
                                    const Vec& x0 = Vec());

struct AutonomousRun {
  Mat predictions;  // rows = time
  bool diverged = false;
  Eigen::Index divergence_step = -1;  // first row with |y| > bound
};

AutonomousRun run_autonomous(const EsnWeights& weights, const Vec& x0,
                             Eigen::Index n_steps,
                             double divergence_bound = 1e6);

// One hybrid update: y~ = Euler step of the approximate model from `input`,
// x' = tanh(W_in [input; y~] + W x), y^ = W_out [x'; y~].
std::pair<Vec, Vec> hybrid_step_and_readout(const HybridEsnWeights& weights,
                                            const Vec& state, const Vec& input,
                                            double dt);

struct HybridTeacherForcedRun {
  Mat aug_states;        // (n_x + n_y) x n_kept, column = [x(n); y~(n)]
  Mat targets;           // n_y x n_kept
  Vec final_state;       // x after feeding every input row
  Vec final_model_pred;  // y~ for the last input row
};

HybridTeacherForcedRun run_hybrid_teacher_forced(
    const HybridEsnWeights& weights, const Trajectory& inputs,
    Eigen::Index washout);

AutonomousRun run_hybrid_autonomous(const HybridEsnWeights& weights,
                                    const Vec& x0, const Vec& ytilde0,
                                    Eigen::Index n_steps, double dt,
                                    double divergence_bound = 1e6);

// Stateful wrapper used for synchronize-then-predict evaluation; works for
// both plain and hybrid networks. Owns its copy of the weights, so instances
// are independent across threads.
class Forecaster {
 public:
  Forecaster(AnyEsn weights, double dt);

  void reset();
  void synchronize(const Mat& inputs);  // teacher-forced, rows = time
  AutonomousRun predict(Eigen::Index n_steps, double divergence_bound = 1e6);

  const Vec& state() const { return x_; }

 private:
  AnyEsn weights_;
  double dt_;
  Vec x_;
  Vec ytilde_;  // hybrid only: model prediction for the next step
};

}  // namespace piesn
