#include <cmath>
#include <random>

#include <doctest.h>

#include "piesn/model_io.hpp"
#include "piesn/reservoir.hpp"
#include "test_support.hpp"

using namespace piesn;

namespace {

// Independent spectral-radius oracle.
double dense_rho(const SpMat& w) {
  return Eigen::EigenSolver<Mat>(Mat(w), false).eigenvalues().cwiseAbs().maxCoeff();
}

EsnWeights tiny_weights(int n_x, int n_io, double w_in_fill = 0.0) {
  EsnWeights w;
  w.hp.n_x = n_x;
  w.hp.n_u = w.hp.n_y = n_io;
  w.w_in = Mat::Constant(n_x, n_io, w_in_fill);
  w.w = SpMat(n_x, n_x);
  w.w_out = Mat::Zero(n_io, n_x);
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("reservoir");

TEST_CASE("generated input matrix has one nonzero per row within sigma_in") {
  const EsnHyperParams hp = lorenz_hyperparams(50, 1234);
  const EsnWeights w = generate_weights(hp);
  REQUIRE(w.w_in.rows() == 50);
  int total = 0;
  for (int r = 0; r < 50; ++r) {
    int row_nnz = 0;
    for (int c = 0; c < 3; ++c) {
      if (w.w_in(r, c) != 0.0) {
        ++row_nnz;
        CHECK(std::abs(w.w_in(r, c)) <= hp.sigma_in);
      }
    }
    CHECK(row_nnz == 1);
    total += row_nnz;
  }
  CHECK(total == 50);
}

TEST_CASE("recurrent matrix spectral radius equals the target") {
  for (const int n_x : {50, 200}) {
    for (const double target : {0.4, 0.9}) {
      EsnHyperParams hp = lorenz_hyperparams(n_x, 77 + n_x);
      hp.spectral_radius_target = target;
      const EsnWeights w = generate_weights(hp);
      CHECK(std::abs(spectral_radius(w.w) - target) <= 1e-6 * target);
      CHECK(std::abs(dense_rho(w.w) - target) <= 1e-6 * target);
    }
  }
}

TEST_CASE("recurrent matrix density matches the average connectivity") {
  const int n_x = 400;
  EsnHyperParams hp = lorenz_hyperparams(n_x, 5);
  const EsnWeights w = generate_weights(hp);
  const double expected = hp.avg_connectivity * n_x;
  const double sd = std::sqrt(expected);  // binomial, p small
  CHECK(std::abs(static_cast<double>(w.w.nonZeros()) - expected) < 6.0 * sd);
}

TEST_CASE("weight generation is deterministic in the seed") {
  const EsnHyperParams hp = cdv_hyperparams(80, 42);
  const EsnWeights a = generate_weights(hp);
  const EsnWeights b = generate_weights(hp);
  CHECK(a.w_in == b.w_in);
  CHECK(Mat(a.w) == Mat(b.w));

  EsnHyperParams hp2 = hp;
  hp2.seed = 43;
  const EsnWeights c = generate_weights(hp2);
  CHECK(Mat(a.w) != Mat(c.w));
}

TEST_CASE("hyperparameter validation") {
  EsnHyperParams hp = lorenz_hyperparams(10, 1);
  hp.spectral_radius_target = 1.5;
  CHECK_THROWS_AS(generate_weights(hp), std::invalid_argument);
  hp = lorenz_hyperparams(10, 1);
  hp.avg_connectivity = 0.0;
  CHECK_THROWS_AS(generate_weights(hp), std::invalid_argument);
  hp = lorenz_hyperparams(10, 1);
  hp.tikhonov_gamma = -1.0;
  CHECK_THROWS_AS(generate_weights(hp), std::invalid_argument);
}

TEST_CASE("step: zero weights map any input to the zero state") {
  const EsnWeights w = tiny_weights(4, 2);
  const Vec x = step(Vec::Zero(4), test::random_vec(2, 9), w);
  CHECK(x == Vec::Zero(4));
}

TEST_CASE("step: hand-evaluated tanh values") {
  EsnWeights w = tiny_weights(2, 1);
  w.w_in(0, 0) = 1.0;
  w.w_in(1, 0) = 0.5;
  Vec input(1);
  input << 0.1;
  const Vec x = step(Vec::Zero(2), input, w);
  CHECK(x(0) == std::tanh(0.1));
  CHECK(x(1) == std::tanh(0.05));
  CHECK(x(0) == doctest::Approx(0.0996680).epsilon(1e-6));
  CHECK(x(1) == doctest::Approx(0.0499792).epsilon(1e-6));
}

TEST_CASE("step output stays strictly inside (-1, 1)") {
  const EsnWeights w = generate_weights(lorenz_hyperparams(60, 3));
  Vec x = Vec::Zero(60);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> big(-50.0, 50.0);
  for (int n = 0; n < 20; ++n) {
    Vec u(3);
    for (int i = 0; i < 3; ++i) u(i) = big(gen);
    x = step(x, u, w);
    CHECK(x.cwiseAbs().maxCoeff() < 1.0);
    CHECK(x.size() == 60);
  }
}

TEST_CASE("readout is the linear map W_out x") {
  EsnWeights w = tiny_weights(5, 2);
  CHECK(readout(test::random_vec(5, 1), w) == Vec::Zero(2));

  w.w_out(1, 3) = 1.0;  // selector
  const Vec x = test::random_vec(5, 2);
  const Vec y = readout(x, w);
  CHECK(y(0) == 0.0);
  CHECK(y(1) == x(3));
  CHECK(readout((2.5 * x).eval(), w) == (2.5 * y).eval());
}

TEST_CASE("teacher forcing: base case, alignment, and final state") {
  const EsnWeights w = generate_weights(lorenz_hyperparams(20, 6));
  Trajectory inputs;
  inputs.dt = 0.01;
  inputs.states = test::random_mat(6, 3, 8, 5.0);

  SUBCASE("washout 0, N_t = 2") {
    Trajectory two;
    two.dt = 0.01;
    two.states = inputs.states.topRows(2);
    const TeacherForcedRun run = run_teacher_forced(w, two, 0);
    REQUIRE(run.states.cols() == 1);
    CHECK(run.states.col(0) ==
          step(Vec::Zero(20), two.states.row(0).transpose(), w));
    CHECK(run.targets.col(0) == two.states.row(1).transpose());
  }

  SUBCASE("columns reproduce sequential step calls; targets are shifted inputs") {
    const Eigen::Index washout = 2;
    const TeacherForcedRun run = run_teacher_forced(w, inputs, washout);
    REQUIRE(run.states.cols() == inputs.n_steps() - 1 - washout);

    Vec x = Vec::Zero(20);
    for (Eigen::Index n = 0; n < inputs.n_steps(); ++n) {
      x = step(x, inputs.states.row(n).transpose(), w);
      const Eigen::Index k = n - washout;
      if (k >= 0 && k < run.states.cols()) {
        CHECK(run.states.col(k) == x);
        CHECK(run.targets.col(k) == inputs.states.row(n + 1).transpose());
      }
    }
    CHECK(run.final_state == x);
  }

  SUBCASE("washout >= N_t - 1 is rejected") {
    CHECK_THROWS_AS(run_teacher_forced(w, inputs, 5), std::invalid_argument);
  }
}

TEST_CASE("echo state property: initial-state memory fades") {
  const SystemModel lorenz = make_lorenz();
  const Trajectory data =
      generate_trajectory(lorenz, spun_up_state(lorenz, 0.01), 0.01, 301);

  const SystemModel cdv = make_cdv();
  const Trajectory cdv_data =
      generate_trajectory(cdv, spun_up_state(cdv, 0.1), 0.1, 301);

  const auto fading = [](const EsnWeights& w, const Trajectory& inputs,
                         std::uint64_t seed) {
    Vec xa = Vec::Zero(w.hp.n_x);
    Vec xb(w.hp.n_x);
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < w.hp.n_x; ++i) xb(i) = unit(gen);
    for (Eigen::Index n = 0; n <= 200; ++n) {
      xa = step(xa, inputs.states.row(n).transpose(), w);
      xb = step(xb, inputs.states.row(n).transpose(), w);
    }
    return (xa - xb).norm();
  };

  CHECK(fading(generate_weights(lorenz_hyperparams(100, 10)), data, 1) < 1e-8);
  CHECK(fading(generate_weights(cdv_hyperparams(100, 11)), cdv_data, 2) < 1e-8);
}

TEST_CASE("autonomous run: single readout, zero feedback, divergence flag") {
  EsnWeights w = generate_weights(lorenz_hyperparams(30, 9));

  SUBCASE("n_steps = 1 is a single readout of x0") {
    w.w_out = test::random_mat(3, 30, 5);
    const Vec x0 = test::random_vec(30, 6, 0.5);
    const AutonomousRun run = run_autonomous(w, x0, 1);
    REQUIRE(run.predictions.rows() == 1);
    CHECK(run.predictions.row(0).transpose() == readout(x0, w));
    CHECK_FALSE(run.diverged);
  }

  SUBCASE("zero W_out produces identically zero predictions") {
    const AutonomousRun run = run_autonomous(w, test::random_vec(30, 7, 0.5), 10);
    CHECK(run.predictions == Mat::Zero(10, 3));
  }

  SUBCASE("exceeding the bound sets the flag and truncates") {
    w.w_out = Mat::Constant(3, 30, 1.0);
    const Vec x0 = Vec::Ones(30);
    const AutonomousRun run = run_autonomous(w, x0, 10, 5.0);
    CHECK(run.diverged);
    CHECK(run.divergence_step == 0);
    CHECK(run.predictions.rows() == 1);
  }
}

TEST_CASE("hybrid step: unperturbed model reproduces the true euler step") {
  const SystemModel lorenz = make_lorenz();
  const HybridEsnWeights w = generate_hybrid_weights(
      lorenz_hyperparams(40, 12), lorenz, PerturbedParam::rho, 0.0);
  const Vec u = test::random_vec(3, 3, 5.0);
  const Vec expected =
      euler_step(u, 0.01, [&](const Vec& v) { return lorenz.rhs(v); });

  HybridEsnWeights probe = w;
  probe.w_out = Mat::Zero(3, 43);
  probe.w_out.block(0, 40, 3, 3) = Mat::Identity(3, 3);  // y~ passthrough
  const auto [x_next, y] = hybrid_step_and_readout(probe, Vec::Zero(40), u, 0.01);
  CHECK(y == expected);
  CHECK(x_next.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("hybrid approximate model: epsilon = 1 doubles rho") {
  const SystemModel lorenz = make_lorenz();
  const HybridEsnWeights w = generate_hybrid_weights(
      lorenz_hyperparams(10, 13), lorenz, PerturbedParam::rho, 1.0);
  Vec u(3);
  u << 1, 1, 1;
  const Vec f = w.approx_model.rhs(u);
  CHECK(f(1) == doctest::Approx(54.0).epsilon(1e-14));  // 1*(56-1)-1
}

TEST_CASE("hybrid with zeroed model slots reduces to the plain ESN") {
  const SystemModel lorenz = make_lorenz();
  const EsnHyperParams hp = lorenz_hyperparams(30, 21);
  HybridEsnWeights hybrid =
      generate_hybrid_weights(hp, lorenz, PerturbedParam::rho, 0.05);
  hybrid.w_in.rightCols(3).setZero();
  hybrid.w_out = test::random_mat(3, 33, 17, 0.1);
  hybrid.w_out.rightCols(3).setZero();

  EsnWeights plain;
  plain.hp = hp;
  plain.w_in = hybrid.w_in.leftCols(3);
  plain.w = hybrid.w;
  plain.w_out = hybrid.w_out.leftCols(30);

  Trajectory inputs;
  inputs.dt = 0.01;
  inputs.states =
      generate_trajectory(lorenz, spun_up_state(lorenz, 0.01), 0.01, 40).states;

  const HybridTeacherForcedRun hrun = run_hybrid_teacher_forced(hybrid, inputs, 3);
  const TeacherForcedRun prun = run_teacher_forced(plain, inputs, 3);
  CHECK((hrun.aug_states.topRows(30) - prun.states).cwiseAbs().maxCoeff() <
        1e-14);

  const AutonomousRun ha =
      run_hybrid_autonomous(hybrid, hrun.final_state, hrun.final_model_pred, 20,
                            0.01);
  const AutonomousRun pa = run_autonomous(plain, prun.final_state, 20);
  CHECK((ha.predictions - pa.predictions).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forecaster matches manual teacher forcing plus autonomous run") {
  const SystemModel lorenz = make_lorenz();
  EsnWeights w = generate_weights(lorenz_hyperparams(25, 30));
  w.w_out = test::random_mat(3, 25, 31, 0.2);
  const Trajectory data =
      generate_trajectory(lorenz, spun_up_state(lorenz, 0.01), 0.01, 60);

  Forecaster fc2(AnyEsn(w), 0.01);
  fc2.synchronize(data.states.topRows(50));

  Vec x = Vec::Zero(25);
  for (int n = 0; n < 50; ++n) {
    x = step(x, data.states.row(n).transpose(), w);
  }
  CHECK(fc2.state() == x);
  const AutonomousRun a = fc2.predict(10);
  const AutonomousRun b = run_autonomous(w, x, 10);
  CHECK(a.predictions == b.predictions);
}

TEST_CASE("model persistence round trip is bit-exact") {
  const SystemModel lorenz = make_lorenz();
  test::TempDir dir("model");

  SUBCASE("plain") {
    EsnWeights w = generate_weights(lorenz_hyperparams(35, 91));
    w.w_out = test::random_mat(3, 35, 92, 0.3);
    TrainedModel m;
    m.info = {1, "lorenz", "esn", 100, 0.01, 91, "test"};
    m.system = lorenz;
    m.weights = w;
    save_model(m, dir.path() / "m.json");
    const TrainedModel back = load_model(dir.path() / "m.json");
    const auto& bw = std::get<EsnWeights>(back.weights);
    CHECK(bw.w_in == w.w_in);
    CHECK(Mat(bw.w) == Mat(w.w));
    CHECK(bw.w_out == w.w_out);
    CHECK(bw.hp.seed == w.hp.seed);
    CHECK(bw.hp.sigma_in == w.hp.sigma_in);
    CHECK(back.info.variant == "esn");
    CHECK(back.info.washout == 100);
    CHECK(back.system.lambda_max == lorenz.lambda_max);
  }

  SUBCASE("hybrid") {
    HybridEsnWeights w = generate_hybrid_weights(
        lorenz_hyperparams(20, 93), lorenz, PerturbedParam::rho, 0.05);
    w.w_out = test::random_mat(3, 23, 94, 0.3);
    TrainedModel m;
    m.info = {1, "lorenz", "hybrid-rho-0.05", 100, 0.01, 93, "test"};
    m.system = lorenz;
    m.weights = w;
    save_model(m, dir.path() / "h.json");
    const TrainedModel back = load_model(dir.path() / "h.json");
    const auto& bw = std::get<HybridEsnWeights>(back.weights);
    CHECK(bw.w_in == w.w_in);
    CHECK(Mat(bw.w) == Mat(w.w));
    CHECK(bw.w_out == w.w_out);
    CHECK(bw.epsilon_perturb == 0.05);
    CHECK(bw.approx_model.lorenz.rho == w.approx_model.lorenz.rho);
  }
}

TEST_SUITE_END();
