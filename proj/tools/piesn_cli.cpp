#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "piesn/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", args.config_file,
                    "Experiment config file (key = value lines)");
    cmd->add_option("--set", args.sets,
                    "Override a config key, e.g. --set n_x=400")
        ->take_all();
    cmd->add_option("--seed", args.seed, "Master seed override");
  }
  cmd->add_option("--out", args.out,
                  "Output directory (default: $PIESN_OUT_ROOT/<command>)");
  cmd->add_flag("--force", args.force, "Overwrite existing outputs");
}

piesn::ExperimentConfig make_config(const CommonArgs& args) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--set expects key=value, got: " + s);
    }
    pairs.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }

  piesn::ExperimentConfig cfg;
  if (!args.config_file.empty()) {
    cfg = piesn::load_config_file(args.config_file);
    for (const auto& [k, v] : pairs) {
      if (k == "system" && v != cfg.system) {
        throw CLI::ValidationError(
            "set the system in the config file rather than via --set");
      }
    }
  } else {
    std::string system = "lorenz";
    for (const auto& [k, v] : pairs) {
      if (k == "system") system = v;
    }
    cfg = piesn::default_config(system);
  }
  for (const auto& [k, v] : pairs) {
    if (k == "system") continue;
    piesn::apply_config_key(cfg, k, v);
  }
  if (args.seed) {
    cfg.master_seed = *args.seed;
  }
  return cfg;
}

fs::path resolve_out(const CommonArgs& args, const std::string& command) {
  if (!args.out.empty()) {
    return args.out;
  }
  if (const char* root = std::getenv("PIESN_OUT_ROOT")) {
    return fs::path(root) / command;
  }
  throw CLI::ValidationError("--out is required (or set PIESN_OUT_ROOT)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed echo state network experiments"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  auto* gen = app.add_subcommand("generate", "Generate a benchmark dataset");
  add_common(gen, gen_args);

  CommonArgs train_args;
  std::string train_data;
  auto* train = app.add_subcommand("train", "Train a network on a dataset");
  add_common(train, train_args);
  train->add_option("--data", train_data, "Dataset directory")->required();

  CommonArgs pred_args;
  std::string pred_model, pred_data;
  Eigen::Index pred_steps = 0;
  auto* predict =
      app.add_subcommand("predict", "Autonomous prediction from a model");
  add_common(predict, pred_args, /*with_config=*/false);
  predict->add_option("--model", pred_model, "Model file")->required();
  predict->add_option("--data", pred_data, "Dataset directory")->required();
  predict->add_option("--steps", pred_steps, "Prediction steps")->required();

  CommonArgs ens_args;
  std::string ens_model, ens_data;
  auto* ensemble = app.add_subcommand(
      "ensemble", "Predictability-horizon ensemble for a trained model");
  add_common(ensemble, ens_args);
  ensemble->add_option("--model", ens_model, "Model file")->required();
  ensemble->add_option("--data", ens_data, "Dataset directory")->required();

  CommonArgs sweep_args;
  int jobs = 1;
  auto* sweep =
      app.add_subcommand("sweep", "Reservoir-size sweep over variants");
  add_common(sweep, sweep_args);
  sweep->add_option("--jobs", jobs, "Parallel sweep cells")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return piesn::cmd_generate(make_config(gen_args),
                                 resolve_out(gen_args, "generate"),
                                 gen_args.force);
    }
    if (train->parsed()) {
      return piesn::cmd_train(make_config(train_args), train_data,
                              resolve_out(train_args, "train"),
                              train_args.force);
    }
    if (predict->parsed()) {
      return piesn::cmd_predict(pred_model, pred_data, pred_steps,
                                resolve_out(pred_args, "predict"),
                                pred_args.force);
    }
    if (ensemble->parsed()) {
      return piesn::cmd_ensemble(make_config(ens_args), ens_model, ens_data,
                                 resolve_out(ens_args, "ensemble"),
                                 ens_args.force);
    }
    if (sweep->parsed()) {
      return piesn::cmd_sweep(make_config(sweep_args),
                              resolve_out(sweep_args, "sweep"), jobs,
                              sweep_args.force);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
