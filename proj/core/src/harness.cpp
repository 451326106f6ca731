#include "piesn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json_support.hpp"
#include "piesn/seeds.hpp"
#include "piesn/trajectory_io.hpp"

namespace piesn {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    out.push_back(trim(item));
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected boolean, got: " + v);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ordered_json config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["system"] = c.system;
  j["variant"] = c.variant;
  j["hybrid_param"] = c.hybrid_param;
  j["hybrid_epsilon"] = c.hybrid_epsilon;
  j["n_x"] = c.n_x;
  j["n_train"] = c.n_train;
  j["n_p"] = c.n_p;
  j["dt"] = c.dt;
  if (c.snr_db) {
    j["snr_db"] = *c.snr_db;
  } else {
    j["snr_db"] = nullptr;
  }
  j["master_seed"] = c.master_seed;
  j["ensemble_size"] = c.ensemble_size;
  j["prediction_lt"] = c.prediction_lt;
  j["spacing_lt"] = c.spacing_lt;
  j["sync_steps"] = c.sync_steps;
  j["washout"] = c.washout;
  j["n_continuation"] = c.n_continuation;
  j["scheme"] = c.scheme;
  j["physics_weight"] = c.physics_weight;
  j["full_gradient"] = c.full_gradient;
  j["lbfgs_max_iterations"] = c.lbfgs_max_iterations;
  j["lbfgs_grad_tolerance"] = c.lbfgs_grad_tolerance;
  j["divergence_bound"] = c.divergence_bound;
  j["sweep_n_x"] = c.sweep_n_x;
  j["sweep_variants"] = c.sweep_variants;
  return j;
}

void write_json_file(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << j.dump(1) << "\n";
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open: " + path.string());
  }
  ordered_json j;
  in >> j;
  return j;
}

void refuse_overwrite(const std::vector<fs::path>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths) {
    if (fs::exists(p)) {
      throw std::runtime_error("refusing to overwrite " + p.string() +
                               " (use --force)");
    }
  }
}

// Hash of the fields that determine dataset contents.
std::uint64_t dataset_hash(const ExperimentConfig& c) {
  ordered_json j;
  j["system"] = c.system;
  j["dt"] = c.dt;
  j["n_train"] = c.n_train;
  j["rows_total"] = c.n_train + (c.n_continuation > 0
                                     ? c.n_continuation
                                     : required_reference_rows(c) - c.n_train);
  if (c.snr_db) {
    j["snr_db"] = *c.snr_db;
  } else {
    j["snr_db"] = nullptr;
  }
  j["master_seed"] = c.master_seed;
  j["scheme"] = c.scheme;
  return fnv1a(j.dump());
}

// Hash of everything except the sweep grids, so a sweep directory can be
// extended with more cells.
std::uint64_t sweep_base_hash(const ExperimentConfig& c) {
  ordered_json j = config_to_json(c);
  j.erase("sweep_n_x");
  j.erase("sweep_variants");
  j.erase("n_x");
  j.erase("variant");
  j.erase("hybrid_param");
  j.erase("hybrid_epsilon");
  return fnv1a(j.dump());
}

}  // namespace

ExperimentConfig default_config(const std::string& system) {
  ExperimentConfig cfg;
  cfg.system = system;
  if (system == "lorenz") {
    cfg.n_train = 1000;
    cfg.n_p = 1000;
    cfg.dt = 0.01;
    cfg.prediction_lt = 20.0;
  } else if (system == "cdv") {
    cfg.n_train = 9000;
    cfg.n_p = 3000;
    cfg.dt = 0.1;
    cfg.prediction_lt = 12.0;
  } else {
    throw std::invalid_argument("unknown system: " + system);
  }
  return cfg;
}

void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "system") {
    if (value != "lorenz" && value != "cdv") {
      throw std::invalid_argument("unknown system: " + value);
    }
    cfg.system = value;
  } else if (key == "variant") {
    if (value != "esn" && value != "pi_esn" && value != "hybrid") {
      throw std::invalid_argument("unknown variant: " + value);
    }
    cfg.variant = value;
  } else if (key == "hybrid_param") {
    (void)perturbed_param_from_string(value);
    cfg.hybrid_param = value;
  } else if (key == "hybrid_epsilon") {
    cfg.hybrid_epsilon = std::stod(value);
  } else if (key == "n_x") {
    cfg.n_x = std::stoi(value);
  } else if (key == "n_train") {
    cfg.n_train = std::stoll(value);
  } else if (key == "n_p") {
    cfg.n_p = std::stoll(value);
  } else if (key == "dt") {
    cfg.dt = std::stod(value);
  } else if (key == "snr_db") {
    if (value == "none" || value.empty()) {
      cfg.snr_db.reset();
    } else {
      cfg.snr_db = std::stod(value);
    }
  } else if (key == "master_seed") {
    cfg.master_seed = std::stoull(value);
  } else if (key == "ensemble_size") {
    cfg.ensemble_size = std::stoi(value);
  } else if (key == "prediction_lt") {
    cfg.prediction_lt = std::stod(value);
  } else if (key == "spacing_lt") {
    cfg.spacing_lt = std::stod(value);
  } else if (key == "sync_steps") {
    cfg.sync_steps = std::stoi(value);
  } else if (key == "washout") {
    cfg.washout = std::stoll(value);
  } else if (key == "n_continuation") {
    cfg.n_continuation = std::stoll(value);
  } else if (key == "scheme") {
    (void)scheme_from_string(value);
    cfg.scheme = value;
  } else if (key == "physics_weight") {
    cfg.physics_weight = std::stod(value);
  } else if (key == "full_gradient") {
    cfg.full_gradient = parse_bool(value);
  } else if (key == "lbfgs_max_iterations") {
    cfg.lbfgs_max_iterations = std::stoi(value);
  } else if (key == "lbfgs_grad_tolerance") {
    cfg.lbfgs_grad_tolerance = std::stod(value);
  } else if (key == "divergence_bound") {
    cfg.divergence_bound = std::stod(value);
  } else if (key == "sweep_n_x") {
    cfg.sweep_n_x.clear();
    for (const auto& v : split(value, ',')) {
      cfg.sweep_n_x.push_back(std::stoi(v));
    }
  } else if (key == "sweep_variants") {
    cfg.sweep_variants = split(value, ',');
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config: " + path.string());
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("malformed config line: " + line);
    }
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  std::string system = "lorenz";
  for (const auto& [k, v] : pairs) {
    if (k == "system") system = v;
  }
  ExperimentConfig cfg = default_config(system);
  for (const auto& [k, v] : pairs) {
    if (k == "system") continue;
    apply_config_key(cfg, k, v);
  }
  return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a(config_to_json(cfg).dump());
}

SystemModel system_for(const ExperimentConfig& cfg) {
  return cfg.system == "lorenz" ? make_lorenz() : make_cdv();
}

std::string variant_label(const ExperimentConfig& cfg) {
  if (cfg.variant != "hybrid") return cfg.variant;
  std::ostringstream oss;
  oss << "hybrid-" << cfg.hybrid_param << "-" << cfg.hybrid_epsilon;
  return oss.str();
}

Eigen::Index required_reference_rows(const ExperimentConfig& cfg) {
  const SystemModel model = system_for(cfg);
  const double lt_steps = 1.0 / (model.lambda_max * cfg.dt);
  const auto n_pred =
      static_cast<Eigen::Index>(std::ceil(cfg.prediction_lt * lt_steps));
  const auto spacing =
      static_cast<Eigen::Index>(std::ceil(cfg.spacing_lt * lt_steps));
  const Eigen::Index slot = 2 * spacing;
  const Eigen::Index last_start =
      cfg.n_train + (cfg.ensemble_size - 1) * slot + (spacing - 1);
  return last_start + cfg.sync_steps + n_pred + 1;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  Dataset data;
  data.model = system_for(cfg);
  data.n_train = cfg.n_train;
  data.snr_db = cfg.snr_db;
  data.master_seed = cfg.master_seed;
  const Scheme scheme = scheme_from_string(cfg.scheme);
  const Vec u0 = spun_up_state(data.model, cfg.dt, 1000, scheme);
  const Eigen::Index total =
      cfg.n_train + (cfg.n_continuation > 0
                         ? cfg.n_continuation
                         : required_reference_rows(cfg) - cfg.n_train);
  data.truth = generate_trajectory(data.model, u0, cfg.dt, total, scheme,
                                   cfg.divergence_bound);
  data.train.dt = cfg.dt;
  data.train.states = data.truth.states.topRows(cfg.n_train);
  if (cfg.snr_db) {
    data.train = add_measurement_noise(data.train, *cfg.snr_db,
                                       derive_seed(cfg.master_seed, "noise"));
  }
  return data;
}

TrainOutput train_variant(const ExperimentConfig& cfg, const Dataset& data) {
  const std::uint64_t weights_seed =
      derive_seed(cfg.master_seed, "weights", static_cast<std::uint64_t>(cfg.n_x));
  const EsnHyperParams hp = cfg.system == "lorenz"
                                ? lorenz_hyperparams(cfg.n_x, weights_seed)
                                : cdv_hyperparams(cfg.n_x, weights_seed);
  const TrainingSet ts{data.train, cfg.washout};

  TrainOutput out;
  out.model.info.system = cfg.system;
  out.model.info.variant = variant_label(cfg);
  out.model.info.washout = cfg.washout;
  out.model.info.dt = cfg.dt;
  out.model.info.master_seed = cfg.master_seed;
  out.model.info.provenance = "config:" + to_hex(config_hash(cfg));
  out.model.system = data.model;

  if (cfg.variant == "esn") {
    EsnWeights w = train_esn(generate_weights(hp), ts);
    const TeacherForcedRun run = run_teacher_forced(w, ts.inputs, ts.washout);
    const double e_d = data_loss(w.w_out, run.states, run.targets);
    out.history.push_back({e_d, 0.0, e_d});
    out.model.weights = std::move(w);
  } else if (cfg.variant == "pi_esn") {
    PhysicsConfig pc;
    pc.n_collocation = cfg.n_p;
    pc.model = data.model;
    pc.dt = cfg.dt;
    pc.physics_weight = cfg.physics_weight;
    pc.full_gradient = cfg.full_gradient;
    pc.divergence_bound = cfg.divergence_bound;
    LbfgsConfig lc;
    lc.max_iterations = cfg.lbfgs_max_iterations;
    lc.grad_tolerance = cfg.lbfgs_grad_tolerance;
    PiTrainResult r = train_pi_esn(generate_weights(hp), ts, pc, lc);
    out.history = std::move(r.history);
    out.trace = std::move(r.trace);
    out.optimizer_failed = r.optimizer_failed;
    out.model.weights = std::move(r.weights);
  } else if (cfg.variant == "hybrid") {
    HybridEsnWeights w = generate_hybrid_weights(
        hp, data.model, perturbed_param_from_string(cfg.hybrid_param),
        cfg.hybrid_epsilon);
    w = train_hybrid(std::move(w), ts, hp.tikhonov_gamma);
    const HybridTeacherForcedRun run =
        run_hybrid_teacher_forced(w, ts.inputs, ts.washout);
    const double e_d = data_loss(w.w_out, run.aug_states, run.targets);
    out.history.push_back({e_d, 0.0, e_d});
    out.model.weights = std::move(w);
  } else {
    throw std::invalid_argument("unknown variant: " + cfg.variant);
  }
  return out;
}

HorizonEnsemble evaluate_model(const TrainedModel& model, const Dataset& data,
                               const ExperimentConfig& cfg) {
  EnsembleConfig ec;
  ec.n_ics = cfg.ensemble_size;
  ec.prediction_lt = cfg.prediction_lt;
  ec.sync_steps = cfg.sync_steps;
  ec.spacing_lt = cfg.spacing_lt;
  ec.divergence_bound = cfg.divergence_bound;
  ec.seed = derive_seed(cfg.master_seed, "ensemble");
  ec.first_start = data.n_train;
  return run_ensemble(model.weights, data.truth, model.system, ec);
}

void write_dataset(const Dataset& data, const ExperimentConfig& cfg,
                   const fs::path& dir, bool force) {
  fs::create_directories(dir);
  const fs::path truth_path = dir / "truth.csv";
  const fs::path train_path = dir / "train.csv";
  const fs::path manifest_path = dir / "manifest.json";
  refuse_overwrite({truth_path, train_path, manifest_path}, force);

  save_trajectory_csv(data.truth, truth_path);
  save_trajectory_csv(data.train, train_path);

  ordered_json m;
  m["type"] = "dataset";
  m["code_version"] = kCodeVersion;
  m["config"] = config_to_json(cfg);
  m["config_hash"] = to_hex(config_hash(cfg));
  m["dataset_hash"] = to_hex(dataset_hash(cfg));
  m["system"] = system_to_json(data.model);
  m["rows_total"] = data.truth.n_steps();
  m["rows_train"] = data.n_train;
  if (data.snr_db) {
    m["snr_db"] = *data.snr_db;
    m["noise_seed"] = derive_seed(data.master_seed, "noise");
  } else {
    m["snr_db"] = nullptr;
  }
  m["master_seed"] = data.master_seed;
  write_json_file(m, manifest_path);
}

Dataset load_dataset(const fs::path& dir) {
  const ordered_json m = read_json_file(dir / "manifest.json");
  if (m.at("type").get<std::string>() != "dataset") {
    throw std::runtime_error("not a dataset manifest: " + dir.string());
  }
  Dataset data;
  data.model = system_from_json(m.at("system"));
  data.truth = load_trajectory_csv(dir / "truth.csv");
  data.train = load_trajectory_csv(dir / "train.csv");
  data.n_train = m.at("rows_train").get<Eigen::Index>();
  if (!m.at("snr_db").is_null()) {
    data.snr_db = m.at("snr_db").get<double>();
  }
  data.master_seed = m.at("master_seed").get<std::uint64_t>();
  if (data.train.n_steps() != data.n_train) {
    throw std::runtime_error("dataset train.csv row count mismatch");
  }
  return data;
}

namespace {

void write_loss_history(const std::vector<LossReport>& history,
                        const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << "iter,e_data,e_physics,e_total\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << i << "," << format_double(history[i].e_data) << ","
        << format_double(history[i].e_physics) << ","
        << format_double(history[i].e_total) << "\n";
  }
}

void write_trace(const OptimizationTrace& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << "iter,objective,grad_norm,step_len\n";
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& it = trace.iterations[i];
    out << i << "," << format_double(it.objective) << ","
        << format_double(it.grad_inf_norm) << ","
        << format_double(it.step_length) << "\n";
  }
}

void write_ensemble_csv(const HorizonEnsemble& ens, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << "ic_index,horizon_lt,diverged,censored\n";
  for (std::size_t i = 0; i < ens.per_ic.size(); ++i) {
    const auto& h = ens.per_ic[i];
    out << i << "," << format_double(h.horizon_lt) << "," << (h.diverged ? 1 : 0)
        << "," << (h.censored ? 1 : 0) << "\n";
  }
}

std::string summary_row(const std::string& label, int n_x,
                        const std::optional<double>& snr_db,
                        const HorizonEnsemble& ens) {
  std::ostringstream oss;
  oss << label << "," << n_x << "," << (snr_db ? format_double(*snr_db) : "")
      << "," << format_double(ens.mean_lt) << "," << format_double(ens.std_lt)
      << "," << ens.n_censored;
  return oss.str();
}

constexpr const char* kSummaryHeader = "model,n_x,noise_db,mean_lt,std_lt,n_censored";

int run_command(const char* name, const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int cmd_generate(const ExperimentConfig& cfg, const fs::path& out_dir,
                 bool force) {
  return run_command("generate", [&] {
    const Dataset data = build_dataset(cfg);
    write_dataset(data, cfg, out_dir, force);
    std::cout << "dataset: " << data.truth.n_steps() << " rows ("
              << data.n_train << " training) in " << out_dir.string() << "\n";
    return 0;
  });
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& data_dir,
              const fs::path& out_dir, bool force) {
  return run_command("train", [&] {
    const Dataset data = load_dataset(data_dir);
    if (data.model.name != cfg.system) {
      throw std::runtime_error("dataset system '" + data.model.name +
                               "' does not match config system '" + cfg.system +
                               "'");
    }
    if (std::abs(data.truth.dt - cfg.dt) > 1e-12 * std::max(1.0, cfg.dt)) {
      throw std::runtime_error("dataset dt does not match config dt");
    }
    fs::create_directories(out_dir);
    const fs::path model_path = out_dir / "model.json";
    const fs::path history_path = out_dir / "loss_history.csv";
    const fs::path manifest_path = out_dir / "manifest.json";
    refuse_overwrite({model_path, history_path, manifest_path}, force);

    const TrainOutput out = train_variant(cfg, data);
    save_model(out.model, model_path);
    write_loss_history(out.history, history_path);
    if (cfg.variant == "pi_esn") {
      write_trace(out.trace, out_dir / "trace.csv");
    }

    ordered_json m;
    m["type"] = "model";
    m["code_version"] = kCodeVersion;
    m["config"] = config_to_json(cfg);
    m["config_hash"] = to_hex(config_hash(cfg));
    m["variant"] = variant_label(cfg);
    m["dataset"] = data_dir.string();
    m["optimizer_failed"] = out.optimizer_failed;
    m["final_e_total"] = out.history.empty() ? 0.0 : out.history.back().e_total;
    if (cfg.variant == "hybrid") {
      const auto& hy = std::get<HybridEsnWeights>(out.model.weights);
      m["hybrid"] = {{"perturbed_param", to_string(hy.perturbed)},
                     {"epsilon", hy.epsilon_perturb},
                     {"approx_model", system_to_json(hy.approx_model)}};
    }
    write_json_file(m, manifest_path);

    if (out.optimizer_failed) {
      std::cerr << "train: line search failed; best-so-far model saved\n";
      return 3;
    }
    return 0;
  });
}

int cmd_predict(const fs::path& model_file, const fs::path& data_dir,
                Eigen::Index n_steps, const fs::path& out_dir, bool force) {
  return run_command("predict", [&] {
    if (n_steps < 0) {
      throw std::invalid_argument("predict: n_steps must be >= 0");
    }
    const TrainedModel model = load_model(model_file);
    const Dataset data = load_dataset(data_dir);
    if (model.info.system != data.model.name) {
      throw std::runtime_error("model/dataset system mismatch");
    }
    fs::create_directories(out_dir);
    const fs::path pred_path = out_dir / "prediction.csv";
    const fs::path err_path = out_dir / "error.csv";
    const fs::path manifest_path = out_dir / "manifest.json";
    refuse_overwrite({pred_path, err_path, manifest_path}, force);

    const double dt = data.truth.dt;
    const double lambda = model.system.lambda_max;
    const Eigen::Index n_train = data.n_train;

    Forecaster fc(model.weights, dt);
    fc.synchronize(data.train.states);
    AutonomousRun run;
    run.predictions.resize(0, data.model.dim);
    if (n_steps > 0) {
      run = fc.predict(n_steps, 1e6);
    }

    const Eigen::Index dim = data.model.dim;
    std::ofstream pred_out(pred_path);
    pred_out << "t,t_lt";
    for (Eigen::Index i = 0; i < dim; ++i) pred_out << ",u" << (i + 1);
    pred_out << "\n";
    for (Eigen::Index k = 0; k < run.predictions.rows(); ++k) {
      const double t = static_cast<double>(n_train + k) * dt;
      const double t_lt = static_cast<double>(k + 1) * dt * lambda;
      pred_out << format_double(t) << "," << format_double(t_lt);
      for (Eigen::Index i = 0; i < dim; ++i) {
        pred_out << "," << format_double(run.predictions(k, i));
      }
      pred_out << "\n";
    }
    pred_out.close();

    const Eigen::Index avail = data.truth.n_steps() - n_train;
    const Eigen::Index n_err = std::min(run.predictions.rows(), avail);
    Vec errors(0);
    if (n_err > 0) {
      errors = normalized_error(run.predictions.topRows(n_err),
                                data.truth.states.middleRows(n_train, n_err),
                                rms_norm(data.truth.states));
    }
    std::ofstream err_out(err_path);
    err_out << "t,t_lt,error\n";
    for (Eigen::Index k = 0; k < errors.size(); ++k) {
      const double t = static_cast<double>(n_train + k) * dt;
      const double t_lt = static_cast<double>(k + 1) * dt * lambda;
      err_out << format_double(t) << "," << format_double(t_lt) << ","
              << format_double(errors(k)) << "\n";
    }
    err_out.close();

    ordered_json m;
    m["type"] = "prediction";
    m["code_version"] = kCodeVersion;
    m["model"] = model_file.string();
    m["dataset"] = data_dir.string();
    m["n_steps"] = n_steps;
    m["diverged"] = run.diverged;
    m["divergence_step"] = run.divergence_step;
    if (errors.size() > 0) {
      const HorizonResult h = predictability_horizon(errors, dt, lambda);
      m["horizon_lt"] = h.horizon_lt;
      m["horizon_censored"] = h.censored;
    }
    write_json_file(m, manifest_path);
    return 0;
  });
}

int cmd_ensemble(const ExperimentConfig& cfg, const fs::path& model_file,
                 const fs::path& data_dir, const fs::path& out_dir, bool force) {
  return run_command("ensemble", [&] {
    const TrainedModel model = load_model(model_file);
    const Dataset data = load_dataset(data_dir);
    if (model.info.system != data.model.name) {
      throw std::runtime_error("model/dataset system mismatch");
    }
    fs::create_directories(out_dir);
    const fs::path ens_path = out_dir / "ensemble.csv";
    const fs::path summary_path = out_dir / "summary.csv";
    const fs::path manifest_path = out_dir / "manifest.json";
    refuse_overwrite({ens_path, summary_path, manifest_path}, force);

    const HorizonEnsemble ens = evaluate_model(model, data, cfg);
    write_ensemble_csv(ens, ens_path);

    const int n_x = std::visit([](const auto& w) { return w.hp.n_x; },
                               model.weights);
    std::ofstream sum_out(summary_path);
    sum_out << kSummaryHeader << "\n"
            << summary_row(model.info.variant, n_x, data.snr_db, ens) << "\n";
    sum_out.close();

    ordered_json m;
    m["type"] = "ensemble";
    m["code_version"] = kCodeVersion;
    m["model"] = model_file.string();
    m["dataset"] = data_dir.string();
    m["config"] = config_to_json(cfg);
    m["mean_lt"] = ens.mean_lt;
    m["std_lt"] = ens.std_lt;
    m["mean_uncensored_lt"] = ens.mean_uncensored_lt;
    m["n_censored"] = ens.n_censored;
    m["n_diverged"] = ens.n_diverged;
    m["count"] = ens.count;
    write_json_file(m, manifest_path);

    std::cout << "ensemble: mean " << ens.mean_lt << " LT, std " << ens.std_lt
              << " LT over " << ens.count << " members\n";
    return 0;
  });
}

namespace {

struct SweepCell {
  std::string key;
  ExperimentConfig cfg;
};

ExperimentConfig cell_config(const ExperimentConfig& base,
                             const std::string& spec, int n_x) {
  ExperimentConfig cfg = base;
  cfg.n_x = n_x;
  const auto parts = split(spec, ':');
  cfg.variant = parts[0];
  if (parts[0] == "hybrid") {
    if (parts.size() >= 2) cfg.hybrid_param = parts[1];
    if (parts.size() >= 3) cfg.hybrid_epsilon = std::stod(parts[2]);
  } else if (parts.size() > 1) {
    throw std::invalid_argument("malformed sweep variant spec: " + spec);
  }
  if (cfg.variant != "esn" && cfg.variant != "pi_esn" && cfg.variant != "hybrid") {
    throw std::invalid_argument("unknown sweep variant: " + spec);
  }
  return cfg;
}

}  // namespace

int cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir, int jobs,
              bool force, SweepOutcome* outcome) {
  return run_command("sweep", [&] {
    fs::create_directories(out_dir);
    const fs::path data_dir = out_dir / "dataset";
    const fs::path manifest_path = out_dir / "sweep_manifest.json";
    const fs::path summary_path = out_dir / "summary.csv";
    const std::string base_hash = to_hex(sweep_base_hash(cfg));

    // Dataset: reuse when it matches, otherwise (re)generate.
    bool have_dataset = fs::exists(data_dir / "manifest.json");
    if (have_dataset) {
      const ordered_json m = read_json_file(data_dir / "manifest.json");
      if (m.at("dataset_hash").get<std::string>() != to_hex(dataset_hash(cfg))) {
        if (!force) {
          throw std::runtime_error(
              "sweep dataset in " + data_dir.string() +
              " was generated from a different config (use --force)");
        }
        have_dataset = false;
      }
    }
    if (!have_dataset) {
      const Dataset fresh = build_dataset(cfg);
      write_dataset(fresh, cfg, data_dir, true);
    }
    const Dataset data = load_dataset(data_dir);

    ordered_json manifest;
    if (fs::exists(manifest_path) && !force) {
      manifest = read_json_file(manifest_path);
      if (manifest.at("base_hash").get<std::string>() != base_hash) {
        throw std::runtime_error(
            "sweep manifest belongs to a different config (use --force)");
      }
    } else {
      manifest["type"] = "sweep";
      manifest["code_version"] = kCodeVersion;
      manifest["base_hash"] = base_hash;
      manifest["config"] = config_to_json(cfg);
      manifest["completed"] = ordered_json::object();
      manifest["failed"] = ordered_json::object();
    }
    manifest["failed"] = ordered_json::object();  // failures retry on rerun

    std::vector<SweepCell> todo;
    std::vector<std::string> all_keys;
    for (const int n_x : cfg.sweep_n_x) {
      for (const auto& spec : cfg.sweep_variants) {
        ExperimentConfig cell = cell_config(cfg, spec, n_x);
        const std::string key =
            variant_label(cell) + "@" + std::to_string(n_x);
        all_keys.push_back(key);
        if (manifest["completed"].contains(key)) continue;
        todo.push_back({key, std::move(cell)});
      }
    }

    SweepOutcome local;
    local.cells_skipped = static_cast<int>(all_keys.size() - todo.size());

    std::mutex mu;
    const auto rewrite_summary = [&] {
      // Deterministic row order: by reservoir size, then label.
      std::vector<std::pair<std::pair<int, std::string>, std::string>> rows;
      for (const auto& [key, cell] : manifest["completed"].items()) {
        rows.push_back({{cell.at("n_x").get<int>(), key},
                        cell.at("row").get<std::string>()});
      }
      std::sort(rows.begin(), rows.end());
      std::ofstream out(summary_path);
      out << kSummaryHeader << "\n";
      for (const auto& r : rows) out << r.second << "\n";
    };

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) break;
        const SweepCell& cell = todo[i];
        try {
          const TrainOutput trained = train_variant(cell.cfg, data);
          const HorizonEnsemble ens = evaluate_model(trained.model, data, cell.cfg);

          const fs::path cell_dir = out_dir / "cells" / cell.key;
          fs::create_directories(cell_dir);
          save_model(trained.model, cell_dir / "model.json");
          write_loss_history(trained.history, cell_dir / "loss_history.csv");
          write_ensemble_csv(ens, cell_dir / "ensemble.csv");

          ordered_json entry;
          entry["n_x"] = cell.cfg.n_x;
          entry["variant"] = variant_label(cell.cfg);
          entry["mean_lt"] = ens.mean_lt;
          entry["std_lt"] = ens.std_lt;
          entry["n_censored"] = ens.n_censored;
          entry["n_diverged"] = ens.n_diverged;
          entry["optimizer_failed"] = trained.optimizer_failed;
          entry["row"] =
              summary_row(variant_label(cell.cfg), cell.cfg.n_x, data.snr_db, ens);

          std::lock_guard<std::mutex> lock(mu);
          manifest["completed"][cell.key] = entry;
          ++local.cells_run;
          write_json_file(manifest, manifest_path);
          rewrite_summary();
          std::cout << "sweep cell " << cell.key << ": mean " << ens.mean_lt
                    << " LT\n";
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(mu);
          manifest["failed"][cell.key] = e.what();
          ++local.cells_failed;
          write_json_file(manifest, manifest_path);
          std::cerr << "sweep cell " << cell.key << " failed: " << e.what()
                    << "\n";
        }
      }
    };

    const int n_threads =
        std::max(1, std::min<int>(jobs, static_cast<int>(todo.size())));
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(n_threads);
      for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    write_json_file(manifest, manifest_path);
    rewrite_summary();
    if (outcome) *outcome = local;
    return local.cells_failed > 0 ? 1 : 0;
  });
}

}  // namespace piesn
