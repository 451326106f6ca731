#include "piesn/model_io.hpp"

#include <fstream>

#include "json_support.hpp"

namespace piesn {

using nlohmann::json;

namespace {

json dense_to_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data.push_back(m(i, j));
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat dense_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error("model file: dense matrix size mismatch");
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) {
      m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
    }
  }
  return m;
}

json sparse_to_json(const SpMat& m) {
  json triplets = json::array();
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      triplets.push_back({it.row(), it.col(), it.value()});
    }
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"triplets", triplets}};
}

SpMat sparse_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  std::vector<Eigen::Triplet<double>> triplets;
  for (const auto& t : j.at("triplets")) {
    triplets.emplace_back(t.at(0).get<Eigen::Index>(),
                          t.at(1).get<Eigen::Index>(), t.at(2).get<double>());
  }
  SpMat m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

json hyperparams_to_json(const EsnHyperParams& hp) {
  return {{"n_x", hp.n_x},
          {"n_u", hp.n_u},
          {"n_y", hp.n_y},
          {"sigma_in", hp.sigma_in},
          {"spectral_radius", hp.spectral_radius_target},
          {"avg_connectivity", hp.avg_connectivity},
          {"tikhonov_gamma", hp.tikhonov_gamma},
          {"seed", hp.seed}};
}

EsnHyperParams hyperparams_from_json(const json& j) {
  EsnHyperParams hp;
  hp.n_x = j.at("n_x").get<int>();
  hp.n_u = j.at("n_u").get<int>();
  hp.n_y = j.at("n_y").get<int>();
  hp.sigma_in = j.at("sigma_in").get<double>();
  hp.spectral_radius_target = j.at("spectral_radius").get<double>();
  hp.avg_connectivity = j.at("avg_connectivity").get<double>();
  hp.tikhonov_gamma = j.at("tikhonov_gamma").get<double>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

}  // namespace

json system_to_json(const SystemModel& m) {
  json j = {{"name", m.name}, {"lambda_max", m.lambda_max}};
  if (m.kind == SystemModel::Kind::lorenz) {
    j["params"] = {
        {"sigma", m.lorenz.sigma}, {"rho", m.lorenz.rho}, {"beta", m.lorenz.beta}};
  } else {
    j["params"] = {{"u1_star", m.cdv.u1_star},   {"u4_star", m.cdv.u4_star},
                   {"C", m.cdv.damping_c},       {"beta", m.cdv.beta_param},
                   {"gamma", m.cdv.gamma_param}, {"b", m.cdv.channel_b}};
  }
  return j;
}

SystemModel system_from_json(const json& j) {
  const auto name = j.at("name").get<std::string>();
  const auto lambda = j.at("lambda_max").get<double>();
  const json& p = j.at("params");
  if (name == "lorenz") {
    LorenzParams lp;
    lp.sigma = p.at("sigma").get<double>();
    lp.rho = p.at("rho").get<double>();
    lp.beta = p.at("beta").get<double>();
    return make_lorenz(lp, lambda);
  }
  if (name == "cdv") {
    CdvParams cp;
    cp.u1_star = p.at("u1_star").get<double>();
    cp.u4_star = p.at("u4_star").get<double>();
    cp.damping_c = p.at("C").get<double>();
    cp.beta_param = p.at("beta").get<double>();
    cp.gamma_param = p.at("gamma").get<double>();
    cp.channel_b = p.at("b").get<double>();
    return make_cdv(cp, lambda);
  }
  throw std::runtime_error("unknown system name: " + name);
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  json j;
  j["format_version"] = model.info.format_version;
  j["info"] = {{"system", model.info.system},
               {"variant", model.info.variant},
               {"washout", model.info.washout},
               {"dt", model.info.dt},
               {"master_seed", model.info.master_seed},
               {"provenance", model.info.provenance}};
  j["system"] = system_to_json(model.system);

  if (const auto* esn = std::get_if<EsnWeights>(&model.weights)) {
    j["kind"] = "esn";
    j["hyperparams"] = hyperparams_to_json(esn->hp);
    j["w_in"] = dense_to_json(esn->w_in);
    j["w"] = sparse_to_json(esn->w);
    j["w_out"] = dense_to_json(esn->w_out);
  } else {
    const auto& hy = std::get<HybridEsnWeights>(model.weights);
    j["kind"] = "hybrid";
    j["hyperparams"] = hyperparams_to_json(hy.hp);
    j["w_in"] = dense_to_json(hy.w_in);
    j["w"] = sparse_to_json(hy.w);
    j["w_out"] = dense_to_json(hy.w_out);
    j["hybrid"] = {{"perturbed_param", to_string(hy.perturbed)},
                   {"epsilon", hy.epsilon_perturb},
                   {"approx_model", system_to_json(hy.approx_model)}};
  }

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << j.dump(1);
  out << "\n";
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open model file: " + path.string());
  }
  json j;
  in >> j;

  TrainedModel model;
  model.info.format_version = j.at("format_version").get<int>();
  const json& info = j.at("info");
  model.info.system = info.at("system").get<std::string>();
  model.info.variant = info.at("variant").get<std::string>();
  model.info.washout = info.at("washout").get<Eigen::Index>();
  model.info.dt = info.at("dt").get<double>();
  model.info.master_seed = info.at("master_seed").get<std::uint64_t>();
  model.info.provenance = info.at("provenance").get<std::string>();
  model.system = system_from_json(j.at("system"));

  const auto kind = j.at("kind").get<std::string>();
  if (kind == "esn") {
    EsnWeights esn;
    esn.hp = hyperparams_from_json(j.at("hyperparams"));
    esn.w_in = dense_from_json(j.at("w_in"));
    esn.w = sparse_from_json(j.at("w"));
    esn.w_out = dense_from_json(j.at("w_out"));
    model.weights = std::move(esn);
  } else if (kind == "hybrid") {
    HybridEsnWeights hy;
    hy.hp = hyperparams_from_json(j.at("hyperparams"));
    hy.w_in = dense_from_json(j.at("w_in"));
    hy.w = sparse_from_json(j.at("w"));
    hy.w_out = dense_from_json(j.at("w_out"));
    const json& h = j.at("hybrid");
    hy.perturbed = perturbed_param_from_string(
        h.at("perturbed_param").get<std::string>());
    hy.epsilon_perturb = h.at("epsilon").get<double>();
    hy.approx_model = system_from_json(h.at("approx_model"));
    model.weights = std::move(hy);
  } else {
    throw std::runtime_error("unknown model kind: " + kind);
  }
  return model;
}

}  // namespace piesn
