#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "piesn/reservoir.hpp"

namespace piesn {

struct ModelInfo {
  int format_version = 1;
  std::string system;   // "lorenz" | "cdv"
  std::string variant;  // "esn" | "pi_esn" | "hybrid"
  Eigen::Index washout = 100;
  double dt = 0.0;
  std::uint64_t master_seed = 0;
  std::string provenance;  // dataset path / config hash the model came from
};

struct TrainedModel {
  ModelInfo info;
  SystemModel system;  // reference system used for training data
  AnyEsn weights;
};

// Self-describing JSON document; numeric fields round-trip bit-exactly.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace piesn
