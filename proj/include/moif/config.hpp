#pragma once

// JSON form of the run configuration. Every object is parsed strictly:
// unknown keys and wrongly typed values raise ConfigError naming the key.
//
//   {
//     "model": {"t_hist": 8, "t_fut": 8, "subspaces": 6, "embed_dim": 24, ...,
//               "flags": "PVDTEIBKA"},
//     "loss": {"w_angle": 1.0, "w_kl": 1.0, "eps_dir": 1e-4},
//     "lr": 1e-3, "epochs": 100, "batch_size": 16, "seed": 1, "grad_clip": 5.0,
//     "val_samples": 20,
//     "data": {"train": ["a.txt"], "val": [], "test": [], "stride": 1, "dt": 0.4}
//   }

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "moif/training.hpp"

namespace moif {

using Json = nlohmann::json;

struct DataConfig {
  /// Files or directories (every *.txt below a directory is used).
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> val;
  std::vector<std::filesystem::path> test;
  std::size_t stride = 1;
  double dt = kDefaultDt;
  bool operator==(const DataConfig&) const = default;
};

struct ExperimentConfig {
  TrainConfig train;
  DataConfig data;
};

Json to_json(const ModelConfig& c);
Json to_json(const LossConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const DataConfig& c);
Json to_json(const ExperimentConfig& c);

ModelConfig model_config_from_json(const Json& j);
LossConfig loss_config_from_json(const Json& j);
/// Accepts the keys of TrainConfig only (no "data").
TrainConfig train_config_from_json(const Json& j);
/// Relative data paths are resolved against `base_dir`.
ExperimentConfig experiment_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});

/// IoError if unreadable, ConfigError on invalid JSON or contents.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Expands files and directories into a sorted list of trajectory files.
/// IoError for a missing path.
std::vector<std::filesystem::path> expand_data_paths(const std::vector<std::filesystem::path>& paths);

/// Parses and windows every file; scene sources are the file paths.
std::vector<Scene> load_scenes(const std::vector<std::filesystem::path>& files, const ModelConfig& model,
                               std::size_t stride, double dt);

}  // namespace moif
