#pragma once

// Optimization loop: seeded shuffling and batching, teacher-path forward,
// backward, global-norm gradient clipping and Adam, with validation minADE
// tracking and best-model retention. Trainer state round-trips through
// Checkpoint so an interrupted run can continue exactly.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "moif/model.hpp"
#include "moif/objective.hpp"
#include "moif/scene.hpp"

namespace moif {

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  double lr = 1e-3;
  /// Multiplies lr for the KAN refinement parameters. At full rate the stack
  /// tends to shrink sample spread early and the latent collapses onto the prior.
  double kan_lr_scale = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;
  /// Samples per scene for the validation minADE.
  std::size_t val_samples = 20;

  /// ConfigError on lr <= 0, kan_lr_scale < 0, batch_size == 0, grad_clip <= 0 or a bad model/loss.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double dist = 0.0;
  double angle = 0.0;
  double kl = 0.0;
  double total = 0.0;
  /// NaN when there is no validation set.
  double val_minade = std::numeric_limits<double>::quiet_NaN();
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

struct ParamInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool operator==(const ParamInfo&) const = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  TrainConfig config;
  std::vector<ParamInfo> manifest;  // lexicographic by name
  std::vector<double> values;       // manifest order
  AdamState adam;
  std::size_t epoch = 0;
  std::string rng_state;
  double best_val = std::numeric_limits<double>::infinity();
};

/// Snapshot of a model's parameters (no optimizer state).
Checkpoint snapshot(const SocialMoif& model, const TrainConfig& config);
/// Copies checkpoint values into `model`. CheckpointError(kManifest) on a
/// name mismatch, CheckpointError(kShape) naming the parameter on a shape mismatch.
void restore(SocialMoif& model, const Checkpoint& checkpoint);

void save_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
/// IoError if the file cannot be written.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// CheckpointError with kind kFormat, kVersion or kTruncated on a bad stream.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Adam with bias correction. Clipping is applied by the caller. A non-empty
/// `lr_scale` multiplies the step of each entry.
void adam_update(std::vector<double>& values, const std::vector<double>& grads, AdamState& state, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                 std::span<const double> lr_scale = {});
/// Rescales `grads` in place so that their global L2 norm is at most
/// `max_norm`; returns the norm before clipping.
double clip_global_norm(std::vector<double>& grads, double max_norm);

/// minADE_k over scenes, averaged, with one noise stream seeded by `seed`.
double mean_min_ade(const SocialMoif& model, const std::vector<PreparedScene>& scenes, std::size_t k,
                    std::uint64_t seed);

struct TrainResult {
  Checkpoint final;
  Checkpoint best;
  std::vector<EpochStats> history;
};

class Trainer {
 public:
  /// Fresh run. ContractError on an empty training set.
  Trainer(const TrainConfig& config, const std::vector<Scene>& train, const std::vector<Scene>& val);
  /// Continues from `resume`; the config comes from the checkpoint, except
  /// that `epochs` may be raised to extend the run.
  Trainer(const Checkpoint& resume, const std::vector<Scene>& train, const std::vector<Scene>& val,
          std::size_t epochs);

  const TrainConfig& config() const { return config_; }
  SocialMoif& model() { return model_; }
  std::size_t epoch() const { return epoch_; }

  /// One pass over the training set. NumericError names the failing op or parameter.
  EpochStats run_epoch();
  /// Runs until config().epochs and returns final and best checkpoints plus
  /// the history of this call.
  TrainResult run();
  Checkpoint checkpoint() const;

 private:
  void prepare(const std::vector<Scene>& train, const std::vector<Scene>& val);
  double validate_model() const;

  TrainConfig config_;
  SocialMoif model_;
  std::vector<PreparedScene> train_;
  std::vector<PreparedScene> val_;
  AdamState adam_;
  std::vector<double> lr_scale_;  // per flat entry
  std::size_t epoch_ = 0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double best_val_ = std::numeric_limits<double>::infinity();
  Checkpoint best_;
};

/// Seed of the validation noise stream for a run seeded with `seed`.
std::uint64_t validation_seed(std::uint64_t seed);

}  // namespace moif
