#pragma once

// The full predictor: intention fusion -> latent trajectory approximator ->
// KAN refinement, plus the scene preparation that feeds it and the ablation
// switches that remove individual inputs or components.

#include <cstdint>
#include <string>
#include <vector>

#include "moif/approximator.hpp"
#include "moif/autodiff.hpp"
#include "moif/intention.hpp"
#include "moif/kan.hpp"
#include "moif/objective.hpp"
#include "moif/scene.hpp"

namespace moif {

/// Each flag enables one input channel or component.
///   P  neighbor positions        V  neighbor velocities
///   D  target-neighbor distance  Theta  velocity angle
///   E  closest-approach distance I  neighbor intention (off: the target's own
///                                   history is the only token)
///   B  posterior on the future during training (off: prior path, no KL)
///   K  KAN refinement            A  direction loss term
struct AblationFlags {
  bool P = true, V = true, D = true, Theta = true, E = true;
  bool I = true, B = true, K = true, A = true;

  /// ConfigError if B is on while I is off.
  void validate() const;
  /// Letters of the enabled flags in canonical order ("T" stands for Theta),
  /// e.g. "PVDTEIBKA" for the full model.
  std::string to_string() const;
  /// Parses a string of flag letters ("T" for Theta); ConfigError on unknown letters.
  static AblationFlags parse(const std::string& letters);
  bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
  std::size_t t_hist = 8;
  std::size_t t_fut = 8;
  std::size_t subspaces = 6;
  std::size_t embed_dim = 24;
  std::size_t latent_dim = 16;
  std::size_t kan_layers = 3;
  std::size_t kan_grid = 5;
  std::size_t kan_order = 3;
  double kan_input_scale = 2.0;
  /// Length unit (meters) of every position, distance and velocity fed to the
  /// networks; the approximator rolls out in this unit as well.
  double position_scale = 2.0;
  ScaleMode scale_mode = ScaleMode::kPaperLinear;
  ApproachMode approach = ApproachMode::kPaper;
  AblationFlags flags;

  /// ConfigError on any inconsistent field.
  void validate() const;
  MoifConfig moif() const;
  ApproximatorConfig approximator() const;
  KanConfig kan() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Model-ready tensors for one scene, all in the target-centric frame where
/// the last history position is the origin.
struct PreparedScene {
  Scene scene;  // normalized
  Transform transform;
  ad::Tensor neighbor_states;  // N x 4·t_hist
  ad::Tensor relation_tokens;  // N x 5·t_hist
  std::vector<bool> mask;      // live tokens
  ad::Tensor future;           // 1 x 2·t_fut meters, empty if the scene carries no future
  std::vector<Vec2> history;   // t_hist target positions (normalized)

  std::size_t tokens() const { return mask.size(); }
};

/// Appends masked all-zero tokens until there are `total` of them.
PreparedScene pad_neighbors(const PreparedScene& prepared, std::size_t total);

struct TrainForward {
  ad::Tensor raw_rows;      // R x 2·t_fut
  ad::Tensor refined_rows;  // R x 2·t_fut
  RolloutResult rollout;
  LossBreakdown loss;
};

class SocialMoif {
 public:
  /// Builds every sub-module and initializes parameters from `init_seed`.
  SocialMoif(const ModelConfig& config, std::uint64_t init_seed);
  SocialMoif(const SocialMoif&) = delete;
  SocialMoif& operator=(const SocialMoif&) = delete;

  const ModelConfig& config() const { return config_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const IntentionFusion& fusion() const { return fusion_; }
  const TrajectoryApproximator& approximator() const { return approximator_; }
  const KanStack& kan() const { return kan_; }

  /// ShapeError if the scene's window lengths disagree with the config.
  PreparedScene prepare(const Scene& scene) const;

  /// 1 x embed_dim intention I₀.
  ad::Tensor intention(const PreparedScene& prepared) const;

  /// Loss weights after the A and B flags are applied.
  LossConfig effective_loss(const LossConfig& loss) const;

  /// Teacher-path forward over a batch (one row per scene) and its loss.
  TrainForward forward_train(const std::vector<const PreparedScene*>& batch, const LossConfig& loss,
                             const NoiseFn& noise) const;

  /// k test-mode samples, refined when K is on; k x 2·t_fut, normalized frame.
  ad::Tensor sample_rows(const PreparedScene& prepared, std::size_t k, const NoiseFn& noise) const;

  /// k samples in world coordinates, each t_fut positions.
  std::vector<std::vector<Vec2>> predict(const PreparedScene& prepared, std::size_t k, std::uint64_t seed) const;

 private:
  ModelConfig config_;
  ad::ParamStore params_;
  IntentionFusion fusion_;
  TrajectoryApproximator approximator_;
  KanStack kan_;
};

}  // namespace moif
