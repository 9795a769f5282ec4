#pragma once

// Trajectory distribution approximator: a per-step conditional latent model.
// In training the posterior sees the embedded ground-truth future frame; at
// test time the prior replaces it. Each step samples z by reparameterization,
// decodes a displacement from (z, I) and folds (z, g) back into I with a GRU.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "moif/autodiff.hpp"
#include "moif/nn.hpp"

namespace moif {

enum class Mode { kTrain, kTest };

struct ApproximatorConfig {
  std::size_t embed_dim = 24;
  std::size_t latent_dim = 16;
  std::size_t t_fut = 8;

  void validate() const;
};

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;

struct LatentParams {
  ad::Tensor mean;       // rows x latent
  ad::Tensor log_sigma;  // rows x latent, clamped to [-10, 10]
};

struct LatentStep {
  std::optional<LatentParams> posterior;  // only on the teacher path
  LatentParams prior;
  ad::Tensor noise;  // ε, constant
  ad::Tensor z;
};

struct RolloutResult {
  std::vector<ad::Tensor> positions;  // per future step, rows x 2
  ad::Tensor trajectory;              // rows x 2·t_fut, t-major, x before y
  std::vector<LatentStep> trace;
};

/// Supplies `count` standard-normal draws.
using NoiseFn = std::function<std::vector<double>(std::size_t count)>;

/// Seeded standard-normal stream.
NoiseFn seeded_noise(std::uint64_t seed);

class TrajectoryApproximator {
 public:
  static TrajectoryApproximator create(ad::ParamStore& params, const std::string& prefix,
                                       const ApproximatorConfig& config, nn::Rng& rng);

  const ApproximatorConfig& config() const { return config_; }

  /// f_B per future frame: rows x 2 -> rows x embed_dim. ContractError in test mode.
  ad::Tensor embed_future(const ad::Tensor& future, Mode mode) const;

  /// Train mode requires the future embedding row(s) and uses the posterior;
  /// test mode forbids it and uses the prior. ContractError otherwise.
  LatentParams latent_params(const ad::Tensor& intention, const ad::Tensor* future_step, Mode mode) const;
  LatentParams prior(const ad::Tensor& intention) const;

  /// z = mean + ε·exp(log_sigma); ε carries no gradient.
  static ad::Tensor reparameterize(const LatentParams& params, const ad::Tensor& noise);

  /// prev + decoder(concat(z, I)).
  ad::Tensor decode_step(const ad::Tensor& z, const ad::Tensor& intention, const ad::Tensor& prev) const;

  /// GRU step with input concat(z, g) and hidden state I.
  ad::Tensor update_intention(const ad::Tensor& intention, const ad::Tensor& z, const ad::Tensor& g) const;

  /// Row-batched rollout. Every row of `intention` is an independent
  /// recurrence starting at the matching row of `anchor`. In train mode
  /// `future` (rows x 2·t_fut) must be given; `use_posterior == false` runs the
  /// prior path while still in train mode.
  RolloutResult rollout_rows(const ad::Tensor& intention, const ad::Tensor& anchor, Mode mode,
                             const ad::Tensor* future, const NoiseFn& noise,
                             bool use_posterior = true) const;

  /// Single-scene form: `intention` is 1 x embed_dim, the anchor is the origin.
  /// Train mode needs n_samples == 1 and a t_fut x 2 future; test mode forks
  /// n_samples independent recurrences from the same intention.
  RolloutResult rollout(const ad::Tensor& intention, Mode mode, const ad::Tensor* future,
                        std::size_t n_samples, const NoiseFn& noise) const;

  const nn::GruCell& updater() const { return updater_; }
  nn::GruCell& updater() { return updater_; }
  const nn::Mlp& decoder() const { return decoder_; }

 private:
  ApproximatorConfig config_;
  nn::Mlp future_embed_;  // f_B
  nn::Mlp posterior_;     // φ
  nn::Mlp prior_;         // ϑ
  nn::Mlp decoder_;       // δ
  nn::GruCell updater_;   // f_zg
};

}  // namespace moif
