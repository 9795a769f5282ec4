#pragma once

// Displacement metrics under the best-of-K protocol, a per-step kernel
// density NLL estimate, and the constant-velocity reference predictor.

#include <string>
#include <vector>

#include "json.hpp"
#include "moif/matrix.hpp"
#include "moif/scene.hpp"

namespace moif {

using Trajectory = std::vector<Vec2>;

struct PredictionSet {
  std::vector<Trajectory> samples;  // K x T_F, world frame
  std::string scene_ref;

  /// ContractError if empty, ragged or non-finite.
  void validate() const;
};

/// Mean per-step Euclidean distance. ShapeError on different lengths or empty input.
double ade(const Trajectory& traj, const Trajectory& gt);
/// Distance at the final step. ShapeError as for ade.
double fde(const Trajectory& traj, const Trajectory& gt);

enum class BestOfKMode {
  kIndependent,  // min ADE and min FDE taken separately
  kJoint,        // FDE of the min-ADE sample
};

struct BestOfK {
  double min_ade = 0.0;
  double min_fde = 0.0;
};

BestOfK best_of_k(const PredictionSet& pred, const Trajectory& gt, BestOfKMode mode = BestOfKMode::kIndependent);
/// Uses only the first k samples.
BestOfK best_of_k(const PredictionSet& pred, const Trajectory& gt, std::size_t k,
                  BestOfKMode mode = BestOfKMode::kIndependent);

inline constexpr double kBandwidthFloor = 1e-3;

/// Per step, a product-Gaussian kernel density over the K sample positions
/// with Scott's bandwidth σ_axis · K^(-1/6), floored at kBandwidthFloor; the
/// result is the mean over steps of −log density at the ground truth.
/// ContractError for K < 2.
double nll_estimate(const PredictionSet& pred, const Trajectory& gt);

/// Extrapolates the last history velocity (last two positions) over t_fut
/// steps. ContractError if the history is shorter than two frames.
Trajectory constant_velocity_baseline(const Scene& scene);
Trajectory constant_velocity_baseline(const Trajectory& history, std::size_t t_fut);

/// Ground-truth future of the scene's target.
Trajectory scene_future(const Scene& scene);
Trajectory scene_history(const Scene& scene);

struct SceneMetrics {
  std::string scene_id;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double nll = 0.0;  // NaN when K < 2
};

struct MetricReport {
  std::size_t k = 0;
  std::vector<SceneMetrics> per_scene;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double nll = 0.0;

  /// Fills the aggregate means from per_scene.
  void aggregate();
  nlohmann::json to_json() const;
};

}  // namespace moif
