#pragma once

// Training objective: per-step distance, per-step direction angle and the
// posterior/prior KL, combined into a minimized negative-ELBO surrogate.
//
// Trajectories are handled row-batched as R x 2·T tensors (t-major, x before
// y); the T x 2 forms below are thin wrappers for single trajectories.

#include <vector>

#include "moif/approximator.hpp"
#include "moif/autodiff.hpp"

namespace moif {

struct LossConfig {
  double w_angle = 1.0;
  double w_kl = 1.0;
  double eps_dir = 1e-4;  // meters; shorter direction vectors are skipped

  /// ConfigError on negative weights or eps_dir <= 0.
  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// R x 2T pair -> R x T per-step Euclidean distances.
ad::Tensor step_distances(const ad::Tensor& pred_rows, const ad::Tensor& gt_rows);

struct StepAngles {
  ad::Tensor angles;            // R x T, zero on skipped steps
  std::vector<double> retained; // R·T flags (1 kept, 0 skipped), row-major
  std::size_t count() const;
};

/// Angles between consecutive-difference direction vectors of pred and gt,
/// the first step anchored at `anchor_rows` (R x 2).
StepAngles step_angles(const ad::Tensor& pred_rows, const ad::Tensor& gt_rows, const ad::Tensor& anchor_rows,
                       double eps_dir);

/// Mean over steps of ‖pred_t − gt_t‖. ShapeError on mismatched shapes.
ad::Tensor distance_loss(const ad::Tensor& pred, const ad::Tensor& gt);
/// Mean angle over retained steps; 0 if every step is skipped. `anchor` is 1 x 2.
ad::Tensor direction_loss(const ad::Tensor& pred, const ad::Tensor& gt, const ad::Tensor& anchor,
                          double eps_dir = 1e-4);

/// KL[N(u_q, σ_q²) ‖ N(u_p, σ_p²)] for diagonal Gaussians given log σ, summed
/// over columns: rows x latent -> rows x 1.
ad::Tensor gaussian_kl(const ad::Tensor& u_q, const ad::Tensor& log_sigma_q, const ad::Tensor& u_p,
                       const ad::Tensor& log_sigma_p);

struct LossBreakdown {
  double dist = 0.0;   // mean per-step distance
  double angle = 0.0;  // mean angle over retained steps
  double kl = 0.0;     // per-trajectory KL summed over steps, averaged over rows
  double total = 0.0;
  ad::Tensor total_tensor;
};

/// Per row: Σ_t dist_t + w_angle·Σ_t angle_t + w_kl·Σ_t KL_t; the batch total
/// is the mean over rows. With w_kl > 0 the trace must hold a posterior at
/// every step (ContractError otherwise); with w_kl == 0 the trace is ignored.
LossBreakdown total_loss(const ad::Tensor& pred_rows, const std::vector<LatentStep>& trace,
                         const ad::Tensor& gt_rows, const ad::Tensor& anchor_rows, const LossConfig& config);

}  // namespace moif
