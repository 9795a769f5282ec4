#include "moif/objective.hpp"

#include "moif/errors.hpp"

namespace moif {

using ad::Tensor;

void LossConfig::validate() const {
  if (!(w_angle >= 0.0)) throw ConfigError("loss: w_angle must be >= 0");
  if (!(w_kl >= 0.0)) throw ConfigError("loss: w_kl must be >= 0");
  if (!(eps_dir > 0.0)) throw ConfigError("loss: eps_dir must be > 0");
}

namespace {

void check_rows(const Tensor& pred, const Tensor& gt, const char* what) {
  if (pred.shape() != gt.shape() || pred.cols() % 2 != 0 || pred.cols() == 0) {
    throw ShapeError(std::string(what) + ": pred " + pred.shape_str() + " vs gt " + gt.shape_str());
  }
}

void check_single(const Tensor& pred, const Tensor& gt, const char* what) {
  if (pred.shape() != gt.shape() || pred.cols() != 2 || pred.rows() == 0) {
    throw ShapeError(std::string(what) + ": pred " + pred.shape_str() + " vs gt " + gt.shape_str());
  }
}

// R x 2T -> (R·T) x 2 consecutive differences, first step taken from the anchor.
Tensor step_vectors(const Tensor& rows, const Tensor& anchor) {
  const std::size_t r = rows.rows(), w = rows.cols();
  const Tensor prev = w == 2 ? anchor : ad::concat_cols({anchor, ad::slice_cols(rows, 0, w - 2)});
  return ad::reshape(rows - prev, r * (w / 2), 2);
}

}  // namespace

Tensor step_distances(const Tensor& pred_rows, const Tensor& gt_rows) {
  check_rows(pred_rows, gt_rows, "step_distances");
  const std::size_t r = pred_rows.rows(), t = pred_rows.cols() / 2;
  return ad::reshape(ad::row_norm(ad::reshape(pred_rows - gt_rows, r * t, 2)), r, t);
}

std::size_t StepAngles::count() const {
  std::size_t n = 0;
  for (double v : retained) n += v > 0.0 ? 1 : 0;
  return n;
}

StepAngles step_angles(const Tensor& pred_rows, const Tensor& gt_rows, const Tensor& anchor_rows,
                       double eps_dir) {
  check_rows(pred_rows, gt_rows, "step_angles");
  if (anchor_rows.rows() != pred_rows.rows() || anchor_rows.cols() != 2) {
    throw ShapeError("step_angles: anchor " + anchor_rows.shape_str() + " for " + pred_rows.shape_str());
  }
  const std::size_t r = pred_rows.rows(), t = pred_rows.cols() / 2, n = r * t;
  const Tensor dp = step_vectors(pred_rows, anchor_rows);
  const Tensor dg = step_vectors(gt_rows, anchor_rows);
  const Tensor np = ad::row_norm(dp);
  const Tensor ng = ad::row_norm(dg);

  StepAngles out;
  out.retained.resize(n);
  std::vector<double> skipped(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = np.data()[i] >= eps_dir && ng.data()[i] >= eps_dir;
    out.retained[i] = keep ? 1.0 : 0.0;
    skipped[i] = keep ? 0.0 : 1.0;
  }
  // Skipped steps get a unit denominator so the cosine stays finite; their
  // angle is masked out afterwards.
  const Tensor denom = ad::mul(np, ng) + Tensor::constant(n, 1, std::move(skipped));
  const Tensor cosine = ad::div(ad::row_dot(dp, dg), denom);
  const Tensor angles = ad::mul(ad::acos(cosine), Tensor::constant(n, 1, out.retained));
  out.angles = ad::reshape(angles, r, t);
  return out;
}

Tensor distance_loss(const Tensor& pred, const Tensor& gt) {
  check_single(pred, gt, "distance_loss");
  return ad::mean(ad::row_norm(pred - gt));
}

Tensor direction_loss(const Tensor& pred, const Tensor& gt, const Tensor& anchor, double eps_dir) {
  check_single(pred, gt, "direction_loss");
  if (anchor.rows() != 1 || anchor.cols() != 2) throw ShapeError("direction_loss: anchor must be 1 x 2");
  const std::size_t w = 2 * pred.rows();
  const auto a = step_angles(ad::reshape(pred, 1, w), ad::reshape(gt, 1, w), anchor, eps_dir);
  const std::size_t kept = a.count();
  if (kept == 0) return Tensor::scalar(0.0);
  return ad::scale(ad::sum(a.angles), 1.0 / static_cast<double>(kept));
}

Tensor gaussian_kl(const Tensor& u_q, const Tensor& log_sigma_q, const Tensor& u_p, const Tensor& log_sigma_p) {
  const auto shape = u_q.shape();
  if (log_sigma_q.shape() != shape || u_p.shape() != shape || log_sigma_p.shape() != shape) {
    throw ShapeError("gaussian_kl: parameter shapes differ (" + u_q.shape_str() + ", " +
                     log_sigma_q.shape_str() + ", " + u_p.shape_str() + ", " + log_sigma_p.shape_str() + ")");
  }
  const Tensor ls_diff = log_sigma_q - log_sigma_p;
  const Tensor du = u_q - u_p;
  const Tensor var_ratio = ad::exp(ad::scale(ls_diff, 2.0));
  const Tensor mean_term = ad::mul(ad::mul(du, du), ad::exp(ad::scale(log_sigma_p, -2.0)));
  const Tensor per_dim = ad::add_scalar(ad::scale(var_ratio + mean_term, 0.5) - ls_diff, -0.5);
  return ad::row_sum(per_dim);
}

LossBreakdown total_loss(const Tensor& pred_rows, const std::vector<LatentStep>& trace, const Tensor& gt_rows,
                         const Tensor& anchor_rows, const LossConfig& config) {
  config.validate();
  const std::size_t r = pred_rows.rows(), t = pred_rows.cols() / 2;
  const double inv_rows = 1.0 / static_cast<double>(r);

  const Tensor dist = ad::sum(step_distances(pred_rows, gt_rows));
  Tensor objective = dist;
  LossBreakdown out;
  out.dist = dist.item() / static_cast<double>(r * t);

  if (config.w_angle > 0.0) {
    const auto a = step_angles(pred_rows, gt_rows, anchor_rows, config.eps_dir);
    const Tensor angle = ad::sum(a.angles);
    const std::size_t kept = a.count();
    out.angle = kept == 0 ? 0.0 : angle.item() / static_cast<double>(kept);
    objective = objective + ad::scale(angle, config.w_angle);
  }

  if (config.w_kl > 0.0) {
    if (trace.size() != t) {
      throw ContractError("total_loss: latent trace has " + std::to_string(trace.size()) + " steps, expected " +
                          std::to_string(t));
    }
    std::vector<Tensor> per_step;
    per_step.reserve(t);
    for (std::size_t s = 0; s < t; ++s) {
      const auto& step = trace[s];
      if (!step.posterior) throw ContractError("total_loss: step " + std::to_string(s) + " has no posterior");
      per_step.push_back(gaussian_kl(step.posterior->mean, step.posterior->log_sigma, step.prior.mean,
                                     step.prior.log_sigma));
    }
    const Tensor kl = ad::sum(ad::concat_cols(per_step));
    out.kl = kl.item() * inv_rows;
    objective = objective + ad::scale(kl, config.w_kl);
  }

  out.total_tensor = ad::scale(objective, inv_rows);
  out.total = out.total_tensor.item();
  return out;
}

}  // namespace moif
