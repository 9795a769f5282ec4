#include "moif/approximator.hpp"

#include <memory>
#include <random>

#include "moif/errors.hpp"

namespace moif {

using ad::Tensor;

void ApproximatorConfig::validate() const {
  if (embed_dim == 0) throw ParameterError("embed_dim must be >= 1");
  if (latent_dim == 0) throw ParameterError("latent_dim must be >= 1");
  if (t_fut == 0) throw ParameterError("t_fut must be >= 1");
}

NoiseFn seeded_noise(std::uint64_t seed) {
  auto engine = std::make_shared<std::mt19937_64>(seed);
  auto normal = std::make_shared<std::normal_distribution<double>>(0.0, 1.0);
  return [engine, normal](std::size_t count) {
    std::vector<double> out(count);
    for (double& v : out) v = (*normal)(*engine);
    return out;
  };
}

TrajectoryApproximator TrajectoryApproximator::create(ad::ParamStore& params, const std::string& prefix,
                                                      const ApproximatorConfig& config, nn::Rng& rng) {
  config.validate();
  const std::size_t e = config.embed_dim, l = config.latent_dim;
  TrajectoryApproximator a;
  a.config_ = config;
  a.future_embed_ = nn::Mlp::create(params, prefix + ".f_B", 2, e, e, rng);
  a.posterior_ = nn::Mlp::create(params, prefix + ".posterior", 2 * e, e, 2 * l, rng);
  a.prior_ = nn::Mlp::create(params, prefix + ".prior", e, e, 2 * l, rng);
  a.decoder_ = nn::Mlp::create(params, prefix + ".decoder", l + e, e, 2, rng);
  a.updater_ = nn::GruCell::create(params, prefix + ".f_zg", l + 2, e, rng);
  return a;
}

Tensor TrajectoryApproximator::embed_future(const Tensor& future, Mode mode) const {
  if (mode != Mode::kTrain) throw ContractError("embed_future: ground truth is only available in train mode");
  if (future.cols() != 2) throw ShapeError("embed_future: expected rows x 2, got " + future.shape_str());
  return future_embed_(future);
}

namespace {

LatentParams split_latent(const Tensor& raw, std::size_t latent) {
  return {ad::slice_cols(raw, 0, latent),
          ad::clamp(ad::slice_cols(raw, latent, latent), kLogSigmaMin, kLogSigmaMax)};
}

}  // namespace

LatentParams TrajectoryApproximator::prior(const Tensor& intention) const {
  return split_latent(prior_(intention), config_.latent_dim);
}

LatentParams TrajectoryApproximator::latent_params(const Tensor& intention, const Tensor* future_step,
                                                   Mode mode) const {
  if (mode == Mode::kTrain) {
    if (future_step == nullptr) throw ContractError("latent_params: train mode needs the future embedding");
    return split_latent(posterior_(ad::concat_cols({intention, *future_step})), config_.latent_dim);
  }
  if (future_step != nullptr) throw ContractError("latent_params: test mode must not see the future");
  return prior(intention);
}

Tensor TrajectoryApproximator::reparameterize(const LatentParams& params, const Tensor& noise) {
  if (noise.requires_grad()) throw ContractError("reparameterize: noise must be a constant");
  return params.mean + ad::mul(noise, ad::exp(params.log_sigma));
}

Tensor TrajectoryApproximator::decode_step(const Tensor& z, const Tensor& intention, const Tensor& prev) const {
  return prev + decoder_(ad::concat_cols({z, intention}));
}

Tensor TrajectoryApproximator::update_intention(const Tensor& intention, const Tensor& z, const Tensor& g) const {
  if (intention.cols() != config_.embed_dim) {
    throw ShapeError("update_intention: hidden width " + intention.shape_str() + " vs embed_dim " +
                     std::to_string(config_.embed_dim));
  }
  return updater_(ad::concat_cols({z, g}), intention);
}

RolloutResult TrajectoryApproximator::rollout_rows(const Tensor& intention, const Tensor& anchor, Mode mode,
                                                   const Tensor* future, const NoiseFn& noise,
                                                   bool use_posterior) const {
  const std::size_t rows = intention.rows();
  const std::size_t t_fut = config_.t_fut, l = config_.latent_dim;
  if (anchor.rows() != rows || anchor.cols() != 2) {
    throw ShapeError("rollout: anchor " + anchor.shape_str() + " for " + std::to_string(rows) + " rows");
  }
  const bool teacher = mode == Mode::kTrain && use_posterior;
  if (mode == Mode::kTrain && future == nullptr && use_posterior) {
    throw ContractError("rollout: train mode needs the ground-truth future");
  }
  if (mode == Mode::kTest && future != nullptr) throw ContractError("rollout: test mode must not see the future");
  if (teacher && (future->rows() != rows || future->cols() != 2 * t_fut)) {
    throw ShapeError("rollout: future " + future->shape_str() + " does not match " + std::to_string(rows) +
                     " x " + std::to_string(2 * t_fut));
  }

  RolloutResult out;
  Tensor state = intention;
  Tensor prev = anchor;
  for (std::size_t t = 0; t < t_fut; ++t) {
    LatentStep step;
    step.noise = Tensor::constant(rows, l, noise(rows * l));
    step.prior = prior(state);
    if (teacher) {
      const Tensor b_t = embed_future(ad::slice_cols(*future, 2 * t, 2), Mode::kTrain);
      step.posterior = latent_params(state, &b_t, Mode::kTrain);
      step.z = reparameterize(*step.posterior, step.noise);
    } else {
      step.z = reparameterize(step.prior, step.noise);
    }
    const Tensor g = decode_step(step.z, state, prev);
    state = update_intention(state, step.z, g);
    prev = g;
    out.positions.push_back(g);
    out.trace.push_back(std::move(step));
  }
  out.trajectory = ad::concat_cols(out.positions);
  return out;
}

RolloutResult TrajectoryApproximator::rollout(const Tensor& intention, Mode mode, const Tensor* future,
                                              std::size_t n_samples, const NoiseFn& noise) const {
  if (intention.rows() != 1) throw ShapeError("rollout: expected a 1 x embed_dim intention");
  if (mode == Mode::kTrain) {
    if (n_samples != 1) throw ContractError("rollout: train mode draws exactly one sample");
    if (future == nullptr) throw ContractError("rollout: train mode needs the ground-truth future");
    if (future->rows() != config_.t_fut || future->cols() != 2) {
      throw ShapeError("rollout: future must be t_fut x 2, got " + future->shape_str());
    }
    const Tensor flat = ad::reshape(*future, 1, 2 * config_.t_fut);
    return rollout_rows(intention, Tensor::zeros(1, 2), mode, &flat, noise);
  }
  if (n_samples == 0) throw ContractError("rollout: n_samples must be >= 1");
  return rollout_rows(ad::repeat_rows(intention, n_samples), Tensor::zeros(n_samples, 2), mode, future, noise);
}

}  // namespace moif
