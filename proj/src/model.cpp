#include "moif/model.hpp"

#include "moif/errors.hpp"

namespace moif {

using ad::Tensor;

void AblationFlags::validate() const {
  if (B && !I) throw ConfigError("ablation flag B requires flag I");
}

std::string AblationFlags::to_string() const {
  std::string s;
  const std::pair<bool, char> all[] = {{P, 'P'}, {V, 'V'}, {D, 'D'}, {Theta, 'T'}, {E, 'E'},
                                       {I, 'I'}, {B, 'B'}, {K, 'K'}, {A, 'A'}};
  for (const auto& [on, c] : all)
    if (on) s.push_back(c);
  return s;
}

AblationFlags AblationFlags::parse(const std::string& letters) {
  AblationFlags f{false, false, false, false, false, false, false, false, false};
  for (char c : letters) {
    switch (c) {
      case 'P': f.P = true; break;
      case 'V': f.V = true; break;
      case 'D': f.D = true; break;
      case 'T': f.Theta = true; break;
      case 'E': f.E = true; break;
      case 'I': f.I = true; break;
      case 'B': f.B = true; break;
      case 'K': f.K = true; break;
      case 'A': f.A = true; break;
      default: throw ConfigError(std::string("unknown ablation flag '") + c + "'");
    }
  }
  return f;
}

void ModelConfig::validate() const {
  if (t_hist < 2) throw ConfigError("model: t_hist must be >= 2");
  if (t_fut < 1) throw ConfigError("model: t_fut must be >= 1");
  if (subspaces == 0 || embed_dim == 0 || embed_dim % subspaces != 0) {
    throw ConfigError("model: embed_dim must be a positive multiple of subspaces");
  }
  if (latent_dim == 0) throw ConfigError("model: latent_dim must be >= 1");
  if (kan_layers == 0 || kan_grid == 0) throw ConfigError("model: kan_layers and kan_grid must be >= 1");
  if (!(kan_input_scale > 0.0)) throw ConfigError("model: kan_input_scale must be positive");
  if (!(position_scale > 0.0)) throw ConfigError("model: position_scale must be positive");
  flags.validate();
}

MoifConfig ModelConfig::moif() const {
  MoifConfig c;
  c.subspaces = subspaces;
  c.embed_dim = embed_dim;
  c.t_hist = t_hist;
  c.scale_mode = scale_mode;
  return c;
}

ApproximatorConfig ModelConfig::approximator() const { return {embed_dim, latent_dim, t_fut}; }

KanConfig ModelConfig::kan() const {
  KanConfig c;
  c.t_fut = t_fut;
  c.layers = kan_layers;
  c.grid = kan_grid;
  c.order = kan_order;
  c.input_scale = kan_input_scale;
  return c;
}

namespace {

nn::Rng& seeded(nn::Rng& rng, std::uint64_t seed) {
  rng.seed(seed);
  return rng;
}

}  // namespace

SocialMoif::SocialMoif(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  nn::Rng rng;
  seeded(rng, init_seed);
  fusion_ = IntentionFusion::create(params_, "fusion", config_.moif(), rng);
  approximator_ = TrajectoryApproximator::create(params_, "approx", config_.approximator(), rng);
  kan_ = KanStack::create(params_, "kan", config_.kan(), rng);
}

PreparedScene SocialMoif::prepare(const Scene& scene) const {
  const std::size_t th = config_.t_hist, tf = config_.t_fut;
  if (scene.t_hist != th || scene.t_fut != tf) {
    throw ShapeError("scene window " + std::to_string(scene.t_hist) + "+" + std::to_string(scene.t_fut) +
                     " does not match model " + std::to_string(th) + "+" + std::to_string(tf));
  }
  if (scene.target.length() != th + tf && scene.target.length() != th) {
    throw ShapeError("target track has " + std::to_string(scene.target.length()) + " frames");
  }
  const auto& flags = config_.flags;
  PreparedScene p;
  std::tie(p.scene, p.transform) = normalize_scene(scene);
  for (std::size_t t = 0; t < th; ++t) p.history.push_back(p.scene.target.positions[t]);
  if (p.scene.target.length() == th + tf) {
    std::vector<double> fut(2 * tf);
    for (std::size_t t = 0; t < tf; ++t) {
      fut[2 * t] = p.scene.target.positions[th + t].x;
      fut[2 * t + 1] = p.scene.target.positions[th + t].y;
    }
    p.future = Tensor::constant(1, 2 * tf, std::move(fut));
  }

  const double unit = 1.0 / config_.position_scale;
  const std::size_t n = flags.I ? p.scene.num_neighbors() : 1;
  std::vector<double> states(n * 4 * th, 0.0);
  std::vector<double> tokens(n * 5 * th, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t t = 0; t < th; ++t) {
      tokens[j * 5 * th + t] = unit * p.history[t].x;
      tokens[j * 5 * th + th + t] = unit * p.history[t].y;
    }
  if (flags.I && n > 0) {
    const auto inputs = neighbor_state_inputs(p.scene);
    const auto rel = neighbor_rel_features(p.scene, config_.approach);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < 4 * th; ++c) {
        const bool keep = c < 2 * th ? flags.P : flags.V;
        if (keep) states[j * 4 * th + c] = unit * inputs.values(j, c);
      }
      for (std::size_t t = 0; t < th; ++t) {
        double* row = &tokens[j * 5 * th];
        if (flags.D) row[2 * th + t] = unit * rel.d(t, j);
        if (flags.Theta) row[3 * th + t] = rel.theta(t, j);
        if (flags.E) row[4 * th + t] = unit * rel.e(t, j);
      }
    }
  }
  p.neighbor_states = Tensor::constant(n, 4 * th, std::move(states));
  p.relation_tokens = Tensor::constant(n, 5 * th, std::move(tokens));
  p.mask.assign(n, true);
  return p;
}

PreparedScene pad_neighbors(const PreparedScene& prepared, std::size_t total) {
  const std::size_t n = prepared.tokens();
  if (total <= n) return prepared;
  PreparedScene p = prepared;
  const std::size_t extra = total - n;
  const std::size_t ws = prepared.neighbor_states.cols(), wr = prepared.relation_tokens.cols();
  p.neighbor_states = ad::concat_rows({prepared.neighbor_states, Tensor::zeros(extra, ws)});
  p.relation_tokens = ad::concat_rows({prepared.relation_tokens, Tensor::zeros(extra, wr)});
  p.mask.resize(total, false);
  return p;
}

Tensor SocialMoif::intention(const PreparedScene& prepared) const {
  return fusion_.forward(prepared.neighbor_states, prepared.relation_tokens, prepared.mask);
}

LossConfig SocialMoif::effective_loss(const LossConfig& loss) const {
  LossConfig c = loss;
  if (!config_.flags.A) c.w_angle = 0.0;
  if (!config_.flags.B) c.w_kl = 0.0;
  return c;
}

TrainForward SocialMoif::forward_train(const std::vector<const PreparedScene*>& batch, const LossConfig& loss,
                                       const NoiseFn& noise) const {
  if (batch.empty()) throw ContractError("forward_train: empty batch");
  std::vector<Tensor> intentions, futures;
  for (const auto* p : batch) {
    if (p->future.size() == 0) throw ContractError("forward_train: scene has no future");
    intentions.push_back(intention(*p));
    futures.push_back(p->future);
  }
  const std::size_t rows = batch.size();
  const double unit = config_.position_scale;
  const Tensor gt = ad::concat_rows(futures);
  const Tensor gt_scaled = ad::scale(gt, 1.0 / unit);
  const Tensor anchor = Tensor::zeros(rows, 2);
  TrainForward out;
  out.rollout = approximator_.rollout_rows(ad::concat_rows(intentions), anchor, Mode::kTrain, &gt_scaled, noise,
                                           config_.flags.B);
  out.raw_rows = ad::scale(out.rollout.trajectory, unit);
  out.refined_rows = config_.flags.K ? kan_.refine_rows(out.raw_rows) : out.raw_rows;
  out.loss = total_loss(out.refined_rows, out.rollout.trace, gt, anchor, effective_loss(loss));
  return out;
}

Tensor SocialMoif::sample_rows(const PreparedScene& prepared, std::size_t k, const NoiseFn& noise) const {
  if (k == 0) throw ContractError("sample_rows: k must be >= 1");
  const Tensor i0 = ad::repeat_rows(intention(prepared), k);
  const auto rollout = approximator_.rollout_rows(i0, Tensor::zeros(k, 2), Mode::kTest, nullptr, noise);
  const Tensor raw = ad::scale(rollout.trajectory, config_.position_scale);
  return config_.flags.K ? kan_.refine_rows(raw) : raw;
}

std::vector<std::vector<Vec2>> SocialMoif::predict(const PreparedScene& prepared, std::size_t k,
                                                   std::uint64_t seed) const {
  const Tensor rows = sample_rows(prepared, k, seeded_noise(seed));
  std::vector<std::vector<Vec2>> out(k);
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t t = 0; t < config_.t_fut; ++t)
      out[s].push_back(prepared.transform.inverse({rows.at(s, 2 * t), rows.at(s, 2 * t + 1)}));
  return out;
}

}  // namespace moif
