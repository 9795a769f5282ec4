#include "moif/intention.hpp"

#include <cmath>

#include "moif/errors.hpp"

namespace moif {

using ad::Tensor;

void MoifConfig::validate() const {
  if (subspaces == 0) throw ParameterError("subspace count M must be >= 1");
  if (embed_dim == 0 || embed_dim % subspaces != 0) {
    throw ParameterError("embed_dim " + std::to_string(embed_dim) + " is not divisible by M = " +
                         std::to_string(subspaces));
  }
  if (d_higher < 0.0 || d_first < 0.0) throw ParameterError("attention divisors must be positive");
  if (t_hist < 2) throw ParameterError("t_hist must be >= 2");
}

double MoifConfig::higher_order_scale() const {
  if (scale_mode == ScaleMode::kSqrt) return std::sqrt(static_cast<double>(subspace_width()));
  return d_higher > 0.0 ? d_higher : static_cast<double>(subspace_width());
}

double MoifConfig::first_order_scale() const {
  if (scale_mode == ScaleMode::kSqrt) return std::sqrt(static_cast<double>(embed_dim));
  return d_first > 0.0 ? d_first : static_cast<double>(embed_dim);
}

long intention_count(long n) {
  if (n < 0) throw ParameterError("neighbor count must be >= 0");
  return (n - 1) * n + n;
}

IntentionFusion IntentionFusion::create(ad::ParamStore& params, const std::string& prefix,
                                        const MoifConfig& config, nn::Rng& rng) {
  config.validate();
  const std::size_t e = config.embed_dim;
  IntentionFusion f;
  f.config_ = config;
  f.f_u_ = nn::Mlp::create(params, prefix + ".f_U", config.neighbor_input_width(), e, e, rng);
  f.f_s_ = nn::Mlp::create(params, prefix + ".f_S", config.relation_input_width(), e, e, rng);
  f.q_u_ = nn::Linear::create(params, prefix + ".higher.query", e, e, rng);
  f.k_u_ = nn::Linear::create(params, prefix + ".higher.key", e, e, rng);
  f.q_s_ = nn::Linear::create(params, prefix + ".first.query", e, e, rng);
  f.k_s_ = nn::Linear::create(params, prefix + ".first.key", e, e, rng);
  f.v_s_ = nn::Linear::create(params, prefix + ".first.value", e, e, rng);
  f.feed_forward_ = nn::Mlp::create(params, prefix + ".fuse.ff", e, e, e, rng);
  f.output_ = nn::Linear::create(params, prefix + ".fuse.out", e, e, rng);
  f.eta_ = params.add(prefix + ".eta", 1, config.subspaces,
                      std::vector<double>(config.subspaces, 1.0 / static_cast<double>(config.subspaces)));
  f.empty_scene_ = params.add(prefix + ".no_neighbor", 1, e, std::vector<double>(e, 0.0));
  return f;
}

Tensor IntentionFusion::embed_neighbors(const Tensor& states) const {
  if (states.cols() != config_.neighbor_input_width()) {
    throw ShapeError("embed_neighbors: expected width " + std::to_string(config_.neighbor_input_width()) +
                     ", got " + states.shape_str());
  }
  return f_u_(states);
}

Tensor IntentionFusion::embed_target_relations(const Tensor& tokens) const {
  if (tokens.cols() != config_.relation_input_width()) {
    throw ShapeError("embed_target_relations: expected width " +
                     std::to_string(config_.relation_input_width()) + ", got " + tokens.shape_str());
  }
  return f_s_(tokens);
}

std::vector<Tensor> IntentionFusion::higher_order_attention(const Tensor& u,
                                                            const std::vector<bool>& mask) const {
  const Tensor q = q_u_(u);
  const Tensor k = k_u_(u);
  const std::size_t w = config_.subspace_width();
  std::vector<Tensor> out;
  out.reserve(config_.subspaces);
  for (std::size_t m = 0; m < config_.subspaces; ++m) {
    const Tensor logits = ad::matmul_nt(ad::slice_cols(q, m * w, w), ad::slice_cols(k, m * w, w));
    out.push_back(ad::softmax_rows(logits, config_.higher_order_scale(), mask));
  }
  return out;
}

FirstOrderAttention IntentionFusion::first_order_attention(const Tensor& s,
                                                           const std::vector<bool>& mask) const {
  const Tensor logits = ad::matmul_nt(q_s_(s), k_s_(s));
  return {ad::softmax_rows(logits, config_.first_order_scale(), mask), v_s_(s)};
}

Tensor IntentionFusion::fuse(const std::vector<Tensor>& w_u, const Tensor& w_s, const Tensor& v_s,
                             const std::vector<bool>& mask) const {
  const std::size_t n = w_s.rows();
  if (w_u.size() != config_.subspaces) {
    throw ShapeError("fuse: expected " + std::to_string(config_.subspaces) + " subspace matrices, got " +
                     std::to_string(w_u.size()));
  }
  if (n == 0) return empty_scene_;

  // Σ_m η_m W_U^m as a (1 x M) · (M x N²) product.
  std::vector<Tensor> flat;
  flat.reserve(w_u.size());
  for (const auto& w : w_u) flat.push_back(ad::reshape(w, 1, n * n));
  const Tensor mixed = ad::reshape(ad::matmul(eta_, ad::concat_rows(flat)), n, n);

  const Tensor attended = ad::matmul(mixed + w_s, v_s);
  const Tensor h = attended + v_s;
  const Tensor h2 = h + feed_forward_(h);
  const Tensor tokens = output_(h2);

  std::vector<double> pool(n, 0.0);
  std::size_t live = 0;
  for (std::size_t j = 0; j < n; ++j) live += (mask.empty() || mask[j]) ? 1 : 0;
  if (live == 0) return empty_scene_;
  for (std::size_t j = 0; j < n; ++j)
    if (mask.empty() || mask[j]) pool[j] = 1.0 / static_cast<double>(live);
  return ad::matmul(Tensor::constant(1, n, std::move(pool)), tokens);
}

Tensor IntentionFusion::forward(const Tensor& neighbor_states, const Tensor& relation_tokens,
                                const std::vector<bool>& mask) const {
  const std::size_t n = neighbor_states.rows();
  if (relation_tokens.rows() != n) {
    throw ShapeError("intention inputs disagree on neighbor count: " + neighbor_states.shape_str() +
                     " vs " + relation_tokens.shape_str());
  }
  bool any_live = false;
  for (std::size_t j = 0; j < n; ++j) any_live = any_live || mask.empty() || mask[j];
  if (!any_live) return empty_scene_;

  const Tensor u = embed_neighbors(neighbor_states);
  const Tensor s = embed_target_relations(relation_tokens);
  const auto w_u = higher_order_attention(u, mask);
  const auto first = first_order_attention(s, mask);
  return fuse(w_u, first.weights, first.values, mask);
}

}  // namespace moif
