#pragma once

// Multi-order intention fusion: first-order attention over target-neighbor
// relation tokens, higher-order multi-subspace attention among neighbors, and
// their η-weighted fusion into a single intention embedding.

#include <string>
#include <vector>

#include "moif/autodiff.hpp"
#include "moif/nn.hpp"

namespace moif {

enum class ScaleMode {
  kPaperLinear,  // logits / d
  kSqrt,         // logits / sqrt(width)
};

struct MoifConfig {
  std::size_t subspaces = 6;  // M
  std::size_t embed_dim = 24;
  std::size_t t_hist = 8;
  /// Divisors of the attention logits in kPaperLinear mode; 0 selects the
  /// default (subspace width for the higher-order layer, embed_dim for the
  /// first-order layer).
  double d_higher = 0.0;
  double d_first = 0.0;
  ScaleMode scale_mode = ScaleMode::kPaperLinear;

  /// ParameterError on M == 0, embed_dim % M != 0, negative divisors.
  void validate() const;
  std::size_t subspace_width() const { return embed_dim / subspaces; }
  double higher_order_scale() const;
  double first_order_scale() const;
  std::size_t neighbor_input_width() const { return 4 * t_hist; }
  std::size_t relation_input_width() const { return 5 * t_hist; }
};

/// Number of pairwise intentions among n neighbors, (n-1)·n + n.
/// ParameterError if n < 0.
long intention_count(long n);

struct FirstOrderAttention {
  ad::Tensor weights;  // W_S, N x N
  ad::Tensor values;   // V_S, N x embed_dim
};

class IntentionFusion {
 public:
  static IntentionFusion create(ad::ParamStore& params, const std::string& prefix,
                                const MoifConfig& config, nn::Rng& rng);

  const MoifConfig& config() const { return config_; }

  /// f_U: N x 4·t_hist -> N x embed_dim.
  ad::Tensor embed_neighbors(const ad::Tensor& states) const;
  /// f_S: N x 5·t_hist -> N x embed_dim. Each row is the target's own (x, y)
  /// history followed by the (d, θ, e) channels of one neighbor.
  ad::Tensor embed_target_relations(const ad::Tensor& tokens) const;

  /// One N x N row-stochastic matrix per subspace. `mask[j] == false` removes
  /// token j as a key.
  std::vector<ad::Tensor> higher_order_attention(const ad::Tensor& u,
                                                 const std::vector<bool>& mask) const;
  FirstOrderAttention first_order_attention(const ad::Tensor& s, const std::vector<bool>& mask) const;

  /// A = (Σ η_m W_U^m + W_S) V_S, then two residual blocks, the output layer,
  /// and a mean over the live tokens. Returns 1 x embed_dim.
  ad::Tensor fuse(const std::vector<ad::Tensor>& w_u, const ad::Tensor& w_s, const ad::Tensor& v_s,
                  const std::vector<bool>& mask) const;

  /// Full path from raw token inputs to I. Scenes without a live neighbor get
  /// the learned no-neighbor embedding.
  ad::Tensor forward(const ad::Tensor& neighbor_states, const ad::Tensor& relation_tokens,
                     const std::vector<bool>& mask) const;

  const ad::Tensor& eta() const { return eta_; }
  const ad::Tensor& no_neighbor_embedding() const { return empty_scene_; }

 private:
  MoifConfig config_;
  nn::Mlp f_u_, f_s_;
  nn::Linear q_u_, k_u_;
  nn::Linear q_s_, k_s_, v_s_;
  nn::Mlp feed_forward_;
  nn::Linear output_;
  ad::Tensor eta_;          // 1 x M
  ad::Tensor empty_scene_;  // 1 x embed_dim
};

}  // namespace moif
