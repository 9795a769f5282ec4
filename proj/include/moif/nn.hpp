#pragma once

// Small trainable building blocks over the autodiff tensors. All layers use
// the row-vector convention: inputs are (batch x in), weights are (in x out).

#include <random>
#include <string>

#include "moif/autodiff.hpp"

namespace moif::nn {

using ad::Tensor;
using Rng = std::mt19937_64;

/// Xavier-uniform values for an in x out weight matrix.
std::vector<double> xavier_uniform(std::size_t in, std::size_t out, Rng& rng);

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  /// Registers `<name>.weight` and `<name>.bias`. Bias starts at zero.
  static Linear create(ad::ParamStore& params, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng);
  /// Same, with every entry zero.
  static Linear create_zero(ad::ParamStore& params, const std::string& name, std::size_t in,
                            std::size_t out);

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
  Tensor operator()(const Tensor& x) const;
};

/// Two-layer perceptron: out(tanh(hidden(x))).
struct Mlp {
  Linear hidden;
  Linear out;

  static Mlp create(ad::ParamStore& params, const std::string& name, std::size_t in,
                    std::size_t hidden_width, std::size_t out_width, Rng& rng);
  std::size_t in() const { return hidden.in(); }
  Tensor operator()(const Tensor& x) const;
};

/// Gated recurrent cell.
///   u  = sigmoid(x Wu + h Uu + bu)          update gate
///   r  = sigmoid(x Wr + h Ur + br)          reset gate
///   n  = tanh(x Wn + bn + r ⊙ (h Un + bhn))
///   h' = u ⊙ n + (1 - u) ⊙ h
/// so a closed update gate (u = 0) passes the hidden state through unchanged.
struct GruCell {
  Linear input_update, input_reset, input_new;     // x -> hidden
  Linear hidden_update, hidden_reset, hidden_new;  // h -> hidden

  static GruCell create(ad::ParamStore& params, const std::string& name, std::size_t input_width,
                        std::size_t hidden_width, Rng& rng);
  std::size_t hidden_width() const { return hidden_update.out(); }
  Tensor operator()(const Tensor& x, const Tensor& h) const;
};

}  // namespace moif::nn
