#include "moif/nn.hpp"

#include <cmath>

namespace moif::nn {

std::vector<double> xavier_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return w;
}

Linear Linear::create(ad::ParamStore& params, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng) {
  Linear l;
  l.weight = params.add(name + ".weight", in, out, xavier_uniform(in, out, rng));
  l.bias = params.add(name + ".bias", 1, out, std::vector<double>(out, 0.0));
  return l;
}

Linear Linear::create_zero(ad::ParamStore& params, const std::string& name, std::size_t in,
                           std::size_t out) {
  Linear l;
  l.weight = params.add(name + ".weight", in, out, std::vector<double>(in * out, 0.0));
  l.bias = params.add(name + ".bias", 1, out, std::vector<double>(out, 0.0));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  return ad::add_row(ad::matmul(x, weight), bias);
}

Mlp Mlp::create(ad::ParamStore& params, const std::string& name, std::size_t in,
                std::size_t hidden_width, std::size_t out_width, Rng& rng) {
  Mlp m;
  m.hidden = Linear::create(params, name + ".hidden", in, hidden_width, rng);
  m.out = Linear::create(params, name + ".out", hidden_width, out_width, rng);
  return m;
}

Tensor Mlp::operator()(const Tensor& x) const { return out(ad::tanh(hidden(x))); }

GruCell GruCell::create(ad::ParamStore& params, const std::string& name, std::size_t input_width,
                        std::size_t hidden_width, Rng& rng) {
  GruCell g;
  g.input_update = Linear::create(params, name + ".x_update", input_width, hidden_width, rng);
  g.input_reset = Linear::create(params, name + ".x_reset", input_width, hidden_width, rng);
  g.input_new = Linear::create(params, name + ".x_new", input_width, hidden_width, rng);
  g.hidden_update = Linear::create(params, name + ".h_update", hidden_width, hidden_width, rng);
  g.hidden_reset = Linear::create(params, name + ".h_reset", hidden_width, hidden_width, rng);
  g.hidden_new = Linear::create(params, name + ".h_new", hidden_width, hidden_width, rng);
  return g;
}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  const Tensor u = ad::sigmoid(input_update(x) + hidden_update(h));
  const Tensor r = ad::sigmoid(input_reset(x) + hidden_reset(h));
  const Tensor n = ad::tanh(input_new(x) + ad::mul(r, hidden_new(h)));
  // h + u ⊙ (n - h)
  return h + ad::mul(u, n - h);
}

}  // namespace moif::nn
