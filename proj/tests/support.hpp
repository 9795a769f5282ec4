#pragma once

#include <random>
#include <vector>

#include "moif/autodiff.hpp"
#include "moif/scene.hpp"
#include "moif/synthetic.hpp"

namespace moif::test {

inline std::vector<double> uniform_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline ad::Tensor random_leaf(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return ad::Tensor::leaf(r, c, uniform_values(r * c, rng, lo, hi));
}

inline ad::Tensor random_constant(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  return ad::Tensor::constant(r, c, uniform_values(r * c, rng, lo, hi));
}

inline std::vector<Scene> synthetic_scenes(ScenarioKind kind, std::uint64_t seed, std::size_t t_hist = 8,
                                           std::size_t t_fut = 8, int agents = 4, double noise = 0.0,
                                           double interaction = 0.0) {
  ScenarioSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.n_agents = agents;
  spec.noise_std = noise;
  spec.interaction = interaction;
  spec.n_frames = t_hist + t_fut + 4;
  WindowOptions w;
  w.t_hist = t_hist;
  w.t_fut = t_fut;
  w.source = "synthetic";
  return window_scenes(generate_synthetic(spec), w);
}

}  // namespace moif::test
