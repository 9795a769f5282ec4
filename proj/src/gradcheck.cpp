#include "moif/gradcheck.hpp"

#include <chrono>
#include <random>

#include "moif/errors.hpp"
#include "moif/synthetic.hpp"

namespace moif {

using ad::Tensor;

namespace {

constexpr double kComponentTol = 1e-5;
constexpr double kModelTol = 1e-4;
constexpr double kTensorTol = 1e-6;

std::vector<double> uniform(std::size_t n, double lo, double hi, nn::Rng& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

Tensor random_leaf(std::size_t r, std::size_t c, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::leaf(r, c, uniform(r * c, lo, hi, rng));
}

/// Scalar probe: Σ w ⊙ x with fixed random weights, so every output entry
/// contributes a distinct amount.
Tensor probe(const Tensor& x, const Tensor& w) { return ad::sum(ad::mul(x, w)); }

template <typename F>
ScopeReport timed(const std::string& scope, double tol, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  ScopeReport r;
  r.scope = scope;
  r.tolerance = tol;
  r.report = body(tol);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Five-point central differences. The relative error is taken against
// max(|analytic|, |numeric|, 1e-4): parameters that the probe barely reaches
// (or not at all, e.g. neighbor-neighbor attention with a single neighbor)
// only carry round-off of order 1e-16·|f|/h, which a smaller floor would turn
// into spurious relative errors.
ad::GradCheckOptions options(double tol, double step = 3e-4) {
  ad::GradCheckOptions o;
  o.tol = tol;
  o.step = step;
  o.floor = 1e-4;
  return o;
}

ScopeReport check_tensor(std::uint64_t seed) {
  return timed("tensor", kTensorTol, [&](double tol) {
    nn::Rng rng(seed);
    Tensor a = random_leaf(3, 4, rng), b = random_leaf(4, 3, rng), c = random_leaf(3, 3, rng);
    Tensor v = random_leaf(3, 2, rng, 0.5, 1.5);
    const Tensor w = Tensor::constant(3, 3, uniform(9, -1, 1, rng));
    const std::vector<bool> mask = {true, false, true};
    auto f = [=] {
      const Tensor m = ad::matmul(a, b);
      const Tensor s = ad::softmax_rows(m + c, 2.0, mask);
      const Tensor g = ad::tanh(s) + ad::sigmoid(m) + ad::silu(ad::matmul_nt(a, a));
      const Tensor q = ad::div(ad::exp(ad::scale(c, 0.3)), ad::add_scalar(ad::mul(c, c), 1.0));
      const Tensor n = ad::concat_cols({ad::row_norm(v), ad::row_dot(v, v), ad::slice_cols(g, 0, 1)});
      const Tensor cosines = ad::scale(ad::tanh(ad::slice_cols(g, 1, 2)), 0.9);
      return probe(g + q, w) + ad::sum(ad::acos(cosines)) + ad::sum(ad::reshape(n, 1, 9)) +
             ad::mean(ad::transpose(ad::clamp(q, -0.9, 0.9)));
    };
    return ad::finite_diff_check(f, {{"a", a}, {"b", b}, {"c", c}, {"v", v}}, options(tol, 1e-5));
  });
}

ScopeReport check_moif(const ModelConfig& config, std::uint64_t seed) {
  return timed("moif", kComponentTol, [&](double tol) {
    nn::Rng rng(seed);
    ad::ParamStore params;
    const auto fusion = IntentionFusion::create(params, "fusion", config.moif(), rng);
    // Random, non-zero parameters everywhere so that no path is trivially dead.
    for (auto& [name, t] : params) {
      auto data = t.mutable_data();
      const auto v = uniform(data.size(), -0.5, 0.5, rng);
      std::copy(v.begin(), v.end(), data.begin());
    }
    const std::size_t n = 3;
    const Tensor states = Tensor::constant(n, config.moif().neighbor_input_width(),
                                           uniform(n * config.moif().neighbor_input_width(), -1, 1, rng));
    const Tensor tokens = Tensor::constant(n, config.moif().relation_input_width(),
                                           uniform(n * config.moif().relation_input_width(), -1, 1, rng));
    const Tensor w = Tensor::constant(1, config.embed_dim, uniform(config.embed_dim, -1, 1, rng));
    const std::vector<bool> mask = {true, true, false};
    auto f = [&] { return probe(fusion.forward(states, tokens, mask), w); };
    return ad::finite_diff_check(f, params, options(tol));
  });
}

ScopeReport check_approximator(const ModelConfig& config, std::uint64_t seed) {
  return timed("approximator", kModelTol, [&](double tol) {
    nn::Rng rng(seed);
    ad::ParamStore params;
    const auto approx = TrajectoryApproximator::create(params, "approx", config.approximator(), rng);
    const std::size_t rows = 2, tf = config.t_fut;
    Tensor intention = random_leaf(rows, config.embed_dim, rng);
    const Tensor future = Tensor::constant(rows, 2 * tf, uniform(rows * 2 * tf, -1, 1, rng));
    const Tensor w = Tensor::constant(rows, 2 * tf, uniform(rows * 2 * tf, -1, 1, rng));
    auto f = [&] {
      const auto r = approx.rollout_rows(intention, Tensor::zeros(rows, 2), Mode::kTrain, &future, seeded_noise(seed));
      Tensor total = probe(r.trajectory, w);
      for (const auto& step : r.trace) {
        total = total + ad::mean(step.posterior->mean) + ad::mean(step.prior.log_sigma);
      }
      return total;
    };
    std::vector<std::pair<std::string, Tensor>> leaves{{"intention", intention}};
    for (auto& [name, t] : params) leaves.emplace_back(name, t);
    return ad::finite_diff_check(f, leaves, options(tol));
  });
}

ScopeReport check_kan(const ModelConfig& config, std::uint64_t seed) {
  return timed("kan", kModelTol, [&](double tol) {
    nn::Rng rng(seed);
    ad::ParamStore params;
    const auto stack = KanStack::create(params, "kan", config.kan(), rng);
    for (auto& [name, t] : params) {
      auto data = t.mutable_data();
      const auto v = uniform(data.size(), -0.3, 0.3, rng);
      std::copy(v.begin(), v.end(), data.begin());
    }
    const std::size_t width = config.kan().width();
    // Inputs sit mid-interval so that perturbations do not cross a knot.
    const auto basis = SplineBasis::uniform(config.kan().lo, config.kan().hi, config.kan().grid, config.kan().order);
    const double h = (basis.hi - basis.lo) / static_cast<double>(basis.intervals);
    std::uniform_int_distribution<std::size_t> cell(0, basis.intervals - 1);
    std::vector<double> raw(2 * width);
    for (double& x : raw) x = config.kan().input_scale * (basis.lo + h * (static_cast<double>(cell(rng)) + 0.5));
    const Tensor input = Tensor::constant(2, width, raw);
    const Tensor w = Tensor::constant(2, width, uniform(2 * width, -1, 1, rng));
    auto f = [&] { return probe(stack.refine_rows(input), w); };
    return ad::finite_diff_check(f, params, options(tol));
  });
}

ScopeReport check_objective(const ModelConfig& config, std::uint64_t seed) {
  return timed("objective", kModelTol, [&](double tol) {
    nn::Rng rng(seed);
    const std::size_t rows = 2, tf = config.t_fut, l = config.latent_dim;
    Tensor pred = random_leaf(rows, 2 * tf, rng, -2, 2);
    const Tensor gt = Tensor::constant(rows, 2 * tf, uniform(rows * 2 * tf, -2, 2, rng));
    std::vector<Tensor> leaves_q, leaves_p;
    std::vector<LatentStep> trace(tf);
    std::vector<std::pair<std::string, Tensor>> leaves{{"pred", pred}};
    for (std::size_t t = 0; t < tf; ++t) {
      trace[t].posterior = LatentParams{random_leaf(rows, l, rng), random_leaf(rows, l, rng)};
      trace[t].prior = LatentParams{random_leaf(rows, l, rng), random_leaf(rows, l, rng)};
      const std::string s = std::to_string(t);
      leaves.emplace_back("q_mean." + s, trace[t].posterior->mean);
      leaves.emplace_back("q_log_sigma." + s, trace[t].posterior->log_sigma);
      leaves.emplace_back("p_mean." + s, trace[t].prior.mean);
      leaves.emplace_back("p_log_sigma." + s, trace[t].prior.log_sigma);
    }
    LossConfig loss;
    auto f = [&] { return total_loss(pred, trace, gt, Tensor::zeros(rows, 2), loss).total_tensor; };
    return ad::finite_diff_check(f, leaves, options(tol));
  });
}

}  // namespace

GradScope parse_grad_scope(const std::string& name) {
  if (name == "tensor") return GradScope::kTensor;
  if (name == "moif") return GradScope::kMoif;
  if (name == "approximator") return GradScope::kApproximator;
  if (name == "kan") return GradScope::kKan;
  if (name == "objective") return GradScope::kObjective;
  if (name == "all") return GradScope::kAll;
  throw ConfigError("unknown gradcheck scope '" + name + "' (tensor, moif, approximator, kan, objective, all)");
}

std::string to_string(GradScope scope) {
  switch (scope) {
    case GradScope::kTensor: return "tensor";
    case GradScope::kMoif: return "moif";
    case GradScope::kApproximator: return "approximator";
    case GradScope::kKan: return "kan";
    case GradScope::kObjective: return "objective";
    case GradScope::kAll: return "all";
  }
  return "all";
}

ModelConfig toy_gradcheck_config() {
  ModelConfig c;
  c.t_hist = 4;
  c.t_fut = 4;
  c.subspaces = 2;
  c.embed_dim = 8;
  c.latent_dim = 4;
  return c;
}

void check_gradcheck_size(const ModelConfig& config) {
  if (config.embed_dim > 16 || config.t_fut > 4) {
    throw ConfigError("gradcheck needs a small model (embed_dim <= 16, t_fut <= 4); got embed_dim " +
                      std::to_string(config.embed_dim) + ", t_fut " + std::to_string(config.t_fut) +
                      ". Pass a reduced config, or omit --config to use the built-in toy configuration.");
  }
}

ScopeReport gradcheck_full_model(const ModelConfig& config, std::uint64_t seed) {
  check_gradcheck_size(config);
  return timed("full", kModelTol, [&](double tol) {
    ScenarioSpec spec;
    spec.n_agents = 2;
    spec.n_frames = config.t_hist + config.t_fut;
    spec.seed = seed;
    spec.noise_std = 0.05;
    WindowOptions w;
    w.t_hist = config.t_hist;
    w.t_fut = config.t_fut;
    const auto scenes = window_scenes(generate_synthetic(spec), w);
    SocialMoif model(config, seed);
    std::vector<PreparedScene> prepared;
    for (const auto& s : scenes) prepared.push_back(model.prepare(s));
    std::vector<const PreparedScene*> batch;
    for (const auto& p : prepared) batch.push_back(&p);
    // The KAN path is inert at initialization (last base layer and all
    // coefficients at zero); perturb it so its gradients are exercised too.
    nn::Rng rng(seed + 1);
    for (auto& [name, t] : model.params()) {
      if (name.rfind("kan.", 0) != 0) continue;
      auto data = t.mutable_data();
      const auto v = uniform(data.size(), -0.1, 0.1, rng);
      std::copy(v.begin(), v.end(), data.begin());
    }
    const LossConfig loss;
    auto f = [&] { return model.forward_train(batch, loss, seeded_noise(seed)).loss.total_tensor; };
    return ad::finite_diff_check(f, model.params(), options(tol));
  });
}

std::vector<ScopeReport> run_gradcheck(const ModelConfig& config, GradScope scope, std::uint64_t seed) {
  check_gradcheck_size(config);
  config.validate();
  std::vector<ScopeReport> out;
  const bool all = scope == GradScope::kAll;
  if (all || scope == GradScope::kTensor) out.push_back(check_tensor(seed));
  if (all || scope == GradScope::kMoif) out.push_back(check_moif(config, seed));
  if (all || scope == GradScope::kApproximator) out.push_back(check_approximator(config, seed));
  if (all || scope == GradScope::kKan) out.push_back(check_kan(config, seed));
  if (all || scope == GradScope::kObjective) out.push_back(check_objective(config, seed));
  if (all) out.push_back(gradcheck_full_model(config, seed));
  return out;
}

}  // namespace moif
