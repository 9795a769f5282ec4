#include <gtest/gtest.h>

#include <cmath>

#include "moif/approximator.hpp"
#include "moif/errors.hpp"
#include "support.hpp"

namespace moif {
namespace {

using ad::Tensor;

struct Fixture {
  ApproximatorConfig config{.embed_dim = 8, .latent_dim = 4, .t_fut = 5};
  ad::ParamStore params;
  nn::Rng rng{9};
  TrajectoryApproximator approx = TrajectoryApproximator::create(params, "a", config, rng);
};

TEST(Approximator, ReparameterizationMoments) {
  const LatentParams p{Tensor::constant(1, 2, {1.5, -0.5}), Tensor::constant(1, 2, {std::log(0.5), std::log(2.0)})};
  auto noise = seeded_noise(13);
  const int n = 40000;
  double m0 = 0, m1 = 0, s0 = 0, s1 = 0;
  for (int i = 0; i < n; ++i) {
    const Tensor z = TrajectoryApproximator::reparameterize(p, Tensor::constant(1, 2, noise(2)));
    m0 += z.at(0, 0);
    m1 += z.at(0, 1);
    s0 += z.at(0, 0) * z.at(0, 0);
    s1 += z.at(0, 1) * z.at(0, 1);
  }
  m0 /= n, m1 /= n;
  EXPECT_NEAR(m0, 1.5, 0.02);
  EXPECT_NEAR(m1, -0.5, 0.05);
  EXPECT_NEAR(std::sqrt(s0 / n - m0 * m0), 0.5, 0.01);
  EXPECT_NEAR(std::sqrt(s1 / n - m1 * m1), 2.0, 0.04);
}

TEST(Approximator, ReparameterizationGradient) {
  const Tensor mean = Tensor::leaf(1, 2, {0.1, 0.2});
  const Tensor ls = Tensor::leaf(1, 2, {0.3, -0.4});
  const Tensor eps = Tensor::constant(1, 2, {0.7, -1.1});
  ad::backward(ad::sum(TrajectoryApproximator::reparameterize({mean, ls}, eps)));
  EXPECT_EQ(mean.grad(), (std::vector<double>{1, 1}));
  EXPECT_NEAR(ls.grad()[0], 0.7 * std::exp(0.3), 1e-15);
  EXPECT_NEAR(ls.grad()[1], -1.1 * std::exp(-0.4), 1e-15);
  EXPECT_THROW(TrajectoryApproximator::reparameterize({mean, ls}, Tensor::leaf(1, 2, {0, 0})), ContractError);
}

TEST(Approximator, ModeContracts) {
  Fixture f;
  const Tensor intention = Tensor::zeros(1, 8);
  const Tensor future = Tensor::zeros(5, 2);
  auto noise = seeded_noise(1);
  EXPECT_THROW(f.approx.rollout(intention, Mode::kTrain, nullptr, 1, noise), ContractError);
  EXPECT_THROW(f.approx.rollout(intention, Mode::kTest, &future, 3, noise), ContractError);
  EXPECT_THROW(f.approx.rollout(intention, Mode::kTrain, &future, 2, noise), ContractError);
  EXPECT_THROW(f.approx.rollout(intention, Mode::kTest, nullptr, 0, noise), ContractError);
  EXPECT_THROW(f.approx.embed_future(Tensor::zeros(1, 2), Mode::kTest), ContractError);
  const Tensor b = Tensor::zeros(1, 8);
  EXPECT_THROW(f.approx.latent_params(intention, &b, Mode::kTest), ContractError);
  EXPECT_THROW(f.approx.latent_params(intention, nullptr, Mode::kTrain), ContractError);
  const Tensor wrong = Tensor::zeros(4, 2);
  EXPECT_THROW(f.approx.rollout(intention, Mode::kTrain, &wrong, 1, noise), ShapeError);
}

TEST(Approximator, RolloutShapesAndTrace) {
  Fixture f;
  std::mt19937_64 rng(2);
  const Tensor intention = test::random_constant(1, 8, rng);
  const Tensor future = test::random_constant(5, 2, rng);
  const auto train = f.approx.rollout(intention, Mode::kTrain, &future, 1, seeded_noise(3));
  EXPECT_EQ(train.trajectory.rows(), 1u);
  EXPECT_EQ(train.trajectory.cols(), 10u);
  ASSERT_EQ(train.trace.size(), 5u);
  for (const auto& s : train.trace) EXPECT_TRUE(s.posterior.has_value());
  const auto test = f.approx.rollout(intention, Mode::kTest, nullptr, 7, seeded_noise(3));
  EXPECT_EQ(test.trajectory.rows(), 7u);
  for (const auto& s : test.trace) EXPECT_FALSE(s.posterior.has_value());
  // Independent noise per sample gives distinct trajectories.
  EXPECT_NE(test.trajectory.at(0, 9), test.trajectory.at(1, 9));
}

TEST(Approximator, PositionsAccumulateDecodedSteps) {
  Fixture f;
  std::mt19937_64 rng(4);
  const Tensor intention = test::random_constant(1, 8, rng);
  const auto r = f.approx.rollout(intention, Mode::kTest, nullptr, 1, seeded_noise(5));
  Tensor state = intention, prev = Tensor::zeros(1, 2);
  for (std::size_t t = 0; t < 5; ++t) {
    const Tensor g = f.approx.decode_step(r.trace[t].z, state, prev);
    EXPECT_EQ(g.at(0, 0), r.trajectory.at(0, 2 * t));
    EXPECT_EQ(g.at(0, 1), r.trajectory.at(0, 2 * t + 1));
    state = f.approx.update_intention(state, r.trace[t].z, g);
    prev = g;
  }
}

TEST(Approximator, SameSeedSameSamples) {
  Fixture f;
  const Tensor intention = Tensor::filled(1, 8, 0.3);
  const auto a = f.approx.rollout(intention, Mode::kTest, nullptr, 4, seeded_noise(11));
  const auto b = f.approx.rollout(intention, Mode::kTest, nullptr, 4, seeded_noise(11));
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) EXPECT_EQ(a.trajectory.data()[i], b.trajectory.data()[i]);
}

TEST(Approximator, LogSigmaClamped) {
  Fixture f;
  std::mt19937_64 rng(6);
  const auto p = f.approx.prior(test::random_constant(1, 8, rng, -1e4, 1e4));
  for (double v : p.log_sigma.data()) {
    EXPECT_GE(v, kLogSigmaMin);
    EXPECT_LE(v, kLogSigmaMax);
  }
}

TEST(Approximator, ClosedUpdateGateKeepsState) {
  Fixture f;
  auto& bias = f.params.get("a.f_zg.x_update.bias");
  std::fill(bias.mutable_data().begin(), bias.mutable_data().end(), -60.0);
  std::mt19937_64 rng(7);
  const Tensor h = test::random_constant(2, 8, rng);
  const Tensor next = f.approx.update_intention(h, test::random_constant(2, 4, rng), test::random_constant(2, 2, rng));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(next.data()[i], h.data()[i], 1e-12);
  EXPECT_THROW(f.approx.update_intention(Tensor::zeros(1, 7), Tensor::zeros(1, 4), Tensor::zeros(1, 2)), ShapeError);
}

TEST(Approximator, PriorPathInTrainModeHasNoPosterior) {
  Fixture f;
  const Tensor intention = Tensor::filled(2, 8, 0.1);
  const auto r = f.approx.rollout_rows(intention, Tensor::zeros(2, 2), Mode::kTrain, nullptr, seeded_noise(1), false);
  for (const auto& s : r.trace) EXPECT_FALSE(s.posterior.has_value());
}

TEST(Approximator, ConfigValidation) {
  ApproximatorConfig c;
  c.latent_dim = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}

}  // namespace
}  // namespace moif
