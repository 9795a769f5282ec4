#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "moif/errors.hpp"
#include "moif/kan.hpp"
#include "support.hpp"

namespace moif {
namespace {

using ad::Tensor;

const SplineBasis kBasis = SplineBasis::uniform(-3.0, 3.0, 5, 3);

TEST(BSpline, KnotLayout) {
  ASSERT_EQ(kBasis.knots.size(), 12u);
  EXPECT_DOUBLE_EQ(kBasis.knots.front(), -3.0 - 3 * 1.2);
  EXPECT_DOUBLE_EQ(kBasis.knots[3], -3.0);
  EXPECT_DOUBLE_EQ(kBasis.knots[8], 3.0);
  EXPECT_EQ(kBasis.count(), 8u);
  EXPECT_THROW(SplineBasis::uniform(1, 1, 5, 3), ParameterError);
  EXPECT_THROW(SplineBasis::uniform(0, 1, 0, 3), ParameterError);
}

TEST(BSpline, PartitionOfUnityAndNonNegative) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    const auto b = bspline_basis(u(rng), kBasis);
    EXPECT_NEAR(std::accumulate(b.begin(), b.end(), 0.0), 1.0, 1e-12);
    for (double v : b) EXPECT_GE(v, 0.0);
  }
  // Values outside the range are clamped onto it.
  EXPECT_EQ(bspline_basis(7.0, kBasis), bspline_basis(3.0, kBasis));
  const auto hi = bspline_basis(3.0, kBasis);
  EXPECT_NEAR(std::accumulate(hi.begin(), hi.end(), 0.0), 1.0, 1e-12);
}

TEST(BSpline, CubicBumpValuesAtKnots) {
  // Uniform cubic B-spline at its knots: 1/6, 4/6, 1/6.
  const auto b = bspline_basis(kBasis.knots[5], kBasis);
  EXPECT_NEAR(b[2], 1.0 / 6, 1e-14);
  EXPECT_NEAR(b[3], 4.0 / 6, 1e-14);
  EXPECT_NEAR(b[4], 1.0 / 6, 1e-14);
}

TEST(BSpline, DerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.9, 2.9);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    const auto d = bspline_basis_derivative(x, kBasis);
    const auto p = bspline_basis(x + h, kBasis), m = bspline_basis(x - h, kBasis);
    double sum = 0.0;
    for (std::size_t c = 0; c < d.size(); ++c) {
      EXPECT_NEAR(d[c], (p[c] - m[c]) / (2 * h), 1e-7);
      sum += d[c];
    }
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
  for (double v : bspline_basis_derivative(4.0, kBasis)) EXPECT_EQ(v, 0.0);
}

TEST(KanLayerTest, LinearBaseWithZeroSplinesIsMatrixProduct) {
  ad::ParamStore params;
  nn::Rng rng(3);
  KanLayer layer = KanLayer::create(params, "k", 3, 2, kBasis, rng, false);
  layer.linear_base = true;
  std::mt19937_64 r2(4);
  const Tensor x = test::random_constant(4, 3, r2, -2, 2);
  const Tensor y = layer.forward(x);
  const Tensor expect = ad::matmul_nt(x, layer.base);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], expect.data()[i], 1e-15);
  EXPECT_THROW(layer.forward(Tensor::zeros(1, 4)), ShapeError);
}

TEST(KanLayerTest, SplinePathReproducesLinearFunction) {
  // Coefficients equal to the Greville abscissae reproduce f(x) = x on the range.
  ad::ParamStore params;
  nn::Rng rng(5);
  KanLayer layer = KanLayer::create(params, "k", 1, 1, kBasis, rng, true);
  auto coeffs = layer.coeffs.mutable_data();
  for (std::size_t c = 0; c < kBasis.count(); ++c)
    coeffs[c] = (kBasis.knots[c + 1] + kBasis.knots[c + 2] + kBasis.knots[c + 3]) / 3.0;
  for (double x : {-2.7, -1.0, 0.0, 0.4, 2.2}) EXPECT_NEAR(layer.forward(Tensor::scalar(x)).item(), x, 1e-12);
}

TEST(KanStackTest, FreshStackIsExactIdentity) {
  ad::ParamStore params;
  nn::Rng rng(6);
  KanConfig cfg;
  const KanStack stack = KanStack::create(params, "kan", cfg, rng);
  std::mt19937_64 r2(7);
  for (int i = 0; i < 20; ++i) {
    const Tensor raw = test::random_constant(cfg.t_fut, 2, r2, -8, 8);
    const Tensor out = stack.optimize_trajectory(raw);
    for (std::size_t k = 0; k < raw.size(); ++k) EXPECT_EQ(out.data()[k], raw.data()[k]);
  }
  EXPECT_EQ(stack.layers().size(), 3u);
  EXPECT_TRUE(params.contains("kan.layer2.base"));
}

TEST(KanStackTest, ShapeMismatchIsConfigError) {
  ad::ParamStore params;
  nn::Rng rng(8);
  const KanStack stack = KanStack::create(params, "kan", KanConfig{.t_fut = 4}, rng);
  EXPECT_THROW(stack.optimize_trajectory(Tensor::zeros(5, 2)), ConfigError);
  EXPECT_THROW(stack.refine_rows(Tensor::zeros(1, 10)), ConfigError);
  EXPECT_THROW(KanConfig{.layers = 0}.validate(), ConfigError);
}

TEST(KanStackTest, FlattenRoundTrip) {
  const Tensor t = Tensor::constant(3, 2, {1, 2, 3, 4, 5, 6});
  const Tensor flat = flatten_trajectory(t);
  EXPECT_EQ(flat.rows(), 1u);
  EXPECT_EQ(flat.at(0, 2), 3);
  const Tensor back = unflatten_trajectory(flat);
  EXPECT_EQ(back.at(2, 1), 6);
  EXPECT_THROW(unflatten_trajectory(Tensor::zeros(1, 3)), ShapeError);
}

TEST(KanStackTest, GradientsReachEveryParameterOnceTrained) {
  ad::ParamStore params;
  nn::Rng rng(9);
  KanConfig cfg{.t_fut = 3, .layers = 2};
  const KanStack stack = KanStack::create(params, "kan", cfg, rng);
  for (auto& [name, t] : params)
    for (double& v : t.mutable_data()) v += 0.05;
  std::mt19937_64 r2(10);
  const Tensor raw = test::random_constant(2, 6, r2, -2, 2);
  auto f = [&] { return ad::sum(ad::mul(stack.refine_rows(raw), stack.refine_rows(raw))); };
  ad::GradCheckOptions opt;
  opt.step = 3e-4;
  opt.floor = 1e-4;
  opt.tol = 1e-4;
  EXPECT_TRUE(ad::finite_diff_check(f, params, opt).pass);
}

}  // namespace
}  // namespace moif
