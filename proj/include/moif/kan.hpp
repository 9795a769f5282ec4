#pragma once

// Global trajectory optimizer built from Kolmogorov-Arnold layers: every edge
// (p -> q) carries its own univariate function
//   φ_qp(x) = base_qp · silu(x) + Σ_c coeff_qpc · B_c(x)
// with B_c the cubic B-splines on a uniform grid.

#include <string>
#include <vector>

#include "moif/autodiff.hpp"
#include "moif/nn.hpp"

namespace moif {

struct SplineBasis {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t order = 3;      // k
  std::size_t intervals = 5;  // G
  std::vector<double> knots;  // G + 2k + 1 uniform knots, k outside [lo, hi] on each side

  /// ParameterError unless lo < hi and intervals >= 1.
  static SplineBasis uniform(double lo, double hi, std::size_t intervals, std::size_t order);
  std::size_t count() const { return intervals + order; }
};

/// Cox-de Boor values of all G + k basis functions at x (clamped into [lo, hi]).
std::vector<double> bspline_basis(double x, const SplineBasis& basis);
/// d/dx of each basis function at x; zero outside [lo, hi] because of the clamp.
std::vector<double> bspline_basis_derivative(double x, const SplineBasis& basis);

/// R x m -> R x (m · (G+k)); column p·(G+k) + c holds B_c(x_p).
ad::Tensor bspline_features(const ad::Tensor& x, const SplineBasis& basis);

struct KanLayer {
  ad::Tensor coeffs;  // out x (in · (G+k))
  ad::Tensor base;    // out x in
  SplineBasis basis;
  /// Replaces silu with the identity on the base path (used by tests).
  bool linear_base = false;

  /// Spline coefficients start at zero; base weights are Xavier-uniform unless
  /// `zero_base`.
  static KanLayer create(ad::ParamStore& params, const std::string& name, std::size_t in,
                         std::size_t out, const SplineBasis& basis, nn::Rng& rng, bool zero_base);

  std::size_t in() const { return base.cols(); }
  std::size_t out() const { return base.rows(); }
  /// R x in -> R x out. ShapeError on a width mismatch.
  ad::Tensor forward(const ad::Tensor& x) const;
};

struct KanConfig {
  std::size_t t_fut = 8;
  std::size_t layers = 3;  // L
  std::size_t hidden = 0;  // 0 means 2·t_fut
  std::size_t grid = 5;
  std::size_t order = 3;
  double lo = -3.0;
  double hi = 3.0;
  /// Trajectories are divided by this before entering the stack and the
  /// correction is multiplied back, so [lo, hi] covers ±3·scale meters.
  double input_scale = 2.0;

  void validate() const;
  std::size_t width() const { return 2 * t_fut; }
};

class KanStack {
 public:
  /// The last layer's base weights start at zero, so a fresh stack outputs
  /// exactly zero and the refined trajectory equals the raw one.
  static KanStack create(ad::ParamStore& params, const std::string& prefix, const KanConfig& config,
                         nn::Rng& rng);

  const KanConfig& config() const { return config_; }
  const std::vector<KanLayer>& layers() const { return layers_; }
  std::vector<KanLayer>& layers() { return layers_; }

  /// Γ^L for a batch of flattened inputs, R x 2·t_fut -> R x 2·t_fut.
  ad::Tensor apply(const ad::Tensor& gamma) const;
  /// raw + scale · stack(raw / scale) over flattened rows; all steps at once.
  ad::Tensor refine_rows(const ad::Tensor& raw_rows) const;
  /// t_fut x 2 -> t_fut x 2. ConfigError if the shape does not match the stack.
  ad::Tensor optimize_trajectory(const ad::Tensor& raw) const;

 private:
  KanConfig config_;
  std::vector<KanLayer> layers_;
};

/// t_fut x 2 -> 1 x 2·t_fut (t-major, x before y) and back.
ad::Tensor flatten_trajectory(const ad::Tensor& traj);
ad::Tensor unflatten_trajectory(const ad::Tensor& flat);

}  // namespace moif
