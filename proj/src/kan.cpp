#include "moif/kan.hpp"

#include <algorithm>

#include "moif/errors.hpp"

namespace moif {

using ad::Tensor;

SplineBasis SplineBasis::uniform(double lo, double hi, std::size_t intervals, std::size_t order) {
  if (!(lo < hi)) throw ParameterError("spline range must satisfy lo < hi");
  if (intervals == 0) throw ParameterError("spline grid needs at least one interval");
  SplineBasis b;
  b.lo = lo;
  b.hi = hi;
  b.order = order;
  b.intervals = intervals;
  const std::size_t n = intervals + 2 * order + 1;
  b.knots.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double offset = static_cast<double>(i) - static_cast<double>(order);
    b.knots[i] = lo + (hi - lo) * offset / static_cast<double>(intervals);
  }
  return b;
}

namespace {

// Basis values of degree `degree` on the full knot vector, G + 2k - degree of them.
std::vector<double> cox_de_boor(double x, const SplineBasis& b, std::size_t degree) {
  const auto& t = b.knots;
  const std::size_t n0 = t.size() - 1;
  std::vector<double> v(n0, 0.0);
  for (std::size_t i = 0; i < n0; ++i) v[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  for (std::size_t d = 1; d <= degree; ++d) {
    for (std::size_t i = 0; i + d < n0; ++i) {
      const double left = (x - t[i]) / (t[i + d] - t[i]);
      const double right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]);
      v[i] = left * v[i] + right * v[i + 1];
    }
  }
  v.resize(n0 - degree);
  return v;
}

}  // namespace

std::vector<double> bspline_basis(double x, const SplineBasis& basis) {
  auto v = cox_de_boor(std::clamp(x, basis.lo, basis.hi), basis, basis.order);
  v.resize(basis.count());
  return v;
}

std::vector<double> bspline_basis_derivative(double x, const SplineBasis& basis) {
  std::vector<double> out(basis.count(), 0.0);
  if (basis.order == 0 || x < basis.lo || x > basis.hi) return out;
  const auto lower = cox_de_boor(x, basis, basis.order - 1);
  const auto& t = basis.knots;
  const double k = static_cast<double>(basis.order);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = k / (t[i + basis.order] - t[i]) * lower[i] -
             k / (t[i + basis.order + 1] - t[i + 1]) * lower[i + 1];
  }
  return out;
}

Tensor bspline_features(const Tensor& x, const SplineBasis& basis) {
  const std::size_t r = x.rows(), m = x.cols(), nb = basis.count();
  std::vector<double> values(r * m * nb);
  std::vector<double> slopes(r * m * nb);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t p = 0; p < m; ++p) {
      const double xv = x.at(i, p);
      const auto v = bspline_basis(xv, basis);
      const auto d = bspline_basis_derivative(xv, basis);
      std::copy(v.begin(), v.end(), values.begin() + static_cast<std::ptrdiff_t>((i * m + p) * nb));
      std::copy(d.begin(), d.end(), slopes.begin() + static_cast<std::ptrdiff_t>((i * m + p) * nb));
    }
  return ad::detail::make_result(
      "bspline_features", r, m * nb, std::move(values), {x},
      [slopes = std::move(slopes), r, m, nb](ad::Node& self) {
        ad::Node& in = *self.parents[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t p = 0; p < m; ++p) {
            double acc = 0.0;
            const std::size_t base = (i * m + p) * nb;
            for (std::size_t c = 0; c < nb; ++c) acc += self.grad[base + c] * slopes[base + c];
            in.grad[i * m + p] += acc;
          }
      });
}

KanLayer KanLayer::create(ad::ParamStore& params, const std::string& name, std::size_t in,
                          std::size_t out, const SplineBasis& basis, nn::Rng& rng, bool zero_base) {
  KanLayer layer;
  layer.basis = basis;
  layer.coeffs = params.add(name + ".coeffs", out, in * basis.count(),
                            std::vector<double>(out * in * basis.count(), 0.0));
  layer.base = params.add(name + ".base", out, in,
                          zero_base ? std::vector<double>(out * in, 0.0) : nn::xavier_uniform(out, in, rng));
  return layer;
}

Tensor KanLayer::forward(const Tensor& x) const {
  if (x.cols() != in()) {
    throw ShapeError("kan layer expects width " + std::to_string(in()) + ", got " + x.shape_str());
  }
  const Tensor base_in = linear_base ? x : ad::silu(x);
  return ad::matmul_nt(base_in, base) + ad::matmul_nt(bspline_features(x, basis), coeffs);
}

void KanConfig::validate() const {
  if (t_fut == 0) throw ConfigError("kan: t_fut must be >= 1");
  if (layers == 0) throw ConfigError("kan: need at least one layer");
  if (!(input_scale > 0.0)) throw ConfigError("kan: input_scale must be positive");
  if (!(lo < hi)) throw ConfigError("kan: spline range must satisfy lo < hi");
  if (grid == 0) throw ConfigError("kan: grid must be >= 1");
}

KanStack KanStack::create(ad::ParamStore& params, const std::string& prefix, const KanConfig& config,
                          nn::Rng& rng) {
  config.validate();
  KanStack s;
  s.config_ = config;
  const auto basis = SplineBasis::uniform(config.lo, config.hi, config.grid, config.order);
  const std::size_t hidden = config.hidden == 0 ? config.width() : config.hidden;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? config.width() : hidden;
    const std::size_t out = l + 1 == config.layers ? config.width() : hidden;
    s.layers_.push_back(KanLayer::create(params, prefix + ".layer" + std::to_string(l), in, out, basis, rng,
                                         l + 1 == config.layers));
  }
  return s;
}

Tensor KanStack::apply(const Tensor& gamma) const {
  Tensor h = gamma;
  for (const auto& layer : layers_) h = layer.forward(h);
  return h;
}

Tensor KanStack::refine_rows(const Tensor& raw_rows) const {
  if (raw_rows.cols() != config_.width()) {
    throw ConfigError("kan stack width " + std::to_string(config_.width()) + " does not match trajectory " +
                      raw_rows.shape_str());
  }
  const double s = config_.input_scale;
  return raw_rows + ad::scale(apply(ad::scale(raw_rows, 1.0 / s)), s);
}

Tensor KanStack::optimize_trajectory(const Tensor& raw) const {
  if (raw.rows() != config_.t_fut || raw.cols() != 2) {
    throw ConfigError("kan stack expects a " + std::to_string(config_.t_fut) + " x 2 trajectory, got " +
                      raw.shape_str());
  }
  return unflatten_trajectory(refine_rows(flatten_trajectory(raw)));
}

Tensor flatten_trajectory(const Tensor& traj) {
  if (traj.cols() != 2) throw ShapeError("flatten_trajectory expects t x 2, got " + traj.shape_str());
  return ad::reshape(traj, 1, traj.size());
}

Tensor unflatten_trajectory(const Tensor& flat) {
  if (flat.rows() != 1 || flat.cols() % 2 != 0) {
    throw ShapeError("unflatten_trajectory expects 1 x 2t, got " + flat.shape_str());
  }
  return ad::reshape(flat, flat.cols() / 2, 2);
}

}  // namespace moif
