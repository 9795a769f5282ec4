#include "moif/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "moif/errors.hpp"

namespace moif {

namespace {

double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

void check_pair(const Trajectory& traj, const Trajectory& gt, const char* what) {
  if (traj.empty() || traj.size() != gt.size()) {
    throw ShapeError(std::string(what) + ": trajectory has " + std::to_string(traj.size()) + " steps, ground truth " +
                     std::to_string(gt.size()));
  }
}


}  // namespace

void PredictionSet::validate() const {
  if (samples.empty()) throw ContractError("prediction set is empty");
  const std::size_t t = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != t) throw ContractError("prediction set is ragged");
    for (const auto& p : s)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ContractError("prediction set holds a non-finite value");
  }
}

double ade(const Trajectory& traj, const Trajectory& gt) {
  check_pair(traj, gt, "ade");
  double s = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) s += dist(traj[t], gt[t]);
  return s / static_cast<double>(gt.size());
}

double fde(const Trajectory& traj, const Trajectory& gt) {
  check_pair(traj, gt, "fde");
  return dist(traj.back(), gt.back());
}

BestOfK best_of_k(const PredictionSet& pred, const Trajectory& gt, BestOfKMode mode) {
  return best_of_k(pred, gt, pred.samples.size(), mode);
}

BestOfK best_of_k(const PredictionSet& pred, const Trajectory& gt, std::size_t k, BestOfKMode mode) {
  if (k == 0 || k > pred.samples.size()) {
    throw ContractError("best_of_k: k = " + std::to_string(k) + " with " + std::to_string(pred.samples.size()) +
                        " samples");
  }
  BestOfK r{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (std::size_t s = 0; s < k; ++s) {
    const double a = ade(pred.samples[s], gt);
    const double f = fde(pred.samples[s], gt);
    if (mode == BestOfKMode::kJoint) {
      if (a < r.min_ade) r = {a, f};
    } else {
      r.min_ade = std::min(r.min_ade, a);
      r.min_fde = std::min(r.min_fde, f);
    }
  }
  return r;
}

double nll_estimate(const PredictionSet& pred, const Trajectory& gt) {
  pred.validate();
  const std::size_t k = pred.samples.size();
  if (k < 2) throw ContractError("nll_estimate needs at least two samples");
  check_pair(pred.samples.front(), gt, "nll_estimate");
  const double kd = static_cast<double>(k);
  const double factor = std::pow(kd, -1.0 / 6.0);

  double total = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    double mx = 0.0, my = 0.0;
    for (const auto& s : pred.samples) {
      mx += s[t].x;
      my += s[t].y;
    }
    mx /= kd;
    my /= kd;
    double vx = 0.0, vy = 0.0;
    for (const auto& s : pred.samples) {
      vx += (s[t].x - mx) * (s[t].x - mx);
      vy += (s[t].y - my) * (s[t].y - my);
    }
    const double hx = std::max(kBandwidthFloor, factor * std::sqrt(vx / (kd - 1.0)));
    const double hy = std::max(kBandwidthFloor, factor * std::sqrt(vy / (kd - 1.0)));

    // log-sum-exp over kernels for a finite result far from every sample
    std::vector<double> logs;
    logs.reserve(k);
    for (const auto& s : pred.samples) {
      const double zx = (gt[t].x - s[t].x) / hx;
      const double zy = (gt[t].y - s[t].y) / hy;
      logs.push_back(-0.5 * (zx * zx + zy * zy));
    }
    const double peak = *std::max_element(logs.begin(), logs.end());
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - peak);
    const double log_density = peak + std::log(acc / kd) - std::log(2.0 * std::numbers::pi * hx * hy);
    total -= log_density;
  }
  return total / static_cast<double>(gt.size());
}

Trajectory constant_velocity_baseline(const Trajectory& history, std::size_t t_fut) {
  if (history.size() < 2) throw ContractError("constant-velocity baseline needs two history frames");
  const Vec2 last = history.back();
  const Vec2 step = last - history[history.size() - 2];
  Trajectory out;
  out.reserve(t_fut);
  for (std::size_t t = 1; t <= t_fut; ++t) out.push_back(last + static_cast<double>(t) * step);
  return out;
}

Trajectory constant_velocity_baseline(const Scene& scene) {
  return constant_velocity_baseline(scene_history(scene), scene.t_fut);
}

Trajectory scene_history(const Scene& scene) {
  return Trajectory(scene.target.positions.begin(),
                    scene.target.positions.begin() + static_cast<std::ptrdiff_t>(scene.t_hist));
}

Trajectory scene_future(const Scene& scene) {
  if (scene.target.length() < scene.t_hist + scene.t_fut) throw ContractError("scene has no ground-truth future");
  const auto begin = scene.target.positions.begin() + static_cast<std::ptrdiff_t>(scene.t_hist);
  return Trajectory(begin, begin + static_cast<std::ptrdiff_t>(scene.t_fut));
}

void MetricReport::aggregate() {
  min_ade = min_fde = nll = 0.0;
  if (per_scene.empty()) return;
  for (const auto& s : per_scene) {
    min_ade += s.min_ade;
    min_fde += s.min_fde;
    nll += s.nll;
  }
  const double n = static_cast<double>(per_scene.size());
  min_ade /= n;
  min_fde /= n;
  nll /= n;
}

nlohmann::json MetricReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : per_scene) {
    rows.push_back({{"scene_id", s.scene_id}, {"min_ade", num(s.min_ade)}, {"min_fde", num(s.min_fde)},
                    {"nll", num(s.nll)}});
  }
  return {{"k", k},
          {"n_scenes", per_scene.size()},
          {"aggregate", {{"min_ade", num(min_ade)}, {"min_fde", num(min_fde)}, {"nll", num(nll)}}},
          {"per_scene", rows}};
}

}  // namespace moif
