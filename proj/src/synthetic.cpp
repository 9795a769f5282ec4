#include "moif/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "moif/errors.hpp"

namespace moif {

namespace {

// Pairwise repulsion, exponential in the gap between body radii.
constexpr double kRepulsion = 2.0;     // m/s²
constexpr double kBodyRadius = 0.6;    // m, sum of two radii
constexpr double kFalloff = 0.3;       // m
constexpr double kRelaxation = 0.5;    // s
constexpr std::size_t kSubsteps = 4;

struct Agent {
  Vec2 start;
  Vec2 desired;  // desired velocity
};

// Straight nominal paths, or a damped social-force integration when
// interaction > 0.
std::vector<std::vector<Vec2>> simulate(const std::vector<Agent>& agents, const ScenarioSpec& spec) {
  const std::size_t n = agents.size();
  std::vector<std::vector<Vec2>> paths(n, std::vector<Vec2>(spec.n_frames));
  if (spec.interaction == 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < spec.n_frames; ++t)
        paths[i][t] = agents[i].start + (static_cast<double>(t) * spec.dt) * agents[i].desired;
    return paths;
  }
  std::vector<Vec2> pos(n), vel(n);
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = agents[i].start;
    vel[i] = agents[i].desired;
  }
  const double h = spec.dt / static_cast<double>(kSubsteps);
  const double vmax = 2.0 * std::max(spec.speed_max, 0.5);
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) paths[i][t] = pos[i];
    for (std::size_t s = 0; s < kSubsteps; ++s) {
      std::vector<Vec2> acc(n);
      for (std::size_t i = 0; i < n; ++i) {
        acc[i] = (1.0 / kRelaxation) * (agents[i].desired - vel[i]);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const Vec2 away = pos[i] - pos[j];
          const double r = std::max(std::hypot(away.x, away.y), 1e-6);
          const double mag = spec.interaction * kRepulsion * std::exp((kBodyRadius - r) / kFalloff);
          acc[i] = acc[i] + (mag / r) * away;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        vel[i] = vel[i] + h * acc[i];
        const double sp = std::hypot(vel[i].x, vel[i].y);
        if (sp > vmax) vel[i] = (vmax / sp) * vel[i];
        pos[i] = pos[i] + h * vel[i];
      }
    }
  }
  return paths;
}

}  // namespace

ScenarioKind parse_scenario_kind(std::string_view name) {
  if (name == "crossing") return ScenarioKind::kCrossing;
  if (name == "parallel") return ScenarioKind::kParallel;
  if (name == "overtaking") return ScenarioKind::kOvertaking;
  if (name == "stationary_group") return ScenarioKind::kStationaryGroup;
  if (name == "random_walk") return ScenarioKind::kRandomWalk;
  throw ParameterError("unknown scenario kind '" + std::string(name) + "'");
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kCrossing: return "crossing";
    case ScenarioKind::kParallel: return "parallel";
    case ScenarioKind::kOvertaking: return "overtaking";
    case ScenarioKind::kStationaryGroup: return "stationary_group";
    case ScenarioKind::kRandomWalk: return "random_walk";
  }
  return "unknown";
}

void validate(const ScenarioSpec& spec) {
  if (spec.n_agents < 2) throw ParameterError("scenario needs n_agents >= 2");
  if (!(spec.noise_std >= 0.0)) throw ParameterError("noise_std must be >= 0");
  if (!(spec.speed_min >= 0.0) || !(spec.speed_max >= spec.speed_min)) {
    throw ParameterError("speed range must satisfy 0 <= min <= max");
  }
  if (spec.n_frames < 2) throw ParameterError("n_frames must be >= 2");
  if (!(spec.interaction >= 0.0)) throw ParameterError("interaction must be >= 0");
  if (!(spec.dt > 0.0)) throw ParameterError("dt must be positive");
  if (spec.frame_step < 1) throw ParameterError("frame_step must be >= 1");
}

std::vector<AgentTrack> generate_synthetic(const ScenarioSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> speed(spec.speed_min, spec.speed_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sign = [&] { return unit(rng) < 0.5 ? -1.0 : 1.0; };

  const auto n = static_cast<std::size_t>(spec.n_agents);
  const double meet = static_cast<double>(spec.n_frames / 2) * spec.dt;  // seconds to the meeting frame
  std::vector<Agent> agents(n);

  switch (spec.kind) {
    case ScenarioKind::kCrossing: {
      // Group A travels along x, group B along y; the first member of each
      // group is on the axis and reaches the origin at the meeting frame.
      const std::size_t group_a = (n + 1) / 2;
      const double sx = sign(), sy = sign();
      for (std::size_t i = 0; i < n; ++i) {
        const bool in_a = i < group_a;
        const double g = static_cast<double>(in_a ? i : i - group_a);
        const double v = speed(rng);
        const double lateral = 0.8 * g * (static_cast<std::size_t>(g) % 2 == 0 ? 1.0 : -1.0);
        const double lag = 0.7 * g;  // later members trail behind
        if (in_a) {
          agents[i].desired = {sx * v, 0.0};
          agents[i].start = {-sx * (v * meet + lag), lateral};
        } else {
          agents[i].desired = {0.0, sy * v};
          agents[i].start = {lateral, -sy * (v * meet + lag)};
        }
      }
      break;
    }
    case ScenarioKind::kParallel: {
      const double sx = sign();
      std::uniform_real_distribution<double> stagger(-1.5, 1.5);
      for (std::size_t i = 0; i < n; ++i) {
        const double v = speed(rng);
        const double lane = 1.0 * (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1));
        agents[i].desired = {sx * v, 0.0};
        agents[i].start = {-sx * (v * meet) + stagger(rng), lane};
      }
      break;
    }
    case ScenarioKind::kOvertaking: {
      std::vector<double> speeds(n);
      for (double& v : speeds) v = speed(rng);
      std::sort(speeds.begin(), speeds.end());
      const double sx = sign();
      for (std::size_t i = 0; i < n; ++i) {
        // Agent 0 is the slowest and leads; the others draw level with it at the meeting frame.
        const double lateral = 0.25 * static_cast<double>(i) * ((i % 2 == 0) ? 1.0 : -1.0);
        agents[i].desired = {sx * speeds[i], 0.0};
        agents[i].start = {-sx * (speeds[i] - speeds[0]) * meet, lateral};
      }
      break;
    }
    case ScenarioKind::kStationaryGroup: {
      std::uniform_real_distribution<double> radius(0.0, 1.0);
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 1; i < n; ++i) {
        const double r = radius(rng), a = angle(rng);
        agents[i].start = {r * std::cos(a), r * std::sin(a)};
        agents[i].desired = {};
      }
      std::uniform_real_distribution<double> offset(1.5, 2.5);
      const double v = speed(rng);
      const double sx = sign();
      agents[0].desired = {sx * v, 0.0};
      agents[0].start = {-sx * v * meet, sign() * offset(rng)};
      break;
    }
    case ScenarioKind::kRandomWalk: {
      std::uniform_real_distribution<double> place(-5.0, 5.0);
      std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
      std::normal_distribution<double> kick(0.0, 0.15);
      std::vector<AgentTrack> tracks(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double v = speed(rng), a = heading(rng);
        Vec2 p{place(rng), place(rng)};
        Vec2 vel{v * std::cos(a), v * std::sin(a)};
        tracks[i].agent_id = static_cast<int>(i);
        for (std::size_t t = 0; t < spec.n_frames; ++t) {
          tracks[i].frames.push_back(static_cast<long>(t) * spec.frame_step);
          tracks[i].positions.push_back(p);
          vel = vel + Vec2{kick(rng), kick(rng)};
          const double sp = std::hypot(vel.x, vel.y);
          if (sp > spec.speed_max && sp > 0.0) vel = (spec.speed_max / sp) * vel;
          p = p + spec.dt * vel;
        }
      }
      std::normal_distribution<double> noise(0.0, 1.0);
      for (auto& tr : tracks) {
        if (spec.noise_std > 0.0)
          for (auto& p : tr.positions) p = p + spec.noise_std * Vec2{noise(rng), noise(rng)};
        tr.velocities = derive_velocities(tr.positions, spec.dt);
      }
      return tracks;
    }
  }

  const auto paths = simulate(agents, spec);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<AgentTrack> tracks(n);
  for (std::size_t i = 0; i < n; ++i) {
    tracks[i].agent_id = static_cast<int>(i);
    for (std::size_t t = 0; t < spec.n_frames; ++t) {
      tracks[i].frames.push_back(static_cast<long>(t) * spec.frame_step);
      Vec2 p = paths[i][t];
      if (spec.noise_std > 0.0) p = p + spec.noise_std * Vec2{noise(rng), noise(rng)};
      tracks[i].positions.push_back(p);
    }
    tracks[i].velocities = derive_velocities(tracks[i].positions, spec.dt);
  }
  return tracks;
}

}  // namespace moif
