#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "moif/scene.hpp"

namespace moif {

enum class ScenarioKind { kCrossing, kParallel, kOvertaking, kStationaryGroup, kRandomWalk };

/// ParameterError for an unknown name. Names: crossing, parallel, overtaking,
/// stationary_group, random_walk.
ScenarioKind parse_scenario_kind(std::string_view name);
std::string to_string(ScenarioKind kind);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kCrossing;
  int n_agents = 4;
  double speed_min = 0.8;  // m/s
  double speed_max = 1.6;
  double noise_std = 0.0;  // meters, added to every observed position
  std::uint64_t seed = 0;
  std::size_t n_frames = 20;
  /// Strength of the pairwise repulsion between agents; 0 keeps every agent on
  /// its nominal kinematic path.
  double interaction = 0.0;
  double dt = kDefaultDt;
  long frame_step = 10;
};

/// ParameterError when n_agents < 2, noise_std < 0, the speed range is empty
/// or negative, n_frames < 2, interaction < 0 or dt <= 0.
void validate(const ScenarioSpec& spec);

/// Deterministic in spec.seed. Nominal paths are laid out so that the middle
/// frame (n_frames / 2) is the moment of closest interaction: crossing groups
/// meet at the origin, overtakers draw level with the slowest agent, and the
/// mover passes the standing group.
std::vector<AgentTrack> generate_synthetic(const ScenarioSpec& spec);

}  // namespace moif
