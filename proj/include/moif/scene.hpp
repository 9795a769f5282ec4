#pragma once

// Trajectory ingestion, scene windowing and the geometric input features of
// the intention-fusion model.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "moif/matrix.hpp"

namespace moif {

inline constexpr double kDefaultDt = 0.4;  // seconds between annotated frames

struct AgentTrack {
  int agent_id = 0;
  std::vector<long> frames;
  std::vector<Vec2> positions;   // meters
  std::vector<Vec2> velocities;  // meters / second

  std::size_t length() const { return positions.size(); }
};

/// Backward differences over `dt`; the first frame copies the second. A single
/// position gets zero velocity.
std::vector<Vec2> derive_velocities(const std::vector<Vec2>& positions, double dt);

/// A neighbor over the history window. Frames where the neighbor was not
/// observed hold zeros and have `present[t] == false`.
struct Neighbor {
  AgentTrack track;
  std::vector<bool> present;
};

struct SceneMeta {
  std::string source;
  long frame_offset = 0;
};

struct Scene {
  AgentTrack target;               // t_hist + t_fut frames
  std::vector<Neighbor> neighbors; // t_hist frames each
  double dt = kDefaultDt;
  std::size_t t_hist = 8;
  std::size_t t_fut = 8;
  SceneMeta meta;

  std::size_t num_neighbors() const { return neighbors.size(); }
  Vec2 last_history_position() const { return target.positions[t_hist - 1]; }
};

// ---- file format ------------------------------------------------------------
// One record per line: `frame agent_id x y`, whitespace separated.

/// ParseError (with line number) on a malformed line; DataError if an agent's
/// frames are not strictly increasing. A frame gap larger than the file's
/// frame step starts a new segment for that agent.
std::vector<AgentTrack> parse_trajectories(std::istream& in, const std::string& source,
                                           double dt = kDefaultDt);
/// IoError if the file cannot be opened.
std::vector<AgentTrack> parse_trajectory_file(const std::filesystem::path& path,
                                              double dt = kDefaultDt);
void write_trajectories(std::ostream& out, const std::vector<AgentTrack>& tracks);
void write_trajectory_file(const std::filesystem::path& path, const std::vector<AgentTrack>& tracks);

// ---- windowing --------------------------------------------------------------

struct WindowOptions {
  std::size_t t_hist = 8;
  std::size_t t_fut = 8;
  std::size_t stride = 1;
  double dt = kDefaultDt;
  std::string source;
};

/// One scene per (track, window) with full t_hist + t_fut coverage. Every
/// other agent observed during the history window becomes a neighbor.
/// ParameterError if t_hist < 2, t_fut < 1 or stride < 1.
std::vector<Scene> window_scenes(const std::vector<AgentTrack>& tracks, const WindowOptions& options);

// ---- geometric features -----------------------------------------------------

enum class ApproachMode {
  kPaper,     // λ = |d·v / |v|²|
  kPhysical,  // λ = max(0, -d·v / |v|²)
};

/// Distance at the closest approach of a neighbor offset `d` moving with
/// relative velocity `v_rel`, looking at most `remaining` steps ahead.
double closest_approach(Vec2 d, Vec2 v_rel, double remaining, ApproachMode mode = ApproachMode::kPaper);

/// Relation channels per (history frame, neighbor), each t_hist x N_n.
struct NeighborRelFeatures {
  Matrix d;      // meters
  Matrix theta;  // radians in [0, π]
  Matrix e;      // meters
};

/// Frames where a neighbor is absent hold zeros in every channel.
/// Relative velocity enters closest_approach as displacement per frame so that
/// `remaining` counts frames.
NeighborRelFeatures neighbor_rel_features(const Scene& scene, ApproachMode mode = ApproachMode::kPaper);

struct NeighborStateInputs {
  /// N_n x 4·t_hist, channel-major per neighbor: x[0..T), y[0..T), vx[0..T), vy[0..T).
  Matrix values;
  /// N_n x t_hist presence bits.
  std::vector<std::vector<bool>> presence;
};

NeighborStateInputs neighbor_state_inputs(const Scene& scene);

// ---- normalization ----------------------------------------------------------

/// Target-centric translation.
struct Transform {
  Vec2 offset;  // subtracted on apply

  Vec2 apply(Vec2 p) const { return p - offset; }
  Vec2 inverse(Vec2 p) const { return p + offset; }
};

/// Translates every observed position so that the target's last history
/// position becomes the origin. Velocities and absent neighbor frames are
/// untouched.
std::pair<Scene, Transform> normalize_scene(const Scene& scene);

// ---- cross validation -------------------------------------------------------

struct DataGroup {
  std::string name;
  std::vector<std::filesystem::path> files;
};

struct Fold {
  std::string test_group;
  std::vector<std::filesystem::path> train_files;
  std::vector<std::filesystem::path> test_files;
};

/// One fold per group, holding that group out. ConfigError for fewer than two groups.
std::vector<Fold> leave_one_out_split(const std::vector<DataGroup>& groups);

/// Groups trajectory files by their parent directory under `root`.
std::vector<DataGroup> groups_from_directory(const std::filesystem::path& root);

}  // namespace moif
