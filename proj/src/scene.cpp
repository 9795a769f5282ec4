#include "moif/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "moif/errors.hpp"

namespace moif {

namespace {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

bool parse_double(const std::string& tok, double& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_integral(const std::string& tok, long& out) {
  double v = 0.0;
  if (!parse_double(tok, v) || v != std::floor(v) || std::abs(v) > 9.0e15) return false;
  out = static_cast<long>(v);
  return true;
}

struct Record {
  long frame;
  Vec2 pos;
};

}  // namespace

std::vector<Vec2> derive_velocities(const std::vector<Vec2>& positions, double dt) {
  std::vector<Vec2> vel(positions.size());
  for (std::size_t t = 1; t < positions.size(); ++t) {
    vel[t] = (1.0 / dt) * (positions[t] - positions[t - 1]);
  }
  if (positions.size() >= 2) vel[0] = vel[1];
  return vel;
}

std::vector<AgentTrack> parse_trajectories(std::istream& in, const std::string& source, double dt) {
  std::map<int, std::vector<Record>> per_agent;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 4) {
      throw ParseError(source, line_no, "expected 4 fields 'frame agent_id x y', got " +
                                            std::to_string(tok.size()));
    }
    long frame = 0, agent = 0;
    Vec2 p;
    if (!parse_integral(tok[0], frame)) throw ParseError(source, line_no, "bad frame '" + tok[0] + "'");
    if (!parse_integral(tok[1], agent)) throw ParseError(source, line_no, "bad agent id '" + tok[1] + "'");
    if (!parse_double(tok[2], p.x)) throw ParseError(source, line_no, "bad x '" + tok[2] + "'");
    if (!parse_double(tok[3], p.y)) throw ParseError(source, line_no, "bad y '" + tok[3] + "'");
    auto& recs = per_agent[static_cast<int>(agent)];
    if (!recs.empty() && frame <= recs.back().frame) {
      throw DataError(source + ":" + std::to_string(line_no) + ": frames of agent " +
                      std::to_string(agent) + " are not increasing (" +
                      std::to_string(recs.back().frame) + " then " + std::to_string(frame) + ")");
    }
    recs.push_back({frame, p});
  }

  // The annotation step is the smallest frame increment seen anywhere.
  long step = 0;
  for (const auto& [id, recs] : per_agent)
    for (std::size_t k = 1; k < recs.size(); ++k) {
      const long diff = recs[k].frame - recs[k - 1].frame;
      step = step == 0 ? diff : std::min(step, diff);
    }
  if (step == 0) step = 1;

  std::vector<AgentTrack> tracks;
  for (const auto& [id, recs] : per_agent) {
    AgentTrack cur;
    auto flush = [&] {
      if (cur.positions.empty()) return;
      cur.velocities = derive_velocities(cur.positions, dt);
      tracks.push_back(std::move(cur));
      cur = AgentTrack{};
    };
    for (std::size_t k = 0; k < recs.size(); ++k) {
      if (k > 0 && recs[k].frame - recs[k - 1].frame > step) flush();
      cur.agent_id = id;
      cur.frames.push_back(recs[k].frame);
      cur.positions.push_back(recs[k].pos);
    }
    flush();
  }
  return tracks;
}

std::vector<AgentTrack> parse_trajectory_file(const std::filesystem::path& path, double dt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file " + path.string());
  return parse_trajectories(in, path.string(), dt);
}

void write_trajectories(std::ostream& out, const std::vector<AgentTrack>& tracks) {
  struct Row {
    long frame;
    int id;
    Vec2 p;
  };
  std::vector<Row> rows;
  for (const auto& t : tracks)
    for (std::size_t k = 0; k < t.length(); ++k) rows.push_back({t.frames[k], t.agent_id, t.positions[k]});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  out << std::setprecision(17);
  for (const auto& r : rows) out << r.frame << ' ' << r.id << ' ' << r.p.x << ' ' << r.p.y << '\n';
}

void write_trajectory_file(const std::filesystem::path& path, const std::vector<AgentTrack>& tracks) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file " + path.string());
  write_trajectories(out, tracks);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Scene> window_scenes(const std::vector<AgentTrack>& tracks, const WindowOptions& opt) {
  if (opt.t_hist < 2) throw ParameterError("window_scenes: t_hist must be >= 2");
  if (opt.t_fut < 1) throw ParameterError("window_scenes: t_fut must be >= 1");
  if (opt.stride < 1) throw ParameterError("window_scenes: stride must be >= 1");

  std::vector<std::unordered_map<long, std::size_t>> index(tracks.size());
  for (std::size_t k = 0; k < tracks.size(); ++k)
    for (std::size_t f = 0; f < tracks[k].frames.size(); ++f) index[k][tracks[k].frames[f]] = f;

  const std::size_t window = opt.t_hist + opt.t_fut;
  std::vector<Scene> scenes;
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const AgentTrack& track = tracks[k];
    for (std::size_t start = 0; start + window <= track.length(); start += opt.stride) {
      Scene s;
      s.dt = opt.dt;
      s.t_hist = opt.t_hist;
      s.t_fut = opt.t_fut;
      s.meta = {opt.source, track.frames[start]};
      s.target.agent_id = track.agent_id;
      s.target.frames.assign(track.frames.begin() + static_cast<std::ptrdiff_t>(start),
                             track.frames.begin() + static_cast<std::ptrdiff_t>(start + window));
      s.target.positions.assign(track.positions.begin() + static_cast<std::ptrdiff_t>(start),
                                track.positions.begin() + static_cast<std::ptrdiff_t>(start + window));
      s.target.velocities.assign(track.velocities.begin() + static_cast<std::ptrdiff_t>(start),
                                 track.velocities.begin() + static_cast<std::ptrdiff_t>(start + window));

      for (std::size_t o = 0; o < tracks.size(); ++o) {
        if (o == k || tracks[o].agent_id == track.agent_id) continue;
        Neighbor n;
        n.track.agent_id = tracks[o].agent_id;
        n.track.frames.assign(s.target.frames.begin(),
                              s.target.frames.begin() + static_cast<std::ptrdiff_t>(opt.t_hist));
        n.track.positions.assign(opt.t_hist, Vec2{});
        n.track.velocities.assign(opt.t_hist, Vec2{});
        n.present.assign(opt.t_hist, false);
        bool any = false;
        for (std::size_t t = 0; t < opt.t_hist; ++t) {
          auto it = index[o].find(n.track.frames[t]);
          if (it == index[o].end()) continue;
          n.track.positions[t] = tracks[o].positions[it->second];
          n.track.velocities[t] = tracks[o].velocities[it->second];
          n.present[t] = true;
          any = true;
        }
        if (any) s.neighbors.push_back(std::move(n));
      }
      scenes.push_back(std::move(s));
    }
  }
  return scenes;
}

double closest_approach(Vec2 d, Vec2 v_rel, double remaining, ApproachMode mode) {
  const double vv = dot(v_rel, v_rel);
  if (vv < 1e-18) return norm(d);
  const double proj = dot(d, v_rel) / vv;
  const double lambda = mode == ApproachMode::kPaper ? std::abs(proj) : std::max(0.0, -proj);
  return norm(d + std::min(lambda, remaining) * v_rel);
}

NeighborRelFeatures neighbor_rel_features(const Scene& scene, ApproachMode mode) {
  const std::size_t th = scene.t_hist, nn = scene.num_neighbors();
  NeighborRelFeatures f{Matrix(th, nn), Matrix(th, nn), Matrix(th, nn)};
  for (std::size_t j = 0; j < nn; ++j) {
    const Neighbor& n = scene.neighbors[j];
    for (std::size_t t = 0; t < th; ++t) {
      if (!n.present[t]) continue;
      const Vec2 pi = scene.target.positions[t], vi = scene.target.velocities[t];
      const Vec2 pj = n.track.positions[t], vj = n.track.velocities[t];
      const Vec2 d_vec = pj - pi;
      f.d(t, j) = norm(d_vec);
      const double si = norm(vi), sj = norm(vj);
      if (si < 1e-9 || sj < 1e-9) {
        f.theta(t, j) = std::numbers::pi / 2.0;
      } else {
        f.theta(t, j) = std::acos(std::clamp(dot(vi, vj) / (si * sj), -1.0, 1.0));
      }
      const double remaining = static_cast<double>(th - (t + 1));
      f.e(t, j) = closest_approach(d_vec, scene.dt * (vj - vi), remaining, mode);
    }
  }
  return f;
}

NeighborStateInputs neighbor_state_inputs(const Scene& scene) {
  const std::size_t th = scene.t_hist, nn = scene.num_neighbors();
  NeighborStateInputs out{Matrix(nn, 4 * th), {}};
  for (std::size_t j = 0; j < nn; ++j) {
    const Neighbor& n = scene.neighbors[j];
    out.presence.push_back(n.present);
    for (std::size_t t = 0; t < th; ++t) {
      if (!n.present[t]) continue;
      out.values(j, t) = n.track.positions[t].x;
      out.values(j, th + t) = n.track.positions[t].y;
      out.values(j, 2 * th + t) = n.track.velocities[t].x;
      out.values(j, 3 * th + t) = n.track.velocities[t].y;
    }
  }
  return out;
}

std::pair<Scene, Transform> normalize_scene(const Scene& scene) {
  Transform tf{scene.last_history_position()};
  Scene out = scene;
  for (auto& p : out.target.positions) p = tf.apply(p);
  for (auto& n : out.neighbors)
    for (std::size_t t = 0; t < n.track.positions.size(); ++t)
      if (n.present[t]) n.track.positions[t] = tf.apply(n.track.positions[t]);
  return {std::move(out), tf};
}

std::vector<Fold> leave_one_out_split(const std::vector<DataGroup>& groups) {
  if (groups.size() < 2) {
    throw ConfigError("leave-one-out needs at least 2 groups, got " + std::to_string(groups.size()));
  }
  std::vector<Fold> folds;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    Fold f;
    f.test_group = groups[k].name;
    f.test_files = groups[k].files;
    for (std::size_t o = 0; o < groups.size(); ++o)
      if (o != k) f.train_files.insert(f.train_files.end(), groups[o].files.begin(), groups[o].files.end());
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<DataGroup> groups_from_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<DataGroup> groups;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    DataGroup g{dir.filename().string(), {}};
    for (const auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file()) g.files.push_back(entry.path());
    std::sort(g.files.begin(), g.files.end());
    if (!g.files.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace moif
