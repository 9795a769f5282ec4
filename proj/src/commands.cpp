#include "moif/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "moif/config.hpp"
#include "moif/errors.hpp"
#include "moif/training.hpp"

namespace moif::cli {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

class RunManifest {
 public:
  RunManifest(std::string command, const GlobalOptions& global) {
    fs::create_directories(global.out);
    path_ = global.out / "manifest.json";
    j_["command"] = std::move(command);
    j_["config_path"] = global.config ? Json(global.config->string()) : Json(nullptr);
    j_["config_hash"] = global.config ? Json(content_hash(read_bytes(*global.config))) : Json(nullptr);
    j_["seed"] = global.seed ? Json(*global.seed) : Json(nullptr);
    j_["out_dir"] = global.out.string();
    j_["started_at"] = utc_now();
    j_["finished_at"] = nullptr;
    j_["status"] = "running";
    flush();
  }

  Json& extra() { return j_; }

  void finish(int code, const std::string& error = {}) {
    j_["finished_at"] = utc_now();
    j_["status"] = code == kExitOk ? "ok" : "failed";
    j_["exit_code"] = code;
    if (!error.empty()) j_["error"] = error;
    flush();
  }

 private:
  void flush() const { write_text(path_, j_.dump(2) + "\n"); }

  fs::path path_;
  Json j_;
};

// Creates the manifest, runs `body` and maps errors to exit codes.
template <typename Body>
int run_command(const std::string& name, const GlobalOptions& global, std::ostream& log, Body&& body) {
  std::optional<RunManifest> manifest;
  try {
    manifest.emplace(name, global);
    body(*manifest);
    manifest->finish(kExitOk);
    return kExitOk;
  } catch (const Error& e) {
    const int code = e.is_validation() ? kExitValidation : kExitRuntime;
    log << "error: " << e.what() << "\n";
    if (manifest) manifest->finish(code, e.what());
    return code;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    if (manifest) manifest->finish(kExitRuntime, e.what());
    return kExitRuntime;
  }
}

ExperimentConfig experiment(const GlobalOptions& global) {
  ExperimentConfig cfg = global.config ? load_experiment_config(*global.config) : ExperimentConfig{};
  if (global.seed) cfg.train.seed = *global.seed;
  return cfg;
}

struct LoadedModel {
  Checkpoint checkpoint;
  std::unique_ptr<SocialMoif> model;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel out;
  out.checkpoint = load_checkpoint(path);
  out.model = std::make_unique<SocialMoif>(out.checkpoint.config.model, out.checkpoint.config.seed);
  restore(*out.model, out.checkpoint);
  return out;
}

std::vector<Scene> eval_scenes(const GlobalOptions& global, const std::vector<fs::path>& data,
                               const ModelConfig& model) {
  const ExperimentConfig cfg = experiment(global);
  const auto& paths = data.empty() ? cfg.data.test : data;
  if (paths.empty()) throw ConfigError("no test data: pass --data or set data.test in the config");
  auto scenes = load_scenes(expand_data_paths(paths), model, cfg.data.stride, cfg.data.dt);
  if (scenes.empty()) throw DataError("test set contains no complete scene windows");
  return scenes;
}

std::uint64_t sample_seed(const GlobalOptions& global, const Checkpoint& ckpt) {
  return global.seed ? *global.seed : ckpt.config.seed;
}

std::string scene_id(const Scene& scene, std::size_t index) {
  return std::to_string(index) + ":" + scene.meta.source + ":" + std::to_string(scene.meta.frame_offset) + ":" +
         std::to_string(scene.target.agent_id);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

std::uint64_t scene_sample_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<PredictionSet> sample_scenes(const SocialMoif& model, const std::vector<Scene>& scenes,
                                         const std::vector<std::size_t>& indices, std::size_t k,
                                         std::uint64_t seed) {
  std::vector<PredictionSet> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= scenes.size()) {
      throw ConfigError("scene " + std::to_string(i) + " out of range (" + std::to_string(scenes.size()) +
                        " scenes)");
    }
    PredictionSet p;
    p.samples = model.predict(model.prepare(scenes[i]), k, scene_sample_seed(seed, i));
    p.scene_ref = scene_id(scenes[i], i);
    out.push_back(std::move(p));
  }
  return out;
}

void write_svg(std::ostream& out, const Trajectory& history, const Trajectory& future, const PredictionSet& pred) {
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  auto grow = [&](const Trajectory& t) {
    for (const auto& p : t) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  };
  grow(history);
  grow(future);
  for (const auto& s : pred.samples) grow(s);
  if (lo_x > hi_x) lo_x = hi_x = lo_y = hi_y = 0.0;
  const double pad = 0.5;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6}) + 2 * pad;
  const double size = 600.0, k = size / span;
  // SVG y grows downward
  auto px = [&](Vec2 p) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << (p.x - lo_x + pad) * k << "," << (hi_y + pad - p.y) * k;
    return ss.str();
  };
  auto polyline = [&](const Trajectory& t, const std::string& style) {
    out << "  <polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) out << (i ? " " : "") << px(t[i]);
    out << "\"/>\n";
  };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& s : pred.samples) {
    Trajectory joined = s;
    if (!history.empty()) joined.insert(joined.begin(), history.back());
    polyline(joined, "stroke=\"#d62728\" stroke-opacity=\"0.25\" stroke-width=\"1.5\"");
  }
  Trajectory gt = future;
  if (!history.empty()) gt.insert(gt.begin(), history.back());
  polyline(gt, "stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"6 4\"");
  polyline(history, "stroke=\"#1f77b4\" stroke-width=\"2.5\"");
  out << "</svg>\n";
}

int cmd_synth(const GlobalOptions& global, const SynthOptions& options, std::ostream& log) {
  return run_command("synth", global, log, [&](RunManifest& manifest) {
    ScenarioSpec spec;
    spec.kind = parse_scenario_kind(options.kind);
    spec.n_agents = options.agents;
    spec.n_frames = options.frames;
    spec.noise_std = options.noise;
    spec.interaction = options.interaction;
    spec.speed_min = options.speed_min;
    spec.speed_max = options.speed_max;
    spec.seed = global.seed.value_or(0);
    validate(spec);
    const auto tracks = generate_synthetic(spec);
    const fs::path file = global.out / (options.kind + "_seed" + std::to_string(spec.seed) + ".txt");
    write_trajectory_file(file, tracks);
    manifest.extra()["outputs"] = {file.filename().string()};
    log << "wrote " << file.string() << " (" << tracks.size() << " agents)\n";
  });
}

int cmd_train(const GlobalOptions& global, const TrainOptions& options, std::ostream& log) {
  return run_command("train", global, log, [&](RunManifest& manifest) {
    const ExperimentConfig cfg = experiment(global);
    std::optional<Checkpoint> resume;
    if (options.resume) resume = load_checkpoint(*options.resume);
    const ModelConfig& model = resume ? resume->config.model : cfg.train.model;
    if (cfg.data.train.empty()) throw ConfigError("data.train is empty");
    const auto train = load_scenes(expand_data_paths(cfg.data.train), model, cfg.data.stride, cfg.data.dt);
    const auto val = load_scenes(expand_data_paths(cfg.data.val), model, cfg.data.stride, cfg.data.dt);

    std::unique_ptr<Trainer> trainer;
    if (resume) {
      trainer = std::make_unique<Trainer>(*resume, train, val, options.epochs.value_or(resume->config.epochs));
    } else {
      TrainConfig tc = cfg.train;
      if (options.epochs) tc.epochs = *options.epochs;
      trainer = std::make_unique<Trainer>(tc, train, val);
    }
    log << "training on " << train.size() << " scenes (" << val.size() << " validation)\n";

    std::ostringstream csv;
    csv << "epoch,dist,angle,kl,total,val_minade\n";
    const TrainResult result = trainer->run();
    for (const auto& s : result.history) {
      csv << s.epoch << "," << fmt(s.dist) << "," << fmt(s.angle) << "," << fmt(s.kl) << "," << fmt(s.total) << ","
          << (std::isnan(s.val_minade) ? std::string() : fmt(s.val_minade)) << "\n";
      log << "epoch " << s.epoch << " total " << s.total;
      if (!std::isnan(s.val_minade)) log << " val_minade " << s.val_minade;
      log << "\n";
    }
    save_checkpoint(result.best, global.out / "best.ckpt");
    save_checkpoint(result.final, global.out / "final.ckpt");
    write_text(global.out / "history.csv", csv.str());
    manifest.extra()["config"] = to_json(trainer->config());
    manifest.extra()["outputs"] = {"best.ckpt", "final.ckpt", "history.csv"};
  });
}

int cmd_eval(const GlobalOptions& global, const EvalOptions& options, std::ostream& log) {
  return run_command("eval", global, log, [&](RunManifest& manifest) {
    if (options.k == 0) throw ConfigError("k must be >= 1");
    const auto loaded = load_model(options.checkpoint);
    const auto scenes = eval_scenes(global, options.data, loaded.checkpoint.config.model);
    std::vector<std::size_t> all(scenes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto preds = sample_scenes(*loaded.model, scenes, all, options.k, sample_seed(global, loaded.checkpoint));

    MetricReport report;
    report.k = options.k;
    double cv_ade = 0.0, cv_fde = 0.0;
    const auto mode = options.joint ? BestOfKMode::kJoint : BestOfKMode::kIndependent;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const auto gt = scene_future(scenes[i]);
      const auto best = best_of_k(preds[i], gt, mode);
      const double nll = options.k >= 2 ? nll_estimate(preds[i], gt) : std::nan("");
      report.per_scene.push_back({preds[i].scene_ref, best.min_ade, best.min_fde, nll});
      const auto cv = constant_velocity_baseline(scenes[i]);
      cv_ade += ade(cv, gt);
      cv_fde += fde(cv, gt);
    }
    report.aggregate();
    Json j = report.to_json();
    j["mode"] = options.joint ? "joint" : "independent";
    const double n = static_cast<double>(scenes.size());
    j["constant_velocity"] = {{"ade", cv_ade / n}, {"fde", cv_fde / n}};
    write_text(global.out / "metrics.json", j.dump(2) + "\n");
    manifest.extra()["outputs"] = {"metrics.json"};
    log << "scenes " << scenes.size() << "  minADE_" << options.k << " " << report.min_ade << "  minFDE_"
        << options.k << " " << report.min_fde;
    if (options.k >= 2) log << "  NLL " << report.nll;
    log << "\n";
  });
}

int cmd_predict(const GlobalOptions& global, const PredictOptions& options, std::ostream& log) {
  return run_command("predict", global, log, [&](RunManifest& manifest) {
    if (options.k == 0) throw ConfigError("k must be >= 1");
    if (options.scenes.empty()) throw ConfigError("no scene selected");
    const auto loaded = load_model(options.checkpoint);
    const auto scenes = eval_scenes(global, options.data, loaded.checkpoint.config.model);
    const auto preds =
        sample_scenes(*loaded.model, scenes, options.scenes, options.k, sample_seed(global, loaded.checkpoint));

    Json outputs = Json::array();
    for (std::size_t n = 0; n < options.scenes.size(); ++n) {
      const std::size_t idx = options.scenes[n];
      const std::string stem = "scene" + std::to_string(idx);
      std::ostringstream csv;
      csv << "sample_id,t,x,y\n";
      for (std::size_t s = 0; s < preds[n].samples.size(); ++s)
        for (std::size_t t = 0; t < preds[n].samples[s].size(); ++t) {
          const Vec2 p = preds[n].samples[s][t];
          csv << s << "," << t << "," << fmt(p.x) << "," << fmt(p.y) << "\n";
        }
      write_text(global.out / (stem + ".csv"), csv.str());
      outputs.push_back(stem + ".csv");
      if (options.plot) {
        std::ostringstream svg;
        write_svg(svg, scene_history(scenes[idx]), scene_future(scenes[idx]), preds[n]);
        write_text(global.out / (stem + ".svg"), svg.str());
        outputs.push_back(stem + ".svg");
      }
      log << "scene " << idx << " (" << preds[n].scene_ref << "): " << preds[n].samples.size() << " samples\n";
    }
    manifest.extra()["outputs"] = outputs;
  });
}

int cmd_gradcheck(const GlobalOptions& global, const GradcheckOptions& options, std::ostream& log) {
  return run_command("gradcheck", global, log, [&](RunManifest& manifest) {
    const GradScope scope = parse_grad_scope(options.scope);
    const ModelConfig model = global.config ? experiment(global).train.model : toy_gradcheck_config();
    check_gradcheck_size(model);
    const auto reports = run_gradcheck(model, scope, global.seed.value_or(1));
    Json rows = Json::array();
    bool pass = true;
    for (const auto& r : reports) {
      std::size_t checked = 0;
      std::string worst;
      double worst_err = -1.0;
      for (const auto& e : r.report.entries) {
        checked += e.checked;
        if (e.max_rel_err > worst_err) {
          worst_err = e.max_rel_err;
          worst = e.name;
        }
      }
      log << std::left << std::setw(13) << r.scope << (r.pass() ? "PASS" : "FAIL") << "  max_rel_err "
          << std::scientific << std::setprecision(3) << r.report.max_rel_err << "  tol " << r.tolerance
          << std::defaultfloat << "  " << std::fixed << std::setprecision(2) << r.seconds << " s"
          << std::defaultfloat << "\n";
      if (!r.pass()) log << "  worst: " << worst << "\n";
      rows.push_back({{"scope", r.scope},
                      {"pass", r.pass()},
                      {"max_rel_error", r.report.max_rel_err},
                      {"tolerance", r.tolerance},
                      {"checked", checked},
                      {"worst", worst},
                      {"seconds", r.seconds}});
      pass = pass && r.pass();
    }
    write_text(global.out / "gradcheck.json", Json{{"pass", pass}, {"scopes", rows}}.dump(2) + "\n");
    manifest.extra()["outputs"] = {"gradcheck.json"};
    if (!pass) throw NumericError("gradient check failed tolerance");
  });
}

}  // namespace moif::cli
