#include "moif/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "moif/errors.hpp"

namespace moif {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "config must be a JSON object" : where + " must be an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  const std::string name = where.empty() ? key : where + "." + key;
  const Json& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + name + "' has the wrong type: " + v.dump());
  }
}

std::vector<fs::path> read_paths(const Json& j, const char* key, const fs::path& base) {
  std::vector<fs::path> out;
  if (!j.contains(key)) return out;
  const Json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(std::string("config key 'data.") + key + "' must be an array of paths");
  for (const auto& item : v) {
    if (!item.is_string()) throw ConfigError(std::string("config key 'data.") + key + "' must hold strings");
    fs::path p = item.get<std::string>();
    out.push_back(p.is_relative() && !base.empty() ? base / p : p);
  }
  return out;
}

std::string scale_name(ScaleMode m) { return m == ScaleMode::kSqrt ? "sqrt" : "paper_linear"; }
std::string approach_name(ApproachMode m) { return m == ApproachMode::kPhysical ? "physical" : "paper"; }

}  // namespace

Json to_json(const ModelConfig& c) {
  return Json{{"t_hist", c.t_hist},
              {"t_fut", c.t_fut},
              {"subspaces", c.subspaces},
              {"embed_dim", c.embed_dim},
              {"latent_dim", c.latent_dim},
              {"kan_layers", c.kan_layers},
              {"kan_grid", c.kan_grid},
              {"kan_order", c.kan_order},
              {"kan_input_scale", c.kan_input_scale},
              {"position_scale", c.position_scale},
              {"scale_mode", scale_name(c.scale_mode)},
              {"approach", approach_name(c.approach)},
              {"flags", c.flags.to_string()}};
}

Json to_json(const LossConfig& c) {
  return Json{{"w_angle", c.w_angle}, {"w_kl", c.w_kl}, {"eps_dir", c.eps_dir}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"model", to_json(c.model)}, {"loss", to_json(c.loss)},       {"lr", c.lr},
              {"kan_lr_scale", c.kan_lr_scale},
              {"epochs", c.epochs},        {"batch_size", c.batch_size},    {"seed", c.seed},
              {"grad_clip", c.grad_clip},  {"val_samples", c.val_samples}};
}

Json to_json(const DataConfig& c) {
  auto paths = [](const std::vector<fs::path>& ps) {
    Json a = Json::array();
    for (const auto& p : ps) a.push_back(p.string());
    return a;
  };
  return Json{{"train", paths(c.train)}, {"val", paths(c.val)}, {"test", paths(c.test)},
              {"stride", c.stride},      {"dt", c.dt}};
}

Json to_json(const ExperimentConfig& c) {
  Json j = to_json(c.train);
  j["data"] = to_json(c.data);
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  const std::string w = "model";
  reject_unknown(j, w,
                 {"t_hist", "t_fut", "subspaces", "embed_dim", "latent_dim", "kan_layers", "kan_grid", "kan_order",
                  "kan_input_scale", "position_scale", "scale_mode", "approach", "flags"});
  ModelConfig c;
  read(j, "t_hist", w, c.t_hist);
  read(j, "t_fut", w, c.t_fut);
  read(j, "subspaces", w, c.subspaces);
  read(j, "embed_dim", w, c.embed_dim);
  read(j, "latent_dim", w, c.latent_dim);
  read(j, "kan_layers", w, c.kan_layers);
  read(j, "kan_grid", w, c.kan_grid);
  read(j, "kan_order", w, c.kan_order);
  read(j, "kan_input_scale", w, c.kan_input_scale);
  read(j, "position_scale", w, c.position_scale);
  std::string scale = scale_name(c.scale_mode), approach = approach_name(c.approach), flags = c.flags.to_string();
  read(j, "scale_mode", w, scale);
  read(j, "approach", w, approach);
  read(j, "flags", w, flags);
  if (scale == "paper_linear") c.scale_mode = ScaleMode::kPaperLinear;
  else if (scale == "sqrt") c.scale_mode = ScaleMode::kSqrt;
  else throw ConfigError("config key 'model.scale_mode' must be paper_linear or sqrt, got " + scale);
  if (approach == "paper") c.approach = ApproachMode::kPaper;
  else if (approach == "physical") c.approach = ApproachMode::kPhysical;
  else throw ConfigError("config key 'model.approach' must be paper or physical, got " + approach);
  c.flags = AblationFlags::parse(flags);
  c.validate();
  return c;
}

LossConfig loss_config_from_json(const Json& j) {
  const std::string w = "loss";
  reject_unknown(j, w, {"w_angle", "w_kl", "eps_dir"});
  LossConfig c;
  read(j, "w_angle", w, c.w_angle);
  read(j, "w_kl", w, c.w_kl);
  read(j, "eps_dir", w, c.eps_dir);
  c.validate();
  return c;
}

namespace {

TrainConfig train_fields(const Json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
  read(j, "lr", "", c.lr);
  read(j, "kan_lr_scale", "", c.kan_lr_scale);
  read(j, "epochs", "", c.epochs);
  read(j, "batch_size", "", c.batch_size);
  read(j, "seed", "", c.seed);
  read(j, "grad_clip", "", c.grad_clip);
  read(j, "val_samples", "", c.val_samples);
  c.validate();
  return c;
}

}  // namespace

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown(j, "", {"model", "loss", "lr", "kan_lr_scale", "epochs", "batch_size", "seed", "grad_clip", "val_samples"});
  return train_fields(j);
}

ExperimentConfig experiment_config_from_json(const Json& j, const fs::path& base_dir) {
  reject_unknown(j, "", {"model", "loss", "lr", "kan_lr_scale", "epochs", "batch_size", "seed", "grad_clip", "val_samples", "data"});
  ExperimentConfig c;
  c.train = train_fields(j);
  if (j.contains("data")) {
    const Json& d = j.at("data");
    reject_unknown(d, "data", {"train", "val", "test", "stride", "dt"});
    c.data.train = read_paths(d, "train", base_dir);
    c.data.val = read_paths(d, "val", base_dir);
    c.data.test = read_paths(d, "test", base_dir);
    read(d, "stride", "data", c.data.stride);
    read(d, "dt", "data", c.data.dt);
    if (c.data.stride == 0) throw ConfigError("config key 'data.stride' must be >= 1");
    if (!(c.data.dt > 0.0)) throw ConfigError("config key 'data.dt' must be positive");
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

std::vector<fs::path> expand_data_paths(const std::vector<fs::path>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(p))
        if (entry.is_regular_file() && entry.path().extension() == ".txt") found.push_back(entry.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw IoError("data path does not exist: " + p.string());
    }
  }
  return out;
}

std::vector<Scene> load_scenes(const std::vector<fs::path>& files, const ModelConfig& model, std::size_t stride,
                               double dt) {
  std::vector<Scene> scenes;
  for (const auto& f : files) {
    WindowOptions opt;
    opt.t_hist = model.t_hist;
    opt.t_fut = model.t_fut;
    opt.stride = stride;
    opt.dt = dt;
    opt.source = f.string();
    auto s = window_scenes(parse_trajectory_file(f, dt), opt);
    scenes.insert(scenes.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return scenes;
}

}  // namespace moif
