#include "moif/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "moif/config.hpp"
#include "moif/errors.hpp"

namespace moif {

using ad::Tensor;

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(kan_lr_scale >= 0.0)) throw ConfigError("kan_lr_scale must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (val_samples == 0) throw ConfigError("val_samples must be >= 1");
}

std::uint64_t validation_seed(std::uint64_t seed) { return seed ^ 0x5eedf00dULL; }

// ---- checkpoint --------------------------------------------------------------

Checkpoint snapshot(const SocialMoif& model, const TrainConfig& config) {
  Checkpoint c;
  c.config = config;
  for (const auto& [name, t] : model.params()) c.manifest.push_back({name, t.rows(), t.cols()});
  c.values = model.params().flat_values();
  c.adam.m.assign(c.values.size(), 0.0);
  c.adam.v.assign(c.values.size(), 0.0);
  return c;
}

void restore(SocialMoif& model, const Checkpoint& checkpoint) {
  auto& params = model.params();
  if (params.size() != checkpoint.manifest.size()) {
    throw CheckpointError(CheckpointError::Kind::kManifest,
                          "checkpoint has " + std::to_string(checkpoint.manifest.size()) + " parameters, model has " +
                              std::to_string(params.size()));
  }
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    const auto& entry = checkpoint.manifest[i++];
    if (entry.name != name) {
      throw CheckpointError(CheckpointError::Kind::kManifest,
                            "checkpoint parameter '" + entry.name + "' where the model expects '" + name + "'");
    }
    if (entry.rows != t.rows() || entry.cols != t.cols()) {
      throw CheckpointError(CheckpointError::Kind::kShape, "parameter '" + name + "' is " + std::to_string(entry.rows) +
                                                         "x" + std::to_string(entry.cols) + " in the checkpoint but " +
                                                         t.shape_str() + " in the model");
    }
  }
  params.assign_flat(checkpoint.values);
}

namespace {

constexpr char kMagic[8] = {'M', 'O', 'I', 'F', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

void get_bytes(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw CheckpointError(CheckpointError::Kind::kTruncated, std::string("checkpoint truncated while reading ") + what);
  }
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  get_bytes(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::vector<double> get_doubles(std::istream& in, std::size_t n, const char* what) {
  std::vector<double> v(n);
  for (auto& d : v) d = std::bit_cast<double>(get_u64(in, what));
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, std::ostream& out) {
  Json manifest = Json::array();
  for (const auto& p : c.manifest) manifest.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}});
  Json header{{"config", to_json(c.config)}, {"manifest", manifest},     {"epoch", c.epoch},
              {"adam_step", c.adam.step},  {"rng_state", c.rng_state}, {"n_values", c.values.size()}};
  header["best_val"] = std::isfinite(c.best_val) ? Json(c.best_val) : Json(nullptr);
  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  put_u32(out, Checkpoint::kFormatVersion);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_doubles(out, c.values);
  put_doubles(out, c.adam.m);
  put_doubles(out, c.adam.v);
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  save_checkpoint(c, out);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[8];
  get_bytes(in, magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(CheckpointError::Kind::kFormat, "not a checkpoint file");
  const std::uint32_t version = get_u32(in, "version");
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion, "checkpoint format version " + std::to_string(version) +
                                                         ", expected " + std::to_string(Checkpoint::kFormatVersion));
  }
  const std::uint64_t len = get_u64(in, "header length");
  if (len > (1ULL << 30)) throw CheckpointError(CheckpointError::Kind::kFormat, "implausible header length");
  std::string text(len, '\0');
  get_bytes(in, text.data(), len, "header");

  Checkpoint c;
  std::size_t n = 0;
  try {
    const Json h = Json::parse(text);
    c.config = train_config_from_json(h.at("config"));
    for (const auto& p : h.at("manifest")) {
      c.manifest.push_back({p.at("name").get<std::string>(), p.at("rows").get<std::size_t>(),
                            p.at("cols").get<std::size_t>()});
    }
    c.epoch = h.at("epoch").get<std::size_t>();
    c.adam.step = h.at("adam_step").get<std::uint64_t>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.best_val = h.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
                                            : h.at("best_val").get<double>();
    n = h.at("n_values").get<std::size_t>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::kFormat, std::string("bad checkpoint header: ") + e.what());
  }
  std::size_t expected = 0;
  for (const auto& p : c.manifest) expected += p.rows * p.cols;
  if (expected != n) {
    throw CheckpointError(CheckpointError::Kind::kManifest, "manifest describes " + std::to_string(expected) +
                                                          " values but the header declares " + std::to_string(n));
  }
  c.values = get_doubles(in, n, "parameter values");
  c.adam.m = get_doubles(in, n, "first moments");
  c.adam.v = get_doubles(in, n, "second moments");
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

// ---- optimizer ---------------------------------------------------------------

void adam_update(std::vector<double>& values, const std::vector<double>& grads, AdamState& s, double lr,
                 double beta1, double beta2, double eps, std::span<const double> lr_scale) {
  if (grads.size() != values.size()) throw ShapeError("adam_update: gradient length mismatch");
  if (!lr_scale.empty() && lr_scale.size() != values.size()) throw ShapeError("adam_update: lr_scale length mismatch");
  if (s.m.size() != values.size()) s.m.assign(values.size(), 0.0);
  if (s.v.size() != values.size()) s.v.assign(values.size(), 0.0);
  ++s.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < values.size(); ++i) {
    s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * grads[i];
    s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double step = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps);
    values[i] -= lr_scale.empty() ? step : lr_scale[i] * step;
  }
}

double clip_global_norm(std::vector<double>& grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grads) g *= f;
  }
  return norm;
}

double mean_min_ade(const SocialMoif& model, const std::vector<PreparedScene>& scenes, std::size_t k,
                    std::uint64_t seed) {
  if (scenes.empty()) throw ContractError("mean_min_ade: no scenes");
  const auto noise = seeded_noise(seed);
  const std::size_t tf = model.config().t_fut;
  double total = 0.0;
  for (const auto& p : scenes) {
    if (p.future.size() == 0) throw ContractError("mean_min_ade: scene has no future");
    const Tensor rows = model.sample_rows(p, k, noise);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < k; ++s) {
      double ade = 0.0;
      for (std::size_t t = 0; t < tf; ++t) {
        ade += std::hypot(rows.at(s, 2 * t) - p.future.at(0, 2 * t), rows.at(s, 2 * t + 1) - p.future.at(0, 2 * t + 1));
      }
      best = std::min(best, ade / static_cast<double>(tf));
    }
    total += best;
  }
  return total / static_cast<double>(scenes.size());
}

// ---- trainer -----------------------------------------------------------------

Trainer::Trainer(const TrainConfig& config, const std::vector<Scene>& train, const std::vector<Scene>& val)
    : config_(config), model_((config.validate(), config.model), config.seed), rng_(config.seed) {
  prepare(train, val);
  adam_.m.assign(model_.params().total_elements(), 0.0);
  adam_.v.assign(model_.params().total_elements(), 0.0);
  best_ = checkpoint();
}

Trainer::Trainer(const Checkpoint& resume, const std::vector<Scene>& train, const std::vector<Scene>& val,
                 std::size_t epochs)
    : config_(resume.config), model_(resume.config.model, resume.config.seed) {
  config_.epochs = epochs;
  restore(model_, resume);
  adam_ = resume.adam;
  epoch_ = resume.epoch;
  best_val_ = resume.best_val;
  std::istringstream state(resume.rng_state);
  state >> rng_ >> normal_;
  if (!state) throw CheckpointError(CheckpointError::Kind::kFormat, "unreadable rng state in checkpoint");
  prepare(train, val);
  best_ = checkpoint();
}

void Trainer::prepare(const std::vector<Scene>& train, const std::vector<Scene>& val) {
  if (train.empty()) throw ContractError("training set is empty");
  train_.clear();
  val_.clear();
  for (const auto& s : train) train_.push_back(model_.prepare(s));
  for (const auto& s : val) val_.push_back(model_.prepare(s));
  lr_scale_.clear();
  for (const auto& [name, t] : model_.params())
    lr_scale_.insert(lr_scale_.end(), t.size(), name.rfind("kan.", 0) == 0 ? config_.kan_lr_scale : 1.0);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c = snapshot(model_, config_);
  c.adam = adam_;
  c.epoch = epoch_;
  c.best_val = best_val_;
  std::ostringstream state;
  state << rng_ << ' ' << normal_;
  c.rng_state = state.str();
  return c;
}

double Trainer::validate_model() const {
  return mean_min_ade(model_, val_, config_.val_samples, validation_seed(config_.seed));
}

EpochStats Trainer::run_epoch() {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  const NoiseFn noise = [this](std::size_t count) {
    std::vector<double> out(count);
    for (double& v : out) v = normal_(rng_);
    return out;
  };

  auto& params = model_.params();
  EpochStats stats;
  stats.epoch = epoch_ + 1;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    std::vector<const PreparedScene*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&train_[order[i]]);
    TrainForward fwd;
    try {
      fwd = model_.forward_train(batch, config_.loss, noise);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(stats.epoch) + ", batch at " + std::to_string(start) + ": " +
                         e.what());
    }
    ad::backward(fwd.loss.total_tensor, params);
    std::vector<double> grads = params.flat_grads();
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        std::size_t offset = 0;
        std::string name;
        for (const auto& [n, t] : params) {
          if (i < offset + t.size()) {
            name = n;
            break;
          }
          offset += t.size();
        }
        throw NumericError("epoch " + std::to_string(stats.epoch) + ": non-finite gradient in parameter '" + name + "'");
      }
    }
    clip_global_norm(grads, config_.grad_clip);
    std::vector<double> values = params.flat_values();
    adam_update(values, grads, adam_, config_.lr, 0.9, 0.999, 1e-8, lr_scale_);
    params.assign_flat(values);

    const double w = static_cast<double>(batch.size());
    stats.dist += w * fwd.loss.dist;
    stats.angle += w * fwd.loss.angle;
    stats.kl += w * fwd.loss.kl;
    stats.total += w * fwd.loss.total;
  }
  const double n = static_cast<double>(train_.size());
  stats.dist /= n;
  stats.angle /= n;
  stats.kl /= n;
  stats.total /= n;
  ++epoch_;

  const double score = val_.empty() ? stats.total : validate_model();
  if (!val_.empty()) stats.val_minade = score;
  if (score < best_val_) {
    best_val_ = score;
    best_ = checkpoint();
  }
  return stats;
}

TrainResult Trainer::run() {
  TrainResult r;
  while (epoch_ < config_.epochs) r.history.push_back(run_epoch());
  r.final = checkpoint();
  r.best = best_;
  return r;
}

}  // namespace moif
