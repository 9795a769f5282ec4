#pragma once

// Subcommand implementations behind the command-line tool. Each command
// writes a run manifest into its output directory before any result and
// returns a process exit code: 0 success, 1 validation error, 2 runtime or
// numeric failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moif/gradcheck.hpp"
#include "moif/metrics.hpp"
#include "moif/synthetic.hpp"

namespace moif::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct GlobalOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out = "out";
};

struct SynthOptions {
  std::string kind = "crossing";
  int agents = 4;
  std::size_t frames = 20;
  double noise = 0.0;
  double interaction = 0.0;
  double speed_min = 0.8;
  double speed_max = 1.6;
};

struct TrainOptions {
  std::optional<fs::path> resume;
  std::optional<std::size_t> epochs;
};

struct EvalOptions {
  fs::path checkpoint;
  std::vector<fs::path> data;  // empty: data.test from the config
  std::size_t k = 20;
  bool joint = false;
};

struct PredictOptions {
  fs::path checkpoint;
  std::vector<fs::path> data;
  std::vector<std::size_t> scenes = {0};
  std::size_t k = 20;
  bool plot = false;
};

struct GradcheckOptions {
  std::string scope = "all";
};

/// FNV-1a over the bytes, as 16 hex digits.
std::string content_hash(const std::string& bytes);

/// Seed of the sample stream for the scene at `index` in an eval/predict run.
std::uint64_t scene_sample_seed(std::uint64_t seed, std::size_t index);

/// Samples, world frame, for every scene; eval and predict share this path.
std::vector<PredictionSet> sample_scenes(const SocialMoif& model, const std::vector<Scene>& scenes,
                                         const std::vector<std::size_t>& indices, std::size_t k,
                                         std::uint64_t seed);

/// Static plot: history solid, ground truth dashed, samples translucent.
void write_svg(std::ostream& out, const Trajectory& history, const Trajectory& future, const PredictionSet& pred);

int cmd_synth(const GlobalOptions& global, const SynthOptions& options, std::ostream& log);
int cmd_train(const GlobalOptions& global, const TrainOptions& options, std::ostream& log);
int cmd_eval(const GlobalOptions& global, const EvalOptions& options, std::ostream& log);
int cmd_predict(const GlobalOptions& global, const PredictOptions& options, std::ostream& log);
int cmd_gradcheck(const GlobalOptions& global, const GradcheckOptions& options, std::ostream& log);

}  // namespace moif::cli
