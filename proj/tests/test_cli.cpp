#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "moif/commands.hpp"
#include "moif/config.hpp"
#include "moif/training.hpp"

namespace moif::cli {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() / ("moif_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  GlobalOptions global(const std::string& out, std::optional<std::uint64_t> seed = {}) {
    GlobalOptions g;
    g.out = root / out;
    g.seed = seed;
    if (fs::exists(root / "cfg.json")) g.config = root / "cfg.json";
    return g;
  }

  void make_data() {
    std::ostringstream log;
    for (std::uint64_t s = 1; s <= 2; ++s) {
      SynthOptions o;
      o.frames = 12;
      o.noise = 0.03;
      ASSERT_EQ(cmd_synth(global("data/train", s), o, log), kExitOk);
    }
    SynthOptions o;
    o.kind = "overtaking";
    o.frames = 10;
    ASSERT_EQ(cmd_synth(global("data/test", 9), o, log), kExitOk);
    std::ofstream(root / "cfg.json") << R"({"model": {"t_hist": 4, "t_fut": 4, "subspaces": 2, "embed_dim": 8,
      "latent_dim": 4}, "epochs": 4, "batch_size": 4, "seed": 3,
      "data": {"train": ["data/train"], "val": ["data/test"], "test": ["data/test"]}})";
  }

  fs::path root;
};

TEST_F(CliTest, SynthIsDeterministic) {
  std::ostringstream log;
  SynthOptions o;
  ASSERT_EQ(cmd_synth(global("a", 7), o, log), kExitOk);
  ASSERT_EQ(cmd_synth(global("b", 7), o, log), kExitOk);
  const std::string a = slurp(root / "a" / "crossing_seed7.txt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(root / "b" / "crossing_seed7.txt"));
  EXPECT_EQ(parse_trajectory_file(root / "a" / "crossing_seed7.txt").size(), 4u);
  const auto m = nlohmann::json::parse(slurp(root / "a" / "manifest.json"));
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["seed"], 7);
}

TEST_F(CliTest, SynthRejectsSingleAgent) {
  std::ostringstream log;
  SynthOptions o;
  o.agents = 1;
  EXPECT_EQ(cmd_synth(global("x"), o, log), kExitValidation);
  EXPECT_NE(log.str().find("n_agents"), std::string::npos);
}

TEST_F(CliTest, TrainWritesHistoryAndResumesExactly) {
  make_data();
  std::ostringstream log;
  ASSERT_EQ(cmd_train(global("full"), {}, log), kExitOk) << log.str();
  EXPECT_EQ(count_lines(slurp(root / "full" / "history.csv")), 5u);  // header + 4 epochs
  const auto m = nlohmann::json::parse(slurp(root / "full" / "manifest.json"));
  EXPECT_EQ(m["config_hash"], content_hash(slurp(root / "cfg.json")));

  TrainOptions half;
  half.epochs = 2;
  ASSERT_EQ(cmd_train(global("half"), half, log), kExitOk);
  TrainOptions rest;
  rest.resume = root / "half" / "final.ckpt";
  rest.epochs = 4;
  ASSERT_EQ(cmd_train(global("rest"), rest, log), kExitOk) << log.str();
  EXPECT_EQ(slurp(root / "rest" / "final.ckpt"), slurp(root / "full" / "final.ckpt"));
  const std::string full_hist = slurp(root / "full" / "history.csv");
  const std::string rest_hist = slurp(root / "rest" / "history.csv");
  EXPECT_NE(full_hist.find(rest_hist.substr(rest_hist.find('\n') + 1)), std::string::npos);
}

TEST_F(CliTest, MalformedConfigLeavesOnlyManifest) {
  std::ofstream(root / "cfg.json") << R"({"model": {"embed_dimm": 8}})";
  std::ostringstream log;
  EXPECT_EQ(cmd_train(global("out"), {}, log), kExitValidation);
  EXPECT_NE(log.str().find("model.embed_dimm"), std::string::npos);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(root / "out")) files.push_back(e.path().filename().string());
  EXPECT_EQ(files, std::vector<std::string>{"manifest.json"});
  const auto m = nlohmann::json::parse(slurp(root / "out" / "manifest.json"));
  EXPECT_EQ(m["status"], "failed");
}

TEST_F(CliTest, EvalAndPredictAgree) {
  make_data();
  std::ostringstream log;
  ASSERT_EQ(cmd_train(global("run"), {}, log), kExitOk);
  EvalOptions eo;
  eo.checkpoint = root / "run" / "best.ckpt";
  ASSERT_EQ(cmd_eval(global("eval"), eo, log), kExitOk) << log.str();
  const auto metrics = nlohmann::json::parse(slurp(root / "eval" / "metrics.json"));
  EXPECT_EQ(metrics["k"], 20);
  const std::size_t n = metrics["n_scenes"];
  ASSERT_GT(n, 2u);

  PredictOptions po;
  po.checkpoint = eo.checkpoint;
  po.scenes = {0, n - 1};
  po.plot = true;
  ASSERT_EQ(cmd_predict(global("pred"), po, log), kExitOk) << log.str();
  const std::string csv = slurp(root / "pred" / ("scene" + std::to_string(n - 1) + ".csv"));
  EXPECT_EQ(count_lines(csv), 1 + 20u * 4);

  // Predicted positions reproduce the eval metrics for that scene.
  const auto ckpt = load_checkpoint(eo.checkpoint);
  const auto cfg = load_experiment_config(root / "cfg.json");
  const auto scenes = load_scenes(expand_data_paths(cfg.data.test), ckpt.config.model, 1, cfg.data.dt);
  PredictionSet from_csv;
  from_csv.samples.assign(20, Trajectory(4));
  std::istringstream rows(csv.substr(csv.find('\n') + 1));
  std::string line;
  while (std::getline(rows, line)) {
    std::size_t s, t;
    double x, y;
    ASSERT_EQ(std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf", &s, &t, &x, &y), 4);
    from_csv.samples[s][t] = {x, y};
  }
  const auto best = best_of_k(from_csv, scene_future(scenes[n - 1]));
  EXPECT_NEAR(best.min_ade, metrics["per_scene"][n - 1]["min_ade"].get<double>(), 1e-12);
  EXPECT_NEAR(best.min_fde, metrics["per_scene"][n - 1]["min_fde"].get<double>(), 1e-12);

  double cv = 0.0;
  for (const auto& s : scenes) cv += ade(constant_velocity_baseline(s), scene_future(s));
  EXPECT_NEAR(metrics["constant_velocity"]["ade"].get<double>(), cv / static_cast<double>(scenes.size()), 1e-12);

  const std::string svg = slurp(root / "pred" / "scene0.svg");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_EQ(svg.find("href"), std::string::npos);
  EXPECT_EQ(svg.find("<image"), std::string::npos);
  std::size_t opened = 0, closed = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++opened;
  for (std::size_t p = svg.find("/>"); p != std::string::npos; p = svg.find("/>", p + 1)) ++closed;
  EXPECT_EQ(opened, 22u);
  EXPECT_EQ(closed, opened + 1);  // plus the background rect
  EXPECT_NE(svg.find("</svg>"), std::string::npos);

  // Same inputs, same outputs.
  ASSERT_EQ(cmd_predict(global("pred2"), po, log), kExitOk);
  EXPECT_EQ(slurp(root / "pred2" / "scene0.csv"), slurp(root / "pred" / "scene0.csv"));

  po.scenes = {n};
  EXPECT_EQ(cmd_predict(global("bad"), po, log), kExitValidation);

  EvalOptions k1 = eo;
  k1.k = 1;
  ASSERT_EQ(cmd_eval(global("k1"), k1, log), kExitOk);
  const auto m1 = nlohmann::json::parse(slurp(root / "k1" / "metrics.json"));
  EXPECT_TRUE(m1["aggregate"]["nll"].is_null());
  EXPECT_GE(m1["aggregate"]["min_ade"].get<double>(), metrics["aggregate"]["min_ade"].get<double>() - 1e-12);
}

TEST_F(CliTest, EmptyTestSetIsError) {
  make_data();
  std::ostringstream log;
  TrainOptions o;
  o.epochs = 1;
  ASSERT_EQ(cmd_train(global("run"), o, log), kExitOk);
  fs::create_directories(root / "empty");
  EvalOptions eo;
  eo.checkpoint = root / "run" / "final.ckpt";
  eo.data = {root / "empty"};
  EXPECT_NE(cmd_eval(global("eval"), eo, log), kExitOk);
  EXPECT_FALSE(fs::exists(root / "eval" / "metrics.json"));
}

TEST_F(CliTest, IncompatibleCheckpointRejected) {
  make_data();
  std::string junk = "MOIFCKPT";
  junk += std::string("\x09\x00\x00\x00", 4);
  std::ofstream(root / "bad.ckpt", std::ios::binary) << junk;
  std::ostringstream log;
  EvalOptions eo;
  eo.checkpoint = root / "bad.ckpt";
  EXPECT_EQ(cmd_eval(global("eval"), eo, log), kExitValidation);
  EXPECT_NE(log.str().find("version"), std::string::npos);
}

TEST_F(CliTest, GradcheckExitCodes) {
  std::ostringstream log;
  GradcheckOptions o;
  o.scope = "moif";
  EXPECT_EQ(cmd_gradcheck(global("gc"), o, log), kExitOk) << log.str();
  const auto j = nlohmann::json::parse(slurp(root / "gc" / "gradcheck.json"));
  EXPECT_TRUE(j["pass"].get<bool>());
  std::ofstream(root / "cfg.json") << R"({"model": {"embed_dim": 24}})";
  EXPECT_EQ(cmd_gradcheck(global("gc2"), o, log), kExitValidation);
  EXPECT_NE(log.str().find("embed_dim"), std::string::npos);
}

TEST(CliHelpers, HashAndSeeds) {
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
  EXPECT_NE(scene_sample_seed(1, 0), scene_sample_seed(1, 1));
  EXPECT_NE(scene_sample_seed(1, 0), scene_sample_seed(2, 0));
  EXPECT_EQ(scene_sample_seed(5, 3), scene_sample_seed(5, 3));
}

TEST(CliBinary, ExitCodes) {
  const std::string bin = MOIF_CLI_PATH;
  const fs::path out = fs::temp_directory_path() / "moif_cli_binary";
  fs::remove_all(out);
  auto run = [&](const std::string& args) {
    const int status = std::system((bin + " --out " + out.string() + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(run("synth --kind crossing --agents 4"), 0);
  EXPECT_EQ(run("synth --agents 1"), 1);
  EXPECT_EQ(run("synth --bogus"), 1);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("gradcheck --scope objective"), 0);
  EXPECT_EQ(run("gradcheck --scope nonsense"), 1);
  fs::remove_all(out);
}

}  // namespace
}  // namespace moif::cli
