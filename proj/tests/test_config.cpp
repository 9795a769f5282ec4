#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "moif/config.hpp"
#include "moif/errors.hpp"

namespace moif {
namespace {

namespace fs = std::filesystem;

std::string error_of(const Json& j) {
  try {
    experiment_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, DefaultsWhenEmpty) {
  const auto c = experiment_config_from_json(Json::object());
  EXPECT_EQ(c.train, TrainConfig{});
  EXPECT_EQ(c.data, DataConfig{});
}

TEST(Config, UnknownKeysNamed) {
  EXPECT_NE(error_of(Json{{"model", {{"foo", 1}}}}).find("'model.foo'"), std::string::npos);
  EXPECT_NE(error_of(Json{{"epoch", 3}}).find("'epoch'"), std::string::npos);
  EXPECT_NE(error_of(Json{{"data", {{"tests", Json::array()}}}}).find("'data.tests'"), std::string::npos);
  EXPECT_NE(error_of(Json{{"loss", {{"w_direction", 1.0}}}}).find("'loss.w_direction'"), std::string::npos);
}

TEST(Config, WrongTypesNamed) {
  EXPECT_NE(error_of(Json{{"lr", "fast"}}).find("'lr'"), std::string::npos);
  EXPECT_NE(error_of(Json{{"model", {{"embed_dim", -4}}}}).find("'model.embed_dim'"), std::string::npos);
  EXPECT_NE(error_of(Json{{"model", {{"embed_dim", 2.5}}}}).find("'model.embed_dim'"), std::string::npos);
  EXPECT_FALSE(error_of(Json{{"model", {{"flags", "PQ"}}}}).empty());
  EXPECT_FALSE(error_of(Json{{"model", {{"embed_dim", 25}}}}).empty());
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.train.model.flags = AblationFlags::parse("PVDEIBA");
  c.train.model.scale_mode = ScaleMode::kSqrt;
  c.train.model.approach = ApproachMode::kPhysical;
  c.train.loss.w_kl = 0.25;
  c.train.lr = 3e-4;
  c.train.kan_lr_scale = 0.5;
  c.train.seed = 123456789012ull;
  c.data.train = {"/a/b.txt"};
  c.data.stride = 3;
  const auto back = experiment_config_from_json(to_json(c));
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.data, c.data);
  EXPECT_EQ(train_config_from_json(to_json(c.train)), c.train);
}

TEST(Config, FileLoadingResolvesRelativePaths) {
  const fs::path dir = fs::temp_directory_path() / "moif_config_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "data");
  std::ofstream(dir / "cfg.json") << R"({"epochs": 2, "data": {"train": ["data"], "test": ["/abs/x.txt"]}})";
  std::ofstream(dir / "data" / "b.txt") << "0 1 0 0\n";
  std::ofstream(dir / "data" / "a.txt") << "0 1 0 0\n";
  std::ofstream(dir / "data" / "notes.md") << "ignored\n";
  const auto c = load_experiment_config(dir / "cfg.json");
  EXPECT_EQ(c.train.epochs, 2u);
  ASSERT_EQ(c.data.train.size(), 1u);
  EXPECT_EQ(c.data.train[0], dir / "data");
  EXPECT_EQ(c.data.test[0], fs::path("/abs/x.txt"));
  const auto files = expand_data_paths(c.data.train);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "a.txt");
  EXPECT_THROW(expand_data_paths({dir / "missing"}), IoError);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_experiment_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_experiment_config(dir / "absent.json"), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace moif
