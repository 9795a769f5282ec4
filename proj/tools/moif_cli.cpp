#include <iostream>

#include "CLI11.hpp"
#include "moif/commands.hpp"

int main(int argc, char** argv) {
  using namespace moif::cli;
  CLI::App app{"Multi-order intention trajectory predictor"};
  app.require_subcommand(1);

  GlobalOptions global;
  std::string config, out = "out";
  std::uint64_t seed = 0;
  app.add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides the config)");
  app.add_option("--out", out, "Output directory");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scenario file");
  synth_cmd->add_option("--kind", synth.kind, "crossing|parallel|overtaking|stationary_group|random_walk");
  synth_cmd->add_option("--agents", synth.agents);
  synth_cmd->add_option("--frames", synth.frames);
  synth_cmd->add_option("--noise", synth.noise, "Position noise std (m)");
  synth_cmd->add_option("--interaction", synth.interaction, "Pairwise repulsion strength");
  synth_cmd->add_option("--speed-min", synth.speed_min);
  synth_cmd->add_option("--speed-max", synth.speed_max);

  TrainOptions train;
  std::string resume;
  std::size_t epochs = 0;
  auto* train_cmd = app.add_subcommand("train", "Train from the config's data.train/data.val");
  auto* resume_opt = train_cmd->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  auto* epochs_opt = train_cmd->add_option("--epochs", epochs, "Total epochs (overrides the config)");

  EvalOptions eval;
  std::string eval_ckpt;
  std::vector<std::string> eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "Best-of-K metrics on a test set");
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Files or directories (default: data.test)");
  eval_cmd->add_option("-k,--samples", eval.k, "Samples per scene");
  eval_cmd->add_flag("--joint", eval.joint, "FDE of the min-ADE sample");

  PredictOptions predict;
  std::string pred_ckpt;
  std::vector<std::string> pred_data;
  auto* predict_cmd = app.add_subcommand("predict", "Write sampled futures as CSV (and SVG)");
  predict_cmd->add_option("--checkpoint", pred_ckpt)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", pred_data, "Files or directories (default: data.test)");
  predict_cmd->add_option("--scene", predict.scenes, "Scene indices");
  predict_cmd->add_option("-k,--samples", predict.k, "Samples per scene");
  predict_cmd->add_flag("--plot", predict.plot, "Also write an SVG per scene");

  GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  grad_cmd->add_option("--scope", grad.scope, "tensor|moif|approximator|kan|objective|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (!config.empty()) global.config = config;
  if (seed_opt->count() > 0) global.seed = seed;
  global.out = out;

  if (synth_cmd->parsed()) return cmd_synth(global, synth, std::cerr);
  if (train_cmd->parsed()) {
    if (resume_opt->count() > 0) train.resume = resume;
    if (epochs_opt->count() > 0) train.epochs = epochs;
    return cmd_train(global, train, std::cerr);
  }
  if (eval_cmd->parsed()) {
    eval.checkpoint = eval_ckpt;
    eval.data.assign(eval_data.begin(), eval_data.end());
    return cmd_eval(global, eval, std::cerr);
  }
  if (predict_cmd->parsed()) {
    predict.checkpoint = pred_ckpt;
    predict.data.assign(pred_data.begin(), pred_data.end());
    return cmd_predict(global, predict, std::cerr);
  }
  return cmd_gradcheck(global, grad, std::cerr);
}
