#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "cyclemorph/cli.hpp"
#include "cyclemorph/common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cyclemorph - cycle-consistent deformable image registration"};
  app.require_subcommand(1);

  cm::cli::SynthArgs synth;
  std::uint64_t seed_value = 0;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic registration benchmark");
  synth_cmd->add_option("--config", synth.config_path, "SynthConfig JSON")->required();
  synth_cmd->add_option("--out", synth.out_dir, "output benchmark directory")->required();
  auto* synth_seed = synth_cmd->add_option("--seed", seed_value, "override the config seed");

  cm::cli::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the registration networks");
  train_cmd->add_option("--config", train.config_path, "TrainConfig JSON")->required();
  train_cmd->add_option("--data", train.data_dir, "benchmark directory")->required();
  train_cmd->add_option("--out", train.out_dir, "checkpoint/log directory")->required();
  train_cmd->add_option("--resume", train.resume_path, "resume from a checkpoint");
  train_cmd->add_flag("--multiscale", train.multiscale, "train global and local stages");
  train_cmd->add_flag("--sum-normalization", train.sum_normalization,
                      "aggregate losses as sums over the lattice instead of means");
  auto* train_seed = train_cmd->add_option("--seed", seed_value, "override the config seed");

  cm::cli::RegisterArgs reg;
  auto* reg_cmd = app.add_subcommand("register", "register one image pair");
  reg_cmd->add_option("--checkpoints", reg.checkpoint_dir, "directory from train")->required();
  reg_cmd->add_option("--moving", reg.moving_path, "moving image (.dtf/.pgm)")->required();
  reg_cmd->add_option("--fixed", reg.fixed_path, "fixed image (.dtf/.pgm)")->required();
  reg_cmd->add_option("--out", reg.out_dir, "output directory")->required();
  reg_cmd->add_flag("--multiscale", reg.multiscale, "global + patch-local registration");
  reg_cmd->add_flag("--plain-sum-fusion", reg.plain_sum_fusion,
                    "add the stage fields instead of composing them");

  cm::cli::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a registration run");
  eval_cmd->add_option("--pred", eval.pred_dir, "register output directory")->required();
  eval_cmd->add_option("--truth", eval.truth_dir, "benchmark pair directory")->required();
  eval_cmd->add_option("--out", eval.out_path, "report JSON path")->required();
  eval_cmd->add_option("--checkpoints", eval.checkpoint_dir,
                       "model directory for the reverse-consistency metrics");
  eval_cmd->add_flag("--plots", eval.plots, "emit difference/quiver plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth_cmd->parsed()) {
      if (synth_seed->count()) synth.seed = seed_value;
      cm::cli::run_synth(synth);
    } else if (train_cmd->parsed()) {
      if (train_seed->count()) train.seed = seed_value;
      cm::cli::run_train(train);
    } else if (reg_cmd->parsed()) {
      cm::cli::run_register(reg);
    } else if (eval_cmd->parsed()) {
      cm::cli::run_eval(eval);
    }
  } catch (const cm::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
