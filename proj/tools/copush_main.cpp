// copush: context-aware collaborative push/pull laboratory.
// Subcommands: synth, train, explore, trial, metrics, gradcheck.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "copush/error.hpp"
#include "copush/pipeline.hpp"

namespace {

copush::AssistConfig assist_from(const std::string& config_path) {
  if (config_path.empty()) return copush::AssistConfig{};
  return copush::load_assist_config(config_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-aware collaborative push/pull laboratory"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled skeleton dataset");
  std::string synth_out = "dataset";
  std::uint64_t synth_seed = 1;
  int n_train = 22, n_val = 6;
  double noise_std = 0.005;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", synth_seed, "master seed");
  synth->add_option("--train", n_train, "training recordings");
  synth->add_option("--val", n_val, "validation recordings");
  synth->add_option("--noise", noise_std, "joint position noise std [m]");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the intention model");
  std::string train_manifest, train_out = "checkpoint.json";
  copush::TrainConfig tc;
  bool run_grad_check = false;
  train_cmd->add_option("--manifest", train_manifest, "dataset dir or train manifest path")
      ->required();
  train_cmd->add_option("--out", train_out, "checkpoint output path");
  train_cmd->add_option("--seed", tc.seed, "training seed");
  train_cmd->add_option("--epochs", tc.epochs, "max epochs");
  train_cmd->add_option("--batch-size", tc.batch_size, "batch size");
  train_cmd->add_option("--lr", tc.learning_rate, "learning rate");
  train_cmd->add_option("--weight-decay", tc.weight_decay, "weight decay");
  train_cmd->add_option("--stride", tc.train_stride, "training window stride [frames]");
  train_cmd->add_option("--stop-balanced-acc", tc.stop_balanced_accuracy,
                        "early stop threshold (<=0 disables)");
  train_cmd->add_flag("--grad-check", run_grad_check,
                      "print the max finite-difference gradient error and exit");

  // explore
  auto* explore = app.add_subcommand("explore", "identify f_com for a scenario");
  std::string explore_scenario, explore_config;
  explore->add_option("--scenario", explore_scenario, "scenario JSON path")->required();
  explore->add_option("--config", explore_config, "controller config JSON");

  // trial
  auto* trial = app.add_subcommand("trial", "run a closed-loop trial");
  std::string trial_scenario, trial_config, trial_checkpoint, trial_out = "trial.csv";
  std::string trial_condition;
  trial->add_option("--scenario", trial_scenario, "scenario JSON path")->required();
  trial->add_option("--config", trial_config, "controller config JSON");
  trial->add_option("--checkpoint", trial_checkpoint, "model checkpoint (assisted)");
  trial->add_option("--out", trial_out, "trial log CSV path");
  trial->add_option("--condition", trial_condition, "override: dry|assisted");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "evaluate trial logs");
  std::vector<std::string> metric_logs;
  std::string metrics_out = "metrics.json";
  metrics->add_option("logs", metric_logs, "trial log CSV paths")->required();
  metrics->add_option("--out", metrics_out, "report JSON path");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::uint64_t gc_seed = 1;
  double gc_eps = 1e-5;
  gradcheck->add_option("--seed", gc_seed, "parameter seed");
  gradcheck->add_option("--epsilon", gc_eps, "finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      copush::SynthConfig cfg;
      cfg.seed = synth_seed;
      cfg.noise_std = noise_std;
      copush::cmd_synth(cfg, n_train, n_val, synth_out);
    } else if (train_cmd->parsed()) {
      if (run_grad_check) {
        const double err = copush::grad_check(tc.seed, 1e-5);
        std::printf("grad check: max relative error %.3e\n", err);
        return err < 1e-4 ? 0 : 1;
      }
      copush::cmd_train(train_manifest, tc, train_out);
    } else if (explore->parsed()) {
      copush::cmd_explore(explore_scenario, assist_from(explore_config));
    } else if (trial->parsed()) {
      copush::cmd_trial(trial_scenario, assist_from(trial_config), trial_checkpoint, trial_out,
                        copush::TrialRunConfig{}, trial_condition);
    } else if (metrics->parsed()) {
      copush::cmd_metrics(metric_logs, metrics_out);
    } else if (gradcheck->parsed()) {
      const double err = copush::grad_check(gc_seed, gc_eps);
      std::printf("grad check: max relative error %.3e\n", err);
      return err < 1e-4 ? 0 : 1;
    }
  } catch (const copush::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const copush::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
