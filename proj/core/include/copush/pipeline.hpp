#pragma once

#include <string>
#include <vector>

#include "copush/controller.hpp"
#include "copush/dgnn.hpp"
#include "copush/eval.hpp"
#include "copush/motion_synth.hpp"
#include "copush/trial.hpp"

namespace copush {

// dataset synthesis; prints the realized label mix
DatasetBuildResult cmd_synth(const SynthConfig& config, int n_train, int n_val,
                             const std::string& out_dir);

// Accepts either a dataset directory (containing manifest_train.json and
// manifest_val.json) or the path of the train manifest itself.
struct ManifestPaths {
  std::string train;
  std::string val;
};
ManifestPaths resolve_manifests(const std::string& manifest_arg);

Checkpoint cmd_train(const std::string& manifest_arg, const TrainConfig& cfg,
                     const std::string& out_checkpoint);

// friction exploration for a scenario file; stores the result back
double cmd_explore(const std::string& scenario_path, const AssistConfig& assist);

// closed-loop trial; assisted scenarios need a checkpoint path. A non-empty
// condition_override runs the scenario under that condition without editing
// the file.
std::string cmd_trial(const std::string& scenario_path, const AssistConfig& assist,
                      const std::string& checkpoint_path, const std::string& out_csv,
                      const TrialRunConfig& run = {}, const std::string& condition_override = "");

// pairs logs by scenario id, runs the evaluation harness and writes the
// report JSON plus plot-ready CSVs next to it
std::vector<MetricsReport> cmd_metrics(const std::vector<std::string>& log_paths,
                                       const std::string& out_json);

void write_metrics_json(const std::vector<MetricsReport>& reports, const std::string& path);

}  // namespace copush
