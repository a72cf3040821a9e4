#include "copush/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "copush/error.hpp"
#include "copush/sequence_io.hpp"

namespace copush {

namespace fs = std::filesystem;

DatasetBuildResult cmd_synth(const SynthConfig& config, int n_train, int n_val,
                             const std::string& out_dir) {
  const DatasetBuildResult result = build_dataset(config, n_train, n_val, out_dir);
  std::printf("wrote %zu train + %zu val recordings to %s\n", result.train.recordings.size(),
              result.val.recordings.size(), out_dir.c_str());
  std::printf("realized label mix: idle %.3f, pull %.3f, push %.3f (%d pull/push actions)\n",
              result.realized_mix[0], result.realized_mix[1], result.realized_mix[2],
              result.n_actions);
  return result;
}

ManifestPaths resolve_manifests(const std::string& manifest_arg) {
  ManifestPaths paths;
  if (fs::is_directory(manifest_arg)) {
    paths.train = manifest_arg + "/manifest_train.json";
    paths.val = manifest_arg + "/manifest_val.json";
  } else {
    paths.train = manifest_arg;
    const fs::path p(manifest_arg);
    paths.val = (p.parent_path() / "manifest_val.json").string();
  }
  for (const auto& p : {paths.train, paths.val}) {
    if (!fs::exists(p)) throw IoError("manifest not found: " + p);
  }
  return paths;
}

Checkpoint cmd_train(const std::string& manifest_arg, const TrainConfig& cfg,
                     const std::string& out_checkpoint) {
  const ManifestPaths paths = resolve_manifests(manifest_arg);
  Checkpoint cp = train(paths.train, paths.val, cfg);
  save_checkpoint(cp, out_checkpoint);
  std::printf("checkpoint written to %s (best val balanced accuracy %.4f)\n",
              out_checkpoint.c_str(),
              cp.history.empty() ? 0.0
                                 : std::max_element(cp.history.begin(), cp.history.end(),
                                                    [](const EpochMetrics& a,
                                                       const EpochMetrics& b) {
                                                      return a.val_balanced_accuracy <
                                                             b.val_balanced_accuracy;
                                                    })
                                       ->val_balanced_accuracy);
  return cp;
}

double cmd_explore(const std::string& scenario_path, const AssistConfig& assist) {
  ScenarioSpec scenario = load_scenario(scenario_path);
  SimConfig sim_cfg;
  sim_cfg.sensor_noise_std = 0.2;
  sim_cfg.seed = derive_seed(scenario.seed, 77);
  const double f_com = explore_object(sim_cfg, scenario_friction(scenario), assist);
  scenario.f_com = f_com;
  save_scenario(scenario_path, scenario);
  std::printf("explored f_com = %.1f N for scenario %s (mass %.1f kg)\n", f_com,
              scenario.id.c_str(), scenario.mass);
  return f_com;
}

std::string cmd_trial(const std::string& scenario_path, const AssistConfig& assist,
                      const std::string& checkpoint_path, const std::string& out_csv,
                      const TrialRunConfig& run, const std::string& condition_override) {
  ScenarioSpec scenario = load_scenario(scenario_path);
  if (!condition_override.empty()) {
    if (condition_override != "dry" && condition_override != "assisted") {
      throw ValidationError("condition must be dry or assisted");
    }
    scenario.condition = condition_override;
  }
  AssistConfig cfg = assist;
  ModelParams params;
  const ModelParams* model = nullptr;
  if (scenario.condition == "assisted") {
    if (checkpoint_path.empty()) {
      throw ValidationError("assisted trial requires a checkpoint");
    }
    if (!scenario.f_com.has_value()) {
      throw ValidationError("scenario " + scenario.id +
                            " has no f_com; run the explore step first");
    }
    cfg.f_com = *scenario.f_com;
    params = load_checkpoint(checkpoint_path).params;
    model = &params;
  }
  const TrialLog log = run_trial(scenario, cfg, model, run);
  write_trial_csv(out_csv, log);
  std::printf("trial %s (%s): %zu ticks -> %s\n", scenario.id.c_str(),
              scenario.condition.c_str(), log.size(), out_csv.c_str());
  return out_csv;
}

namespace {

nlohmann::ordered_json action_to_json(const ActionRecord& a) {
  nlohmann::ordered_json j;
  j["kind"] = a.kind == IntentionClass::Pull ? "pull" : "push";
  j["start_s"] = a.start_time;
  j["end_s"] = a.end_time;
  j["mean_N"] = a.mean_force;
  j["cumulative_Ns"] = a.cumulative_force;
  j["peak_N"] = a.peak_force;
  j["retained_samples"] = a.retained_samples;
  return j;
}

nlohmann::ordered_json welch_to_json(const WelchResult& w) {
  return {{"t", w.t}, {"dof", w.dof}, {"p", w.p}};
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["scenario_id"] = r.scenario_id;
  j["conditions"] = nlohmann::ordered_json::array();
  for (const auto& c : r.conditions) {
    nlohmann::ordered_json cj;
    cj["condition"] = c.condition;
    cj["n_actions"] = static_cast<int>(c.actions.size());
    cj["mean_force_N"] = c.effort.mean_of_means;
    cj["mean_force_std"] = c.effort.mean_std;
    cj["cumulative_force_Ns"] = c.effort.cumulative_mean;
    cj["cumulative_force_std"] = c.effort.cumulative_std;
    cj["actions"] = nlohmann::ordered_json::array();
    for (const auto& a : c.actions) cj["actions"].push_back(action_to_json(a));
    if (c.has_leads) {
      cj["lead_time"] = {{"mean_s", c.leads.mean},
                         {"std_s", c.leads.std},
                         {"n", static_cast<int>(c.leads.per_action.size())},
                         {"skipped", c.leads.skipped}};
      cj["intention"] = {{"accuracy", c.intention.accuracy},
                         {"balanced_accuracy", c.intention.balanced_accuracy}};
    }
    j["conditions"].push_back(std::move(cj));
  }
  if (r.has_t_test) {
    j["welch_mean_force"] = welch_to_json(r.mean_force_test);
    j["welch_cumulative_force"] = welch_to_json(r.cumulative_force_test);
  }
  j["warnings"] = r.warnings;
  return j;
}

std::string strip_json_suffix(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    return path.substr(0, path.size() - 5);
  }
  return path;
}

void write_actions_csv(const std::string& path, const MetricsReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "condition,kind,mean_N,cumulative_Ns\n";
  for (const auto& c : r.conditions) {
    for (const auto& a : c.actions) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f\n", c.condition.c_str(),
                    a.kind == IntentionClass::Pull ? "pull" : "push", a.mean_force,
                    a.cumulative_force);
      out << buf;
    }
  }
}

void write_series_csv(const std::string& path, const TrialLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "t,f_h_norm,retained,f_r_x,f_d_x,intent_filtered\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%.3f,%.6f,%d,%.6f,%.6f,%d\n", log.t[i], log.f_h_norm[i],
                  log.f_h_norm[i] >= kForceTrimThreshold ? 1 : 0, log.f_r_x[i], log.f_d_x[i],
                  log.intent_filtered[i]);
    out << buf;
  }
}

MetricsReport single_condition_report(const TrialLog& log) {
  MetricsReport r;
  r.scenario_id = log.scenario_id;
  ConditionSummary s;
  s.condition = log.condition;
  s.actions = segment_actions(log);
  if (!s.actions.empty()) s.effort = effort_stats(s.actions);
  if (log.condition == "assisted") {
    s.leads = lead_time(log);
    s.has_leads = true;
  }
  r.conditions.push_back(std::move(s));
  r.warnings.push_back("single condition only: no t-test");
  return r;
}

}  // namespace

void write_metrics_json(const std::vector<MetricsReport>& reports, const std::string& path) {
  nlohmann::ordered_json j;
  j["scenarios"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) j["scenarios"].push_back(report_to_json(r));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<MetricsReport> cmd_metrics(const std::vector<std::string>& log_paths,
                                       const std::string& out_json) {
  if (log_paths.empty()) throw ValidationError("cmd_metrics: no trial logs given");
  std::map<std::string, std::vector<TrialLog>> by_scenario;
  for (const auto& p : log_paths) {
    TrialLog log = load_trial_csv(p);
    if (log.size() == 0) throw ValidationError("empty trial log: " + p);
    by_scenario[log.scenario_id].push_back(std::move(log));
  }

  const std::string prefix = strip_json_suffix(out_json);
  std::vector<MetricsReport> reports;
  for (auto& [scenario, logs] : by_scenario) {
    const TrialLog* dry = nullptr;
    const TrialLog* assisted = nullptr;
    for (const auto& log : logs) {
      if (log.condition == "dry") {
        if (dry != nullptr) throw ValidationError("duplicate dry log for scenario " + scenario);
        dry = &log;
      } else {
        if (assisted != nullptr) {
          throw ValidationError("duplicate assisted log for scenario " + scenario);
        }
        assisted = &log;
      }
    }
    MetricsReport report;
    if (dry != nullptr && assisted != nullptr) {
      report = compare_conditions(*dry, *assisted);
    } else {
      std::printf("warning: scenario %s has a single condition, skipping t-test\n",
                  scenario.c_str());
      report = single_condition_report(dry != nullptr ? *dry : *assisted);
    }
    write_actions_csv(prefix + "_" + scenario + "_actions.csv", report);
    for (const auto& log : logs) {
      write_series_csv(prefix + "_" + scenario + "_" + log.condition + "_series.csv", log);
    }
    reports.push_back(std::move(report));
  }
  write_metrics_json(reports, out_json);
  std::printf("metrics written to %s\n", out_json.c_str());
  return reports;
}

}  // namespace copush
