#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "copush/controller.hpp"
#include "copush/dgnn.hpp"
#include "copush/eval.hpp"
#include "copush/motion_synth.hpp"
#include "copush/physics.hpp"

namespace copush {

// One experiment case: object, pace and condition.
struct ScenarioSpec {
  std::string id = "scenario";
  double mass = 36.0;            // kg
  double mu_static = 0.2265;
  std::optional<double> f_com;   // N; explored when absent
  double task_time = 6.0;        // s per action
  double distance = 0.30;        // m per action
  double participant_scale = 1.0;
  std::string condition = "dry";  // dry | assisted
  int repetitions = 5;            // pull/push pairs
  std::uint64_t seed = 1;
};

ScenarioSpec load_scenario(const std::string& path);
void save_scenario(const std::string& path, const ScenarioSpec& spec);

// Simulated-participant and plant constants used by closed-loop trials.
struct TrialRunConfig {
  double human_kp = 3000.0;     // N/m
  double human_kd = 300.0;      // N*s/m
  double human_f_max = 120.0;   // N
  double human_kp_jitter = 0.10;  // relative per-action gain variation
  double idle_gap_min = 2.8, idle_gap_max = 4.0;  // s between actions
  double warmup = 3.0;          // s of initial idle
  double sensor_noise_std = 0.2;  // N
  double skeleton_noise_std = 0.005;  // m
  double sim_dt = 1e-3;
  double spring_k = 2000.0, spring_c = 50.0;
};

FrictionModel scenario_friction(const ScenarioSpec& scenario);

// Runs the 100 Hz loop: synthetic participant, windowed prediction (assisted),
// intention filter, assist ramp, force control and physics stepping.
TrialLog run_trial(const ScenarioSpec& scenario, const AssistConfig& assist,
                   const ModelParams* model, const TrialRunConfig& run = {});

// CSV with the fixed header
// t,box_x,box_v,f_h_x,f_h_norm,f_r_x,f_d_x,u_x,intent_raw,intent_filtered
// plus a <path>.meta.json sidecar carrying condition and scenario identity.
void write_trial_csv(const std::string& path, const TrialLog& log);
TrialLog load_trial_csv(const std::string& path);

}  // namespace copush
