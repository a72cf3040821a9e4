#pragma once

#include <Eigen/Core>
#include <deque>
#include <optional>
#include <string>

#include "copush/physics.hpp"
#include "copush/skeleton.hpp"

namespace copush {

struct AssistConfig {
  double f_com = 0.0;                 // N, friction-compensation magnitude
  double force_gain = 5e-5;           // K_f, m/N
  double transition_duration = 1.0;   // s
  double control_rate = 100.0;        // Hz
  double u_max = 0.002;               // m, per-tick correction clamp
  int filter_length = 15;
};

// JSON schema: {f_com, K_f, transition_s, control_hz, u_max, filter_len},
// every field required.
AssistConfig load_assist_config(const std::string& path);
void save_assist_config(const std::string& path, const AssistConfig& cfg);

// Boxcar filter over the last `filter_length` network outputs.
struct IntentionFilterState {
  std::deque<Eigen::Vector3d> buffer;
  IntentionClass current = IntentionClass::Idle;
};

IntentionClass filter_intention(IntentionFilterState& state, const Eigen::Vector3d& logits,
                                int filter_length = 15);

struct ControllerState {
  IntentionClass intent = IntentionClass::Idle;  // current ramp-target intention
  Eigen::Vector3d f_d = Eigen::Vector3d::Zero(); // desired force, y/z pinned to 0
  double ramp_start_time = 0.0;
  double ramp_from = 0.0;    // N, f_d.x at the instant the ramp began
  double robot_cmd_x = 0.0;
  bool idle_settled = false; // idle ramp finished and bias was re-zeroed
};

// Updates f_d for time t. An intention change (re)starts a linear ramp from
// the instantaneous f_d.x to motion_sign(intent) * f_com over
// transition_duration seconds.
void assist_target(ControllerState& ctrl, IntentionClass new_intent, double t,
                   const AssistConfig& cfg);

// Position correction from force error, clamped to +-u_max.
double force_control(double f_d, double f_r, double force_gain, double u_max = 0.002);

// Bias reset on an idle stop: re-zeroes the robot-side sensor and freezes the
// commanded position until the intention leaves idle.
void on_idle_stop(ControllerState& ctrl, SimState& sim, const SimConfig& sim_cfg);

// One 100 Hz assistance tick: filter (when fresh logits arrived), ramp, force
// control, idle bias handling. Tolerates stale intentions up to
// staleness_budget; beyond that the last command is held.
class ControlLoop {
 public:
  explicit ControlLoop(AssistConfig cfg) : cfg_(cfg) {}

  double tick(double t, const std::optional<Eigen::Vector3d>& logits, double f_r_x, SimState& sim,
              const SimConfig& sim_cfg);

  const ControllerState& controller() const { return ctrl_; }
  ControllerState& controller() { return ctrl_; }
  const IntentionFilterState& filter() const { return filter_; }
  const AssistConfig& config() const { return cfg_; }
  double staleness_budget = 0.050;  // s

 private:
  AssistConfig cfg_;
  ControllerState ctrl_;
  IntentionFilterState filter_;
  double last_logits_time_ = -1e18;
};

// One-time object exploration: steps the commanded force in 2 N increments
// with 1 s dwells until the box moves more than 2 mm within a dwell; returns
// the largest magnitude that left the box in place.
double explore_object(const SimConfig& sim_cfg, const FrictionModel& friction,
                      const AssistConfig& cfg);

}  // namespace copush
