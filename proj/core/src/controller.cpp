#include "copush/controller.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "copush/dgnn.hpp"
#include "copush/error.hpp"

namespace copush {

AssistConfig load_assist_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad JSON: " + e.what());
  }
  for (const char* key : {"f_com", "K_f", "transition_s", "control_hz", "u_max", "filter_len"}) {
    if (!j.contains(key)) {
      throw ValidationError(path + ": controller config missing required field " +
                            std::string(key));
    }
  }
  AssistConfig cfg;
  cfg.f_com = j.at("f_com").get<double>();
  cfg.force_gain = j.at("K_f").get<double>();
  cfg.transition_duration = j.at("transition_s").get<double>();
  cfg.control_rate = j.at("control_hz").get<double>();
  cfg.u_max = j.at("u_max").get<double>();
  cfg.filter_length = j.at("filter_len").get<int>();
  if (cfg.f_com < 0.0 || cfg.transition_duration <= 0.0 || cfg.force_gain <= 0.0 ||
      cfg.control_rate <= 0.0 || cfg.u_max <= 0.0 || cfg.filter_length < 1) {
    throw ValidationError(path + ": controller config values out of range");
  }
  return cfg;
}

void save_assist_config(const std::string& path, const AssistConfig& cfg) {
  nlohmann::ordered_json j;
  j["f_com"] = cfg.f_com;
  j["K_f"] = cfg.force_gain;
  j["transition_s"] = cfg.transition_duration;
  j["control_hz"] = cfg.control_rate;
  j["u_max"] = cfg.u_max;
  j["filter_len"] = cfg.filter_length;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

IntentionClass filter_intention(IntentionFilterState& state, const Eigen::Vector3d& logits,
                                int filter_length) {
  if (!logits.allFinite()) throw ValidationError("filter_intention: non-finite logits");
  state.buffer.push_back(logits);
  while (static_cast<int>(state.buffer.size()) > filter_length) state.buffer.pop_front();
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& v : state.buffer) mean += v;
  mean /= static_cast<double>(state.buffer.size());
  state.current = select_class(mean);
  return state.current;
}

void assist_target(ControllerState& ctrl, IntentionClass new_intent, double t,
                   const AssistConfig& cfg) {
  if (new_intent != ctrl.intent) {
    ctrl.ramp_from = ctrl.f_d.x();
    ctrl.ramp_start_time = t;
    ctrl.intent = new_intent;
    ctrl.idle_settled = false;
  }
  const double target = motion_sign(ctrl.intent) * cfg.f_com;
  const double progress =
      std::clamp((t - ctrl.ramp_start_time) / cfg.transition_duration, 0.0, 1.0);
  ctrl.f_d.x() = ctrl.ramp_from + (target - ctrl.ramp_from) * progress;
  ctrl.f_d.y() = 0.0;
  ctrl.f_d.z() = 0.0;
}

double force_control(double f_d, double f_r, double force_gain, double u_max) {
  const double u = force_gain * (f_d - f_r);
  return std::clamp(u, -u_max, u_max);
}

void on_idle_stop(ControllerState& ctrl, SimState& sim, const SimConfig& sim_cfg) {
  zero_sensor_bias(sim, sim_cfg);
  ctrl.idle_settled = true;
  ctrl.robot_cmd_x = sim.robot_cmd_x;
}

double ControlLoop::tick(double t, const std::optional<Eigen::Vector3d>& logits, double f_r_x,
                         SimState& sim, const SimConfig& sim_cfg) {
  if (logits.has_value()) {
    filter_intention(filter_, *logits, cfg_.filter_length);
    last_logits_time_ = t;
  }
  if (t - last_logits_time_ > staleness_budget) {
    return 0.0;  // stale intention: hold the last command
  }
  assist_target(ctrl_, filter_.current, t, cfg_);

  // An idle stop re-zeroes the sensor once; with the bias nulled the f_d = 0
  // loop holds the commanded position (and any stored spring energy) in place.
  const bool ramp_done = t - ctrl_.ramp_start_time >= cfg_.transition_duration;
  if (ctrl_.intent == IntentionClass::Idle && ramp_done && !ctrl_.idle_settled) {
    on_idle_stop(ctrl_, sim, sim_cfg);
    f_r_x = 0.0;
  }

  const double u = force_control(ctrl_.f_d.x(), f_r_x, cfg_.force_gain, cfg_.u_max);
  ctrl_.robot_cmd_x += u;
  return u;
}

double explore_object(const SimConfig& sim_cfg, const FrictionModel& friction,
                      const AssistConfig& cfg) {
  constexpr double kForceStep = 2.0;       // N
  constexpr double kDwell = 1.0;           // s
  constexpr double kMoveTolerance = 2e-3;  // m
  constexpr double kForceCap = 200.0;      // N

  Simulation sim(sim_cfg, friction);
  const int ticks_per_dwell = static_cast<int>(std::lround(kDwell * cfg.control_rate));
  const int substeps =
      std::max(1, static_cast<int>(std::lround(1.0 / (cfg.control_rate * sim_cfg.dt))));

  double cmd = sim.state().robot_cmd_x;
  double f_r = 0.0;
  for (double f_test = kForceStep; f_test <= kForceCap + 0.5 * kForceStep;
       f_test += kForceStep) {
    const double x_start = sim.state().box_x;
    for (int tick = 0; tick < ticks_per_dwell; ++tick) {
      cmd += force_control(-f_test, f_r, cfg.force_gain, cfg.u_max);
      SensorReadings r;
      for (int s = 0; s < substeps; ++s) r = sim.step(0.0, cmd);
      f_r = r.f_r.x();
    }
    const double moved = std::abs(sim.state().box_x - x_start);
    if (moved >= kMoveTolerance) {
      if (f_test <= kForceStep) {
        throw ValidationError("explore_object: object moved at the first force step");
      }
      return f_test - kForceStep;
    }
  }
  throw ValidationError("explore_object: no breakaway below 200 N");
}

}  // namespace copush
