#include "copush/physics.hpp"

#include <cmath>

#include "copush/error.hpp"

namespace copush {

namespace {
double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}

double friction_force(double box_v, double f_applied_net, const FrictionModel& model,
                      double v_stick) {
  if (!std::isfinite(box_v) || !std::isfinite(f_applied_net)) {
    throw ValidationError("friction_force: non-finite input");
  }
  const double peak = model.static_peak();
  const double kinetic = model.kinetic_level();
  if (std::abs(box_v) < v_stick) {
    if (std::abs(f_applied_net) <= peak) return -f_applied_net;  // stick
    return -sign(f_applied_net) * kinetic;                       // breakaway
  }
  return -sign(box_v) * kinetic;  // slip
}

double spring_force(const SimState& state, const SimConfig& config) {
  if (!config.robot_attached) return 0.0;
  return config.spring_k * (state.robot_cmd_x - state.box_x) - config.spring_c * state.box_v;
}

SensorReadings step(SimState& state, double f_h_x, double robot_cmd_x, const SimConfig& config,
                    const FrictionModel& friction, Rng* noise_rng) {
  state.robot_cmd_x = robot_cmd_x;
  const double f_s = spring_force(state, config);
  const double applied = f_h_x + f_s;
  const double f_f = friction_force(state.box_v, applied, friction, config.v_stick);

  const bool was_slipping = std::abs(state.box_v) >= config.v_stick;
  if (!was_slipping && std::abs(applied) <= friction.static_peak()) {
    state.box_v = 0.0;  // stick is exact
  } else {
    const double a = (applied + f_f) / friction.mass;
    const double v_new = state.box_v + a * config.dt;
    const bool crossed = sign(v_new) != sign(state.box_v) && state.box_v != 0.0;
    if ((crossed || std::abs(v_new) < config.v_stick) &&
        std::abs(applied) <= friction.static_peak()) {
      state.box_v = 0.0;  // capture into stiction
    } else {
      state.box_v = v_new;
    }
  }
  state.box_x += state.box_v * config.dt;
  state.time += config.dt;
  state.spring_deflection = config.robot_attached ? state.robot_cmd_x - state.box_x : 0.0;

  if (!std::isfinite(state.box_x) || !std::isfinite(state.box_v)) {
    throw NumericalError("simulation diverged at t=" + std::to_string(state.time));
  }

  SensorReadings r;
  r.box_x = state.box_x;
  r.box_v = state.box_v;
  r.friction_x = -f_f;
  r.slipping = std::abs(state.box_v) >= config.v_stick;
  r.f_r.x() = config.robot_attached ? f_s - state.sensor_bias : 0.0;
  r.f_h.x() = f_h_x;
  if (noise_rng != nullptr && config.sensor_noise_std > 0.0) {
    // the robot-side sensor only exists when the robot is attached
    if (config.robot_attached) {
      for (int c = 0; c < 3; ++c) r.f_r(c) += noise_rng->normal(0.0, config.sensor_noise_std);
    }
    for (int c = 0; c < 3; ++c) r.f_h(c) += noise_rng->normal(0.0, config.sensor_noise_std);
  }
  return r;
}

void zero_sensor_bias(SimState& state, const SimConfig& config) {
  state.sensor_bias = spring_force(state, config);
}

double human_force(const HumanForcePolicy& policy, const SimState& state, double t) {
  const double err_x = policy.target_x(t) - state.box_x;
  const double err_v = policy.target_v(t) - state.box_v;
  const double f = policy.kp * err_x + policy.kd * err_v;
  return std::clamp(f, -policy.f_max, policy.f_max);
}

}  // namespace copush
