#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

#include "copush/rng.hpp"

namespace copush {

// Coulomb friction: a resting object holds until the net applied force
// exceeds the static peak mu_static * mass * gravity, then slides against a
// constant kinetic level.
struct FrictionModel {
  double mu_static = 0.227;
  double mu_kinetic = 0.9 * 0.227;
  double mass = 36.0;      // kg
  double gravity = 9.81;   // m/s^2

  static FrictionModel coulomb(double mu_s, double mass_kg) {
    return {mu_s, 0.9 * mu_s, mass_kg, 9.81};
  }
  double static_peak() const { return mu_static * mass * gravity; }
  double kinetic_level() const { return mu_kinetic * mass * gravity; }
};

struct SimConfig {
  double dt = 1e-3;               // s
  double spring_k = 2000.0;       // N/m, compliant-hand coupling
  double spring_c = 50.0;         // N*s/m
  double sensor_noise_std = 0.0;  // N
  double v_stick = 1e-4;          // m/s stiction capture threshold
  std::uint64_t seed = 0;
  bool robot_attached = true;     // false = robot (and spring) removed entirely
};

struct SimState {
  double box_x = 0.0;
  double box_v = 0.0;
  double robot_cmd_x = 0.0;       // commanded end-effector position
  double spring_deflection = 0.0; // robot_cmd_x - box_x, maintained by step
  double sensor_bias = 0.0;       // N, robot-side F/T zero offset
  double time = 0.0;
};

struct SensorReadings {
  Eigen::Vector3d f_r = Eigen::Vector3d::Zero();  // robot-side, bias and noise affected
  Eigen::Vector3d f_h = Eigen::Vector3d::Zero();  // human-side echo, evaluation only
  double box_x = 0.0;
  double box_v = 0.0;
  // friction reaction transmitted to the surface (= -friction force on the box)
  double friction_x = 0.0;
  bool slipping = false;
};

// Friction force applied to the box given its velocity and the net
// non-friction force. Sticking cancels the applied force exactly.
double friction_force(double box_v, double f_applied_net, const FrictionModel& model,
                      double v_stick);

// Advances one dt with semi-implicit Euler; sticking zeroes the velocity
// exactly. Pass a Rng to enable sensor noise draws.
SensorReadings step(SimState& state, double f_h_x, double robot_cmd_x, const SimConfig& config,
                    const FrictionModel& friction, Rng* noise_rng = nullptr);

// Spring coupling force currently applied to the box by the robot.
double spring_force(const SimState& state, const SimConfig& config);

// Re-zeroes the robot-side sensor: subsequent readings report 0 until the
// coupling force changes.
void zero_sensor_bias(SimState& state, const SimConfig& config);

// Simulated participant: PD tracking of a target box trajectory, clamped to
// +-f_max.
struct HumanForcePolicy {
  std::function<double(double)> target_x;  // t -> desired box position
  std::function<double(double)> target_v;  // t -> desired box velocity
  double kp = 3000.0;   // N/m
  double kd = 300.0;    // N*s/m
  double f_max = 120.0; // N
};

double human_force(const HumanForcePolicy& policy, const SimState& state, double t);

// Owns the noise stream and keeps the state/config pair together.
class Simulation {
 public:
  Simulation(SimConfig config, FrictionModel friction, SimState initial = {})
      : config_(config), friction_(friction), state_(initial), rng_(config.seed) {}

  SensorReadings step(double f_h_x, double robot_cmd_x) {
    return copush::step(state_, f_h_x, robot_cmd_x, config_, friction_,
                        config_.sensor_noise_std > 0.0 ? &rng_ : nullptr);
  }
  void zero_sensor_bias() { copush::zero_sensor_bias(state_, config_); }

  const SimState& state() const { return state_; }
  SimState& state() { return state_; }
  const SimConfig& config() const { return config_; }
  const FrictionModel& friction() const { return friction_; }

 private:
  SimConfig config_;
  FrictionModel friction_;
  SimState state_;
  Rng rng_;
};

}  // namespace copush
