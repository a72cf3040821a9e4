#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "copush/controller.hpp"
#include "copush/error.hpp"
#include "copush/rng.hpp"

using namespace copush;

namespace {

Eigen::Vector3d one_hot(IntentionClass c) {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  v(class_index(c)) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("intention filter averages the last 15 outputs") {
  IntentionFilterState state;

  SUBCASE("constant stream") {
    for (int i = 0; i < 15; ++i) {
      CHECK(filter_intention(state, one_hot(IntentionClass::Idle)) == IntentionClass::Idle);
    }
    CHECK(state.buffer.size() == 15);
  }

  SUBCASE("step response flips at the 8th new sample") {
    for (int i = 0; i < 15; ++i) filter_intention(state, one_hot(IntentionClass::Pull));
    CHECK(state.current == IntentionClass::Pull);
    int flip_at = -1;
    for (int i = 1; i <= 15; ++i) {
      const auto c = filter_intention(state, one_hot(IntentionClass::Push));
      if (c == IntentionClass::Push && flip_at < 0) flip_at = i;
    }
    CHECK(flip_at == 8);
  }

  SUBCASE("alternating inputs do not chatter") {
    // two logit patterns whose running average keeps a strict argmax
    const Eigen::Vector3d a(1.0, 0.2, 0.0);
    const Eigen::Vector3d b(0.4, 0.9, 0.0);
    const IntentionClass first = filter_intention(state, a);
    for (int i = 0; i < 40; ++i) {
      const auto c = filter_intention(state, i % 2 == 0 ? b : a);
      CHECK(c == first);
    }
  }

  SUBCASE("identical streams give identical outputs") {
    IntentionFilterState s1, s2;
    Eigen::Vector3d logits(0.2, -0.4, 1.1);
    for (int i = 0; i < 30; ++i) {
      logits = Eigen::Vector3d(std::sin(i * 0.7), std::cos(i * 0.3), std::sin(i * 1.1));
      CHECK(filter_intention(s1, logits) == filter_intention(s2, logits));
    }
  }

  SUBCASE("non-finite logits rejected") {
    CHECK_THROWS_AS(
        filter_intention(state, Eigen::Vector3d(0.0, std::nan(""), 0.0)),
        ValidationError);
  }
}

TEST_CASE("assist target ramps linearly over the transition") {
  AssistConfig cfg;
  cfg.f_com = 65.0;
  ControllerState ctrl;

  SUBCASE("idle to push reaches -f_com after exactly 1 s") {
    assist_target(ctrl, IntentionClass::Push, 0.0, cfg);
    CHECK(ctrl.f_d.x() == 0.0);
    assist_target(ctrl, IntentionClass::Push, 0.25, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(-65.0 * 0.25));
    assist_target(ctrl, IntentionClass::Push, 1.0, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(-65.0));
    assist_target(ctrl, IntentionClass::Push, 2.0, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(-65.0));
    CHECK(ctrl.f_d.y() == 0.0);
    CHECK(ctrl.f_d.z() == 0.0);
  }

  SUBCASE("no change leaves the target in place") {
    assist_target(ctrl, IntentionClass::Pull, 0.0, cfg);
    assist_target(ctrl, IntentionClass::Pull, 5.0, cfg);
    const double held = ctrl.f_d.x();
    assist_target(ctrl, IntentionClass::Pull, 6.0, cfg);
    CHECK(ctrl.f_d.x() == held);
  }

  SUBCASE("mid-ramp reversal restarts from the instantaneous value") {
    assist_target(ctrl, IntentionClass::Push, 0.0, cfg);
    assist_target(ctrl, IntentionClass::Push, 0.5, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(-32.5));
    assist_target(ctrl, IntentionClass::Pull, 0.5, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(-32.5));
    assist_target(ctrl, IntentionClass::Pull, 1.0, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(-32.5 + (65.0 + 32.5) * 0.5));
    assist_target(ctrl, IntentionClass::Pull, 1.5, cfg);
    CHECK(ctrl.f_d.x() == doctest::Approx(65.0));
  }

  SUBCASE("magnitude never exceeds f_com") {
    Rng rng(8);
    ControllerState c;
    double t = 0.0;
    for (int i = 0; i < 2000; ++i) {
      t += 0.01;
      const auto intent = static_cast<IntentionClass>(static_cast<int>(rng.integer(3)) - 1);
      assist_target(c, intent, t, cfg);
      CHECK(std::abs(c.f_d.x()) <= cfg.f_com + 1e-12);
    }
  }
}

TEST_CASE("force control is a clamped proportional law") {
  CHECK(force_control(10.0, 10.0, 5e-5) == 0.0);
  // proportional arithmetic, rail out of the way
  CHECK(force_control(-65.0, 0.0, 5e-5, 0.01) == doctest::Approx(-3.25e-3));
  CHECK(force_control(1000.0, 0.0, 5e-5, 0.002) == 0.002);   // 5 cm demand, clamped
  CHECK(force_control(-1000.0, 0.0, 5e-5, 0.002) == -0.002);
}

TEST_CASE("f_d is piecewise linear with bounded slope in closed loop") {
  AssistConfig cfg;
  cfg.f_com = 80.0;
  ControlLoop loop(cfg);
  SimConfig sim_cfg;
  sim_cfg.sensor_noise_std = 0.0;
  const FrictionModel m = FrictionModel::coulomb(0.227, 36.0);
  Simulation sim(sim_cfg, m);

  // a reversal ramps across 2*f_com within one transition
  double prev_fd = 0.0;
  const double max_step = 2.0 * cfg.f_com / cfg.transition_duration * 0.0101;
  for (int i = 0; i < 400; ++i) {
    const double t = i * 0.01;
    const auto intent = i < 150   ? IntentionClass::Idle
                        : i < 300 ? IntentionClass::Push
                                  : IntentionClass::Pull;
    loop.tick(t, one_hot(intent), 0.0, sim.state(), sim_cfg);
    const double fd = loop.controller().f_d.x();
    CHECK(std::abs(fd - prev_fd) <= max_step);
    CHECK(std::abs(fd) <= cfg.f_com + 1e-12);
    prev_fd = fd;
  }
}

TEST_CASE("idle stop re-zeroes the sensor once and only when idle") {
  AssistConfig cfg;
  cfg.f_com = 50.0;
  SimConfig sim_cfg;
  sim_cfg.sensor_noise_std = 0.0;
  const FrictionModel m = FrictionModel::coulomb(0.5, 200.0);
  Simulation sim(sim_cfg, m);

  // preload the spring so there is a bias to capture
  double cmd = 10.0 / sim_cfg.spring_k;
  for (int i = 0; i < 200; ++i) sim.step(0.0, cmd);
  CHECK(spring_force(sim.state(), sim_cfg) == doctest::Approx(10.0));

  ControlLoop loop(cfg);
  loop.controller().robot_cmd_x = cmd;

  SUBCASE("push intention never triggers the reset") {
    for (int i = 0; i < 300; ++i) {
      loop.tick(i * 0.01, one_hot(IntentionClass::Push), 10.0, sim.state(), sim_cfg);
    }
    CHECK(sim.state().sensor_bias == 0.0);
  }

  SUBCASE("idle triggers it after the ramp completes") {
    for (int i = 0; i < 150; ++i) {
      loop.tick(i * 0.01, one_hot(IntentionClass::Idle), 10.0, sim.state(), sim_cfg);
    }
    CHECK(sim.state().sensor_bias == doctest::Approx(10.0));
    CHECK(loop.controller().idle_settled);
  }
}

TEST_CASE("stale intentions hold the last command after 50 ms") {
  AssistConfig cfg;
  cfg.f_com = 80.0;
  ControlLoop loop(cfg);
  SimConfig sim_cfg;
  sim_cfg.sensor_noise_std = 0.0;
  const FrictionModel m = FrictionModel::coulomb(0.227, 36.0);
  Simulation sim(sim_cfg, m);

  loop.tick(0.0, one_hot(IntentionClass::Push), 0.0, sim.state(), sim_cfg);
  double cmd_before = 0.0;
  for (int i = 1; i <= 10; ++i) {
    const double u = loop.tick(i * 0.01, std::nullopt, 0.0, sim.state(), sim_cfg);
    if (i * 0.01 <= 0.05) {
      CHECK(u != 0.0);  // still acting on the last intention
      cmd_before = loop.controller().robot_cmd_x;
    } else {
      CHECK(u == 0.0);  // stale: hold
      CHECK(loop.controller().robot_cmd_x == cmd_before);
    }
  }
}

TEST_CASE("closed-loop force error decreases monotonically while stuck") {
  AssistConfig cfg;
  cfg.f_com = 60.0;  // below the 80.2 N static peak: the box never moves
  ControlLoop loop(cfg);
  SimConfig sim_cfg;
  sim_cfg.sensor_noise_std = 0.0;
  const FrictionModel m = FrictionModel::coulomb(0.227, 36.0);
  Simulation sim(sim_cfg, m);

  double f_r = 0.0;
  double prev_err = 1e9;
  for (int i = 0; i < 600; ++i) {
    const double t = i * 0.01;
    loop.tick(t, one_hot(IntentionClass::Push), f_r, sim.state(), sim_cfg);
    SensorReadings r;
    for (int s = 0; s < 10; ++s) r = sim.step(0.0, loop.controller().robot_cmd_x);
    f_r = r.f_r.x();
    CHECK(sim.state().box_v == 0.0);
    if (t > 1.05) {  // ramp finished: pure proportional loop on the spring
      const double err = std::abs(loop.controller().f_d.x() - f_r);
      CHECK(err <= prev_err + 1e-12);
      prev_err = err;
    }
  }
  CHECK(prev_err < 0.5);
}

TEST_CASE("object exploration recovers the Table-calibrated forces") {
  AssistConfig cfg;
  SimConfig sim_cfg;
  sim_cfg.sensor_noise_std = 0.2;
  sim_cfg.seed = 7;

  SUBCASE("36 kg scenario") {
    const double f = explore_object(sim_cfg, FrictionModel::coulomb(0.2265, 36.0), cfg);
    CHECK(f >= 78.0);
    CHECK(f <= 82.0);
  }

  SUBCASE("27.7 kg scenario") {
    const double f = explore_object(sim_cfg, FrictionModel::coulomb(0.239, 27.7), cfg);
    CHECK(f >= 64.0);
    CHECK(f <= 66.0);
  }

  SUBCASE("frictionless object moves at the first step") {
    CHECK_THROWS_AS(explore_object(sim_cfg, FrictionModel::coulomb(0.0, 36.0), cfg),
                    ValidationError);
  }

  SUBCASE("immovable object errors at the cap") {
    CHECK_THROWS_AS(explore_object(sim_cfg, FrictionModel::coulomb(3.0, 36.0), cfg),
                    ValidationError);
  }
}

TEST_CASE("controller config io requires every field") {
  const std::string dir = std::filesystem::temp_directory_path().string();
  const std::string good = dir + "/copush_assist_good.json";
  AssistConfig cfg;
  cfg.f_com = 42.0;
  save_assist_config(good, cfg);
  const AssistConfig loaded = load_assist_config(good);
  CHECK(loaded.f_com == 42.0);
  CHECK(loaded.force_gain == cfg.force_gain);
  CHECK(loaded.filter_length == cfg.filter_length);

  const std::string bad = dir + "/copush_assist_bad.json";
  std::ofstream(bad) << R"({"f_com": 1.0, "K_f": 5e-5, "transition_s": 1.0, "control_hz": 100, "u_max": 0.002})";
  CHECK_THROWS_AS(load_assist_config(bad), ValidationError);  // filter_len missing
}
