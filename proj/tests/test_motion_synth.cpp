#include <doctest.h>

#include <filesystem>
#include <set>

#include "copush/error.hpp"
#include "copush/motion_synth.hpp"
#include "copush/sequence_io.hpp"

using namespace copush;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / "copush_tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("idle-only script moves nothing") {
  SynthConfig cfg;
  cfg.seed = 4;
  const auto seq = generate_sequence(cfg, {{ActionKind::IdleStand, 2.0, 1.0, 1.0, 0.0}});
  CHECK(seq.frames.size() == 200);
  for (const auto label : seq.labels) CHECK(label == IntentionClass::Idle);
  for (const double v : seq.box_velocities) CHECK(v == 0.0);
  for (const double x : seq.box_positions) CHECK(x == 0.0);
}

TEST_CASE("push script moves the box toward -x with push labels") {
  SynthConfig cfg;
  cfg.seed = 9;
  const auto seq = generate_sequence(cfg, {{ActionKind::Push, 3.0, 1.0, 1.0, 0.0}});
  CHECK(seq.frames.size() == 300);
  CHECK(seq.box_positions.back() < 0.0);
  int pushes = 0;
  for (const auto label : seq.labels) {
    CHECK(label != IntentionClass::Pull);
    if (label == IntentionClass::Push) ++pushes;
  }
  CHECK(pushes > 50);
}

TEST_CASE("generation is deterministic in the seed") {
  SynthConfig cfg;
  cfg.seed = 1234;
  const std::vector<ActionSegmentSpec> script = {{ActionKind::IdleWave, 1.5, 1.0, 1.0, 0.0},
                                                 {ActionKind::Pull, 2.0, 1.2, 1.0, 0.0},
                                                 {ActionKind::IdleStand, 2.0, 1.0, 1.0, 0.0}};
  const auto a = generate_sequence(cfg, script);
  const auto b = generate_sequence(cfg, script);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].joint_positions == b.frames[i].joint_positions);
  }
  CHECK(a.box_positions == b.box_positions);
  CHECK(a.labels == b.labels);
  CHECK(a.script_hash == b.script_hash);
}

TEST_CASE("label_frames applies the velocity deadband") {
  CHECK(label_frames({0.0, 0.0}, 0.005) ==
        std::vector<IntentionClass>{IntentionClass::Idle, IntentionClass::Idle});
  CHECK(label_frames({-0.05}, 0.005) == std::vector<IntentionClass>{IntentionClass::Push});
  CHECK(label_frames({0.004}, 0.005) == std::vector<IntentionClass>{IntentionClass::Idle});
  CHECK(label_frames({0.05}, 0.005) == std::vector<IntentionClass>{IntentionClass::Pull});
  CHECK_THROWS_AS(label_frames({0.0}, 0.0), ValidationError);
}

TEST_CASE("script validation") {
  SynthConfig cfg;
  CHECK_THROWS_AS(generate_sequence(cfg, {}), ValidationError);
  CHECK_THROWS_AS(generate_sequence(cfg, {{ActionKind::IdleStand, -1.0, 1.0, 1.0, 0.0}}),
                  ValidationError);
  CHECK_THROWS_AS(generate_sequence(cfg, {{ActionKind::Push, 0.6, 1.0, 1.0, 0.0}}),
                  ValidationError);
}

TEST_CASE("labels recompute exactly from stored velocities") {
  SynthConfig cfg;
  cfg.seed = 21;
  const auto seq = generate_sequence(cfg, {{ActionKind::IdleStand, 2.0, 1.0, 1.0, 0.0},
                                           {ActionKind::Push, 2.2, 1.0, 1.0, 0.0},
                                           {ActionKind::IdleExercise, 2.0, 1.0, 1.0, 0.0},
                                           {ActionKind::Pull, 1.8, 0.8, 1.0, 0.0}});
  CHECK(label_frames(seq.box_velocities, cfg.v_dead) == seq.labels);
}

TEST_CASE("grasping hand stays on the box handle during motion") {
  SynthConfig cfg;
  cfg.seed = 33;
  const auto seq = generate_sequence(cfg, {{ActionKind::IdleStand, 2.0, 1.0, 1.0, 0.0},
                                           {ActionKind::Pull, 2.5, 1.0, 1.0, 0.0},
                                           {ActionKind::IdleStand, 1.5, 1.0, 1.0, 0.0}});
  int checked = 0;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    if (std::abs(seq.box_velocities[i]) <= cfg.v_dead) continue;
    const Eigen::Vector3d hand =
        seq.frames[i].joint_positions.row(joints::kRightHand).transpose();
    const Eigen::Vector3d handle(seq.box_positions[i] + 0.35, -0.12, 0.80);
    CHECK((hand - handle).norm() <= 3.0 * cfg.noise_std * std::sqrt(3.0));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("preparatory lean precedes motion by at least 0.3 s") {
  SynthConfig cfg;
  cfg.seed = 77;
  cfg.noise_std = 0.0;  // property of the deterministic kinematics
  const auto seq = generate_sequence(cfg, {{ActionKind::IdleStand, 2.5, 1.0, 1.0, 0.0},
                                           {ActionKind::Push, 2.2, 1.0, 1.0, 0.0},
                                           {ActionKind::IdleStand, 2.5, 1.0, 1.0, 0.0},
                                           {ActionKind::Pull, 2.0, 1.3, 1.0, 0.0},
                                           {ActionKind::IdleStand, 2.0, 1.0, 1.0, 0.0}});
  REQUIRE(seq.plan.phases.size() == 2);
  const double dt = 1.0 / cfg.frame_rate;
  for (const auto& phase : seq.plan.phases) {
    // torso lean measured as the chest x-offset from the pelvis
    auto lean = [&](std::size_t i) {
      return std::abs(seq.frames[i].joint_positions(joints::kChest, 0) -
                      seq.frames[i].joint_positions(joints::kPelvis, 0));
    };
    std::size_t onset = seq.frames.size();
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      if (std::abs(seq.box_velocities[i]) > cfg.v_dead) {
        if (seq.frames[i].timestamp >= phase.start - 0.1) {
          onset = i;
          break;
        }
      }
    }
    REQUIRE(onset < seq.frames.size());
    double peak = 0.0;
    const auto window_start =
        static_cast<std::size_t>(std::max(0.0, (phase.start - 1.5) / dt));
    for (std::size_t i = window_start; i < onset; ++i) peak = std::max(peak, lean(i));
    std::size_t half_idx = onset;
    for (std::size_t i = window_start; i < onset; ++i) {
      if (lean(i) >= 0.5 * peak) {
        half_idx = i;
        break;
      }
    }
    REQUIRE(half_idx < onset);
    CHECK(seq.frames[onset].timestamp - seq.frames[half_idx].timestamp >= 0.3);
  }
}

TEST_CASE("build_dataset hits the target mix with disjoint seeds") {
  SynthConfig cfg;
  cfg.seed = 51;
  const std::string dir = temp_dir("ds_mix");
  const auto result = build_dataset(cfg, 4, 2, dir);
  CHECK(result.train.recordings.size() == 4);
  CHECK(result.val.recordings.size() == 2);
  CHECK(result.train.split == "train");
  CHECK(result.val.split == "val");
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(result.realized_mix[c] - cfg.target_label_mix[c]) <= 0.03);
  }
  std::set<std::uint64_t> seeds;
  for (const auto& r : result.train.recordings) seeds.insert(r.seed);
  for (const auto& r : result.val.recordings) seeds.insert(r.seed);
  CHECK(seeds.size() == 6);
  CHECK(result.n_actions == 6 * 9);

  SUBCASE("deterministic rebuild is byte-identical") {
    const std::string dir2 = temp_dir("ds_mix2");
    build_dataset(cfg, 4, 2, dir2);
    CHECK(fnv1a_file(dir + "/manifest_train.json") == fnv1a_file(dir2 + "/manifest_train.json"));
    CHECK(fnv1a_file(dir + "/recordings/rec_000.jsonl") ==
          fnv1a_file(dir2 + "/recordings/rec_000.jsonl"));
    CHECK(fnv1a_file(dir + "/recordings/rec_005.jsonl") ==
          fnv1a_file(dir2 + "/recordings/rec_005.jsonl"));
  }
}

TEST_CASE("build_dataset rejects bad split sizes") {
  SynthConfig cfg;
  CHECK_THROWS_AS(build_dataset(cfg, 0, 2, temp_dir("ds_bad")), ValidationError);
  CHECK_THROWS_AS(build_dataset(cfg, 2, 0, temp_dir("ds_bad2")), ValidationError);
}
