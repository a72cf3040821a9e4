#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "copush/rng.hpp"
#include "copush/skeleton.hpp"

namespace copush {

enum class ActionKind { Push, Pull, IdleStand, IdleWave, IdleExercise };

inline bool is_motion_action(ActionKind k) {
  return k == ActionKind::Push || k == ActionKind::Pull;
}

struct ActionSegmentSpec {
  ActionKind kind = ActionKind::IdleStand;
  double duration = 1.0;        // s, total segment length
  double speed_scale = 1.0;     // 0.5 .. 2.0
  double amplitude_scale = 1.0;
  double distance = 0.0;        // m; 0 = derive from speed_scale (push/pull only)
};

struct SynthConfig {
  std::uint64_t seed = 1;
  double noise_std = 0.005;       // m, per-joint position noise (pelvis exempt)
  double frame_rate = 100.0;      // Hz
  double lean_angle_max = 0.25;   // rad
  double arm_reach = 0.62;        // m
  std::array<double, 3> target_label_mix = {0.645, 0.180, 0.175};  // idle, pull, push
  double participant_scale = 1.0; // limb-length scale
  double v_dead = 0.005;          // m/s labeling deadband
};

// One planned box displacement: smooth trapezoidal velocity profile moving
// `distance` (signed) meters over `duration` seconds starting at `start`.
struct MotionPhase {
  double start = 0.0;
  double duration = 0.0;
  double x0 = 0.0;
  double distance = 0.0;
  IntentionClass kind = IntentionClass::Idle;
  double prep_lead = 0.45;   // s before start at which the posture cue reaches half peak
  double peak_lean = 0.25;   // rad, unsigned
};

struct MotionPlan {
  std::vector<MotionPhase> phases;
  double x_start = 0.0;
  double position(double t) const;
  double velocity(double t) const;
};

struct LabeledSequence {
  std::vector<SkeletonFrame> frames;
  std::vector<double> box_positions;   // m
  std::vector<double> box_velocities;  // m/s
  std::vector<IntentionClass> labels;
  SynthConfig config;
  std::uint64_t script_hash = 0;
  MotionPlan plan;  // derived metadata, not serialized
};

std::uint64_t hash_script(const std::vector<ActionSegmentSpec>& script);

LabeledSequence generate_sequence(const SynthConfig& config,
                                  const std::vector<ActionSegmentSpec>& script);

std::vector<IntentionClass> label_frames(const std::vector<double>& velocities, double v_dead);

struct RecordingEntry {
  std::string path;  // relative to the manifest directory
  std::uint64_t seed = 0;
  std::size_t n_frames = 0;
  std::array<double, 3> mix = {0, 0, 0};  // idle, pull, push fractions
  int n_actions = 0;
};

struct DatasetManifest {
  std::vector<RecordingEntry> recordings;
  std::string split;  // "train" | "val"
};

struct DatasetBuildResult {
  DatasetManifest train;
  DatasetManifest val;
  std::array<double, 3> realized_mix = {0, 0, 0};  // idle, pull, push
  int n_actions = 0;
  std::string train_manifest_path;
  std::string val_manifest_path;
};

// Generates n_train + n_val recordings with randomized scripts, writes the
// sequence files plus per-split manifests under out_dir, and verifies that
// the realized label mix lands within +-3 points of the configured target.
DatasetBuildResult build_dataset(const SynthConfig& config, int n_train_recordings,
                                 int n_val_recordings, const std::string& out_dir);

}  // namespace copush
