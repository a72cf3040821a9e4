#include "copush/motion_synth.hpp"

#include <algorithm>
#include <cmath>

#include "copush/error.hpp"
#include "copush/sequence_io.hpp"

namespace copush {

namespace {

constexpr double kRampFraction = 0.25;   // accel/decel fraction of a motion phase
constexpr double kCueRampWidth = 0.30;   // s, rise time of the preparatory lean
constexpr double kPrepSettle = 0.15;     // s between full cue and motion onset
constexpr double kMinActionDuration = 1.0;
constexpr double kBaseSpeed = 0.16;      // m/s average box speed at speed_scale 1
constexpr double kStandoff = 0.50;       // m, pelvis distance behind the box center
constexpr double kHandleOffsetX = 0.35;  // m, handle position from box center (human side)
constexpr double kHandleY = -0.12;
constexpr double kHandleZ = 0.80;

double smoothstep01(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// integral of smoothstep01 over [0, u]
double smoothstep01_integral(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u - 0.5 * u * u * u * u;
}

// ramp from 0 to 1 centered at `mid`, `width` seconds wide
double cue_ramp(double t, double mid, double width) {
  return smoothstep01((t - (mid - 0.5 * width)) / width);
}

}  // namespace

double MotionPlan::position(double t) const {
  double x = x_start;
  for (const auto& p : phases) {
    if (t <= p.start) break;
    const double a = kRampFraction;
    const double vc = p.distance / (p.duration * (1.0 - a));
    const double tau = std::min((t - p.start) / p.duration, 1.0);
    double disp;
    if (tau < a) {
      disp = vc * a * p.duration * smoothstep01_integral(tau / a);
    } else if (tau <= 1.0 - a) {
      disp = vc * a * p.duration * 0.5 + vc * p.duration * (tau - a);
    } else {
      disp = p.distance - vc * a * p.duration * smoothstep01_integral((1.0 - tau) / a);
    }
    x += disp;
  }
  return x;
}

double MotionPlan::velocity(double t) const {
  for (const auto& p : phases) {
    if (t <= p.start || t >= p.start + p.duration) continue;
    const double a = kRampFraction;
    const double vc = p.distance / (p.duration * (1.0 - a));
    const double tau = (t - p.start) / p.duration;
    if (tau < a) return vc * smoothstep01(tau / a);
    if (tau <= 1.0 - a) return vc;
    return vc * smoothstep01((1.0 - tau) / a);
  }
  return 0.0;
}

std::uint64_t hash_script(const std::vector<ActionSegmentSpec>& script) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& s : script) {
    mix(static_cast<std::uint64_t>(s.kind));
    std::uint64_t bits;
    static_assert(sizeof(double) == 8);
    std::memcpy(&bits, &s.duration, 8); mix(bits);
    std::memcpy(&bits, &s.speed_scale, 8); mix(bits);
    std::memcpy(&bits, &s.amplitude_scale, 8); mix(bits);
    std::memcpy(&bits, &s.distance, 8); mix(bits);
  }
  return h;
}

std::vector<IntentionClass> label_frames(const std::vector<double>& velocities, double v_dead) {
  if (v_dead <= 0.0) throw ValidationError("label_frames: v_dead must be positive");
  std::vector<IntentionClass> labels(velocities.size());
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    const double v = velocities[i];
    if (!std::isfinite(v)) throw ValidationError("label_frames: non-finite velocity");
    if (v < -v_dead) {
      labels[i] = IntentionClass::Push;
    } else if (v > v_dead) {
      labels[i] = IntentionClass::Pull;
    } else {
      labels[i] = IntentionClass::Idle;
    }
  }
  return labels;
}

namespace {

// Rest-pose joint offsets relative to the pelvis, meters, before limb scaling.
// x points along the push/pull line (human stands at +x of the box, facing -x),
// z is up.
Eigen::Matrix<double, 17, 3> rest_offsets() {
  Eigen::Matrix<double, 17, 3> r;
  using namespace joints;
  r.setZero();
  r.row(kSpine) << 0.00, 0.00, 0.14;
  r.row(kChest) << 0.00, 0.00, 0.30;
  r.row(kNeck) << 0.00, 0.00, 0.46;
  r.row(kHead) << 0.00, 0.00, 0.60;
  r.row(kLeftShoulder) << 0.00, 0.19, 0.42;
  r.row(kLeftElbow) << 0.00, 0.24, 0.16;
  r.row(kLeftHand) << 0.00, 0.25, -0.06;
  r.row(kRightShoulder) << 0.00, -0.19, 0.42;
  r.row(kRightElbow) << 0.00, -0.24, 0.16;
  r.row(kRightHand) << 0.00, -0.25, -0.06;
  r.row(kLeftHip) << 0.00, 0.10, -0.05;
  r.row(kLeftKnee) << 0.00, 0.11, -0.48;
  r.row(kLeftAnkle) << 0.00, 0.12, -0.90;
  r.row(kRightHip) << 0.00, -0.10, -0.05;
  r.row(kRightKnee) << 0.00, -0.11, -0.48;
  r.row(kRightAnkle) << 0.00, -0.12, -0.90;
  return r;
}

struct SegmentTimeline {
  ActionKind kind;
  double start, end;
  double speed_scale, amplitude_scale;
  double idle_phase;  // wave/exercise phase offset
};

struct ActionDraw {
  double lead;       // s, half-peak of the cue before motion onset
  double peak_lean;  // rad
  double motion_start, motion_duration, distance;
};

}  // namespace

LabeledSequence generate_sequence(const SynthConfig& config,
                                  const std::vector<ActionSegmentSpec>& script) {
  if (script.empty()) throw ValidationError("generate_sequence: empty script");
  for (const auto& s : script) {
    if (s.duration <= 0.0) throw ValidationError("generate_sequence: non-positive duration");
    if (s.speed_scale <= 0.0 || s.amplitude_scale <= 0.0) {
      throw ValidationError("generate_sequence: non-positive scale");
    }
    if (is_motion_action(s.kind) && s.duration < kMinActionDuration) {
      throw ValidationError("generate_sequence: push/pull segment shorter than 1 s");
    }
  }
  if (config.noise_std < 0.0) throw ValidationError("generate_sequence: negative noise_std");

  Rng rng(config.seed);
  const double dt = 1.0 / config.frame_rate;
  const double scale = config.participant_scale;

  // segment layout
  std::vector<SegmentTimeline> segments;
  segments.reserve(script.size());
  double t0 = 0.0;
  for (const auto& s : script) {
    segments.push_back({s.kind, t0, t0 + s.duration, s.speed_scale, s.amplitude_scale,
                        rng.uniform(0.0, 6.283185307179586)});
    t0 += s.duration;
  }
  const double total_duration = t0;

  // per-action draws and motion plan; the preparatory cue lives inside the
  // action segment, motion fills the remainder
  MotionPlan plan;
  std::vector<ActionDraw> draws;
  double box_x = 0.0;
  for (std::size_t i = 0; i < script.size(); ++i) {
    const auto& s = script[i];
    if (!is_motion_action(s.kind)) continue;
    ActionDraw d;
    d.lead = rng.uniform(0.33, 0.60);
    d.lead = std::min(d.lead, s.duration - 0.55);
    d.peak_lean = config.lean_angle_max * s.amplitude_scale * rng.uniform(0.85, 1.0);
    d.motion_start = segments[i].start + d.lead + kPrepSettle;
    d.motion_duration = segments[i].end - d.motion_start;
    const double mag = s.distance > 0.0 ? s.distance : kBaseSpeed * s.speed_scale * d.motion_duration;
    const double dir = motion_sign(s.kind == ActionKind::Push ? IntentionClass::Push
                                                              : IntentionClass::Pull);
    d.distance = dir * mag;

    MotionPhase phase;
    phase.start = d.motion_start;
    phase.duration = d.motion_duration;
    phase.x0 = box_x;
    phase.distance = d.distance;
    phase.kind = s.kind == ActionKind::Push ? IntentionClass::Push : IntentionClass::Pull;
    phase.prep_lead = d.lead;
    phase.peak_lean = d.peak_lean;
    plan.phases.push_back(phase);
    draws.push_back(d);
    box_x += d.distance;
  }

  const auto n_frames = static_cast<std::size_t>(std::llround(total_duration * config.frame_rate));
  const Eigen::Matrix<double, 17, 3> rest = rest_offsets();
  const double pelvis_z = 0.95 * scale;

  LabeledSequence seq;
  seq.config = config;
  seq.script_hash = hash_script(script);
  seq.plan = plan;
  seq.frames.reserve(n_frames);
  seq.box_positions.reserve(n_frames);
  seq.box_velocities.reserve(n_frames);

  std::size_t seg_idx = 0;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double t = static_cast<double>(i) * dt;
    while (seg_idx + 1 < segments.size() && t >= segments[seg_idx].end) ++seg_idx;
    const SegmentTimeline& seg = segments[seg_idx];

    const double planned_x = plan.position(t);
    const double planned_v = plan.velocity(t);

    // lean angle: sum of per-action cues (rise before onset, fall near the end)
    double lean = 0.0;
    double grasp = 0.0;
    for (const auto& p : plan.phases) {
      const double rise = cue_ramp(t, p.start - p.prep_lead, kCueRampWidth);
      const double fall = 1.0 - cue_ramp(t, p.start + p.duration - 0.28, kCueRampWidth);
      const double dir = motion_sign(p.kind);
      lean += dir * p.peak_lean * rise * fall;
      const double g_rise = cue_ramp(t, p.start - p.prep_lead, kCueRampWidth);
      const double g_fall = 1.0 - cue_ramp(t, p.start + p.duration + 0.25, 0.4);
      grasp = std::max(grasp, g_rise * g_fall);
    }

    // idle-variant decoration
    double sway = 0.0, squat = 0.0;
    Eigen::Vector3d wave_offset = Eigen::Vector3d::Zero();
    double exercise_swing = 0.0;
    const double ts = t - seg.start;
    if (seg.kind == ActionKind::IdleStand) {
      sway = 0.015 * std::sin(2.0 * 3.141592653589793 * 0.3 * ts + seg.idle_phase);
    } else if (seg.kind == ActionKind::IdleWave) {
      const double w = 2.0 * 3.141592653589793 * 1.1 * ts + seg.idle_phase;
      wave_offset = seg.amplitude_scale * Eigen::Vector3d(0.0, 0.16 * std::sin(w),
                                                          0.40 + 0.12 * std::cos(w));
    } else if (seg.kind == ActionKind::IdleExercise) {
      const double w = 2.0 * 3.141592653589793 * 0.7 * ts + seg.idle_phase;
      squat = 0.06 * scale * 0.5 * (1.0 - std::cos(w));
      exercise_swing = 0.18 * seg.amplitude_scale * std::sin(w);
    }

    const double theta = lean + sway;
    const double sin_t = std::sin(theta), cos_t = std::cos(theta);

    Eigen::Vector3d pelvis(planned_x + kStandoff * scale, 0.0, pelvis_z - squat);

    SkeletonFrame frame;
    frame.timestamp = t;
    frame.joint_positions.resize(17, 3);
    for (int j = 0; j < 17; ++j) {
      Eigen::Vector3d off = rest.row(j).transpose() * scale;
      const bool is_leg = j >= joints::kLeftHip;
      if (!is_leg && j != joints::kPelvis) {
        // rotate the upper body about the pelvis y-axis
        const double x = off.x(), z = off.z();
        off.x() = x * cos_t + z * sin_t;
        off.z() = -x * sin_t + z * cos_t;
      }
      frame.joint_positions.row(j) = (pelvis + off).transpose();
    }
    if (seg.kind == ActionKind::IdleWave) {
      frame.joint_positions.row(joints::kLeftHand) =
          (pelvis + rest.row(joints::kLeftShoulder).transpose() * scale + wave_offset).transpose();
      frame.joint_positions.row(joints::kLeftElbow) =
          0.5 * (frame.joint_positions.row(joints::kLeftShoulder) +
                 frame.joint_positions.row(joints::kLeftHand)) +
          Eigen::RowVector3d(0.0, 0.06, -0.05);
    } else if (seg.kind == ActionKind::IdleExercise) {
      for (int hand : {joints::kLeftHand, joints::kRightHand}) {
        frame.joint_positions(hand, 0) += exercise_swing;
        frame.joint_positions(hand, 2) += 0.10 * std::abs(exercise_swing);
      }
      for (int elbow : {joints::kLeftElbow, joints::kRightElbow}) {
        frame.joint_positions(elbow, 0) += 0.5 * exercise_swing;
      }
    }

    // grasping arm tracks the box handle
    if (grasp > 0.0) {
      const Eigen::Vector3d handle(planned_x + kHandleOffsetX, kHandleY, kHandleZ);
      const Eigen::Vector3d rest_hand = frame.joint_positions.row(joints::kRightHand).transpose();
      const Eigen::Vector3d hand = (1.0 - grasp) * rest_hand + grasp * handle;
      frame.joint_positions.row(joints::kRightHand) = hand.transpose();
      const Eigen::Vector3d shoulder =
          frame.joint_positions.row(joints::kRightShoulder).transpose();
      frame.joint_positions.row(joints::kRightElbow) =
          (0.5 * (shoulder + hand) + Eigen::Vector3d(0.0, -0.05 * scale, -0.10 * scale))
              .transpose();
    }

    // measurement noise on every joint except the pelvis anchor
    if (config.noise_std > 0.0) {
      for (int j = 0; j < 17; ++j) {
        if (j == joints::kPelvis) continue;
        for (int c = 0; c < 3; ++c) {
          frame.joint_positions(j, c) += rng.normal(0.0, config.noise_std);
        }
      }
    }

    seq.frames.push_back(std::move(frame));
    seq.box_positions.push_back(planned_x);
    seq.box_velocities.push_back(planned_v);
  }

  seq.labels = label_frames(seq.box_velocities, config.v_dead);
  return seq;
}

namespace {

std::vector<ActionSegmentSpec> make_recording_script(Rng& rng,
                                                     const std::array<double, 3>& target_mix,
                                                     int n_actions, bool start_pull) {
  std::vector<double> action_durations(n_actions);
  std::vector<ActionKind> action_kinds(n_actions);
  double planned_x = 0.0;
  bool next_pull = start_pull;
  double motion_labeled = 0.0;
  std::vector<double> speeds(n_actions);
  for (int k = 0; k < n_actions; ++k) {
    action_durations[k] = rng.uniform(1.55, 2.55);
    speeds[k] = rng.uniform(0.7, 1.5);
    ActionKind kind = next_pull ? ActionKind::Pull : ActionKind::Push;
    if (planned_x > 0.25) kind = ActionKind::Push;
    if (planned_x < -0.25) kind = ActionKind::Pull;
    action_kinds[k] = kind;
    next_pull = kind == ActionKind::Push;
    const double motion = action_durations[k] - 0.615;  // expected lead + settle
    planned_x += motion_sign(kind == ActionKind::Push ? IntentionClass::Push
                                                      : IntentionClass::Pull) *
                 kBaseSpeed * speeds[k] * motion;
    motion_labeled += 0.96 * motion;
  }

  // idle time sized so the realized label mix lands on target
  const double idle_fraction = target_mix[0];
  const double total_needed = motion_labeled / std::max(1.0 - idle_fraction, 0.05);
  double action_time = 0.0;
  for (double d : action_durations) action_time += d;
  const double idle_total = std::max(total_needed - action_time, 1.2 * (n_actions + 1));

  std::vector<double> weights(n_actions + 1);
  double wsum = 0.0;
  for (auto& w : weights) {
    w = rng.uniform(0.7, 1.3);
    wsum += w;
  }

  std::vector<ActionSegmentSpec> script;
  for (int k = 0; k <= n_actions; ++k) {
    ActionSegmentSpec idle;
    const double u = rng.uniform();
    idle.kind = u < 0.5 ? ActionKind::IdleStand
                        : (u < 0.75 ? ActionKind::IdleWave : ActionKind::IdleExercise);
    idle.duration = std::max(1.2, idle_total * weights[k] / wsum);
    script.push_back(idle);
    if (k < n_actions) {
      ActionSegmentSpec act;
      act.kind = action_kinds[k];
      act.duration = action_durations[k];
      act.speed_scale = speeds[k];
      act.amplitude_scale = rng.uniform(0.9, 1.1);
      script.push_back(act);
    }
  }
  return script;
}

}  // namespace

DatasetBuildResult build_dataset(const SynthConfig& config, int n_train_recordings,
                                 int n_val_recordings, const std::string& out_dir) {
  if (n_train_recordings < 1 || n_val_recordings < 1) {
    throw ValidationError("build_dataset: recording counts must be >= 1");
  }
  const int total = n_train_recordings + n_val_recordings;
  constexpr int kActionsPerRecording = 9;
  constexpr int kMaxAttempts = 20;

  std::array<double, 3> realized = {0, 0, 0};
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<LabeledSequence> sequences;
    std::vector<std::uint64_t> seeds;
    sequences.reserve(total);
    std::array<std::size_t, 3> counts = {0, 0, 0};  // idle, pull, push
    int n_actions = 0;

    for (int r = 0; r < total; ++r) {
      const std::uint64_t rec_seed =
          derive_seed(config.seed, static_cast<std::uint64_t>(attempt) * 100000 + r);
      Rng script_rng(rec_seed);
      const auto script =
          make_recording_script(script_rng, config.target_label_mix, kActionsPerRecording, r % 2 == 0);
      SynthConfig rec_cfg = config;
      rec_cfg.seed = derive_seed(rec_seed, 1);
      rec_cfg.participant_scale = (r % 2 == 0) ? 0.90 : 1.10;
      LabeledSequence seq = generate_sequence(rec_cfg, script);
      for (const auto label : seq.labels) {
        if (label == IntentionClass::Idle) ++counts[0];
        else if (label == IntentionClass::Pull) ++counts[1];
        else ++counts[2];
      }
      n_actions += static_cast<int>(seq.plan.phases.size());
      seeds.push_back(rec_cfg.seed);
      sequences.push_back(std::move(seq));
    }

    const double n_total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    realized = {counts[0] / n_total, counts[1] / n_total, counts[2] / n_total};
    bool ok = true;
    for (int c = 0; c < 3; ++c) {
      if (std::abs(realized[c] - config.target_label_mix[c]) > 0.03) ok = false;
    }
    if (!ok) continue;

    DatasetBuildResult result;
    result.realized_mix = realized;
    result.n_actions = n_actions;
    make_directories(out_dir + "/recordings");
    for (int r = 0; r < total; ++r) {
      char name[64];
      std::snprintf(name, sizeof(name), "recordings/rec_%03d.jsonl", r);
      const std::string rel = name;
      write_sequence_jsonl(out_dir + "/" + rel, sequences[r]);

      RecordingEntry entry;
      entry.path = rel;
      entry.seed = seeds[r];
      entry.n_frames = sequences[r].frames.size();
      std::array<std::size_t, 3> c = {0, 0, 0};
      for (const auto label : sequences[r].labels) {
        if (label == IntentionClass::Idle) ++c[0];
        else if (label == IntentionClass::Pull) ++c[1];
        else ++c[2];
      }
      const double n = static_cast<double>(sequences[r].labels.size());
      entry.mix = {c[0] / n, c[1] / n, c[2] / n};
      entry.n_actions = static_cast<int>(sequences[r].plan.phases.size());
      if (r < n_train_recordings) {
        result.train.recordings.push_back(entry);
      } else {
        result.val.recordings.push_back(entry);
      }
    }
    result.train.split = "train";
    result.val.split = "val";
    result.train_manifest_path = out_dir + "/manifest_train.json";
    result.val_manifest_path = out_dir + "/manifest_val.json";
    write_manifest(result.train_manifest_path, result.train);
    write_manifest(result.val_manifest_path, result.val);
    return result;
  }

  throw ValidationError("build_dataset: label mix unreachable after 20 attempts, realized idle=" +
                        std::to_string(realized[0]) + " pull=" + std::to_string(realized[1]) +
                        " push=" + std::to_string(realized[2]));
}

}  // namespace copush
