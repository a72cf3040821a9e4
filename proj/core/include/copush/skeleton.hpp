#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "copush/error.hpp"
#include "copush/tensor.hpp"

namespace copush {

// Discrete motion intention along the x axis. The integer encoding matches
// the label convention: pull = -1, idle = 0, push = +1. Note that the sign
// encodes the class label, not the motion direction: pushing moves the box
// toward -x and pulling toward +x.
enum class IntentionClass : int { Pull = -1, Idle = 0, Push = +1 };

// class -> contiguous index (pull 0, idle 1, push 2)
inline int class_index(IntentionClass c) { return static_cast<int>(c) + 1; }
inline IntentionClass class_from_index(int i) {
  if (i < 0 || i > 2) throw ValidationError("class_from_index: index out of range");
  return static_cast<IntentionClass>(i - 1);
}
inline IntentionClass class_from_int(int v) {
  if (v < -1 || v > 1) throw ValidationError("class_from_int: value out of range");
  return static_cast<IntentionClass>(v);
}

// x-axis direction the box moves for a given intention (push = -x, pull = +x)
inline double motion_sign(IntentionClass c) {
  switch (c) {
    case IntentionClass::Push: return -1.0;
    case IntentionClass::Pull: return +1.0;
    default: return 0.0;
  }
}

constexpr double kFrameRate = 100.0;       // Hz
constexpr double kFrameDt = 1.0 / kFrameRate;
constexpr int kWindowLength = 50;          // frames (0.5 s)
constexpr double kMaxFrameGap = 0.020;     // s, window rejection threshold
constexpr double kFrameSpacingTol = 0.001; // s, nominal-rate tolerance
constexpr double kIncidenceEps = 1e-6;

// Joint ids of the fixed 17-joint skeleton.
namespace joints {
constexpr int kPelvis = 0;
constexpr int kSpine = 1;
constexpr int kChest = 2;
constexpr int kNeck = 3;
constexpr int kHead = 4;
constexpr int kLeftShoulder = 5;
constexpr int kLeftElbow = 6;
constexpr int kLeftHand = 7;
constexpr int kRightShoulder = 8;
constexpr int kRightElbow = 9;
constexpr int kRightHand = 10;
constexpr int kLeftHip = 11;
constexpr int kLeftKnee = 12;
constexpr int kLeftAnkle = 13;
constexpr int kRightHip = 14;
constexpr int kRightKnee = 15;
constexpr int kRightAnkle = 16;
constexpr int kCount = 17;
}  // namespace joints

// Directed spanning tree over the skeleton joints, edges pointing away from
// the pelvis root.
struct DirectedSkeletonGraph {
  int joint_count = 0;
  int bone_count = 0;
  std::vector<std::pair<int, int>> bones;  // (source, target)
  int root_joint = 0;
  std::vector<std::string> joint_names;
};

// One tracked pose: world-frame 3-D joint positions at a timestamp.
struct SkeletonFrame {
  double timestamp = 0.0;  // s
  Eigen::Matrix<double, Eigen::Dynamic, 3> joint_positions;  // J x 3, meters
};

// Preprocessed network input covering T consecutive frames: pelvis-relative
// joint positions and bone vectors.
struct FeatureWindow {
  Tensor joints;          // T x J x 3
  Tensor bones;           // T x B x 3
  int window_length = 0;  // T
  double end_timestamp = 0.0;
};

// Joint x bone incidence operators, row-degree normalized.
struct IncidencePair {
  Eigen::MatrixXd source;  // J x B
  Eigen::MatrixXd target;  // J x B
};

DirectedSkeletonGraph build_topology();

SkeletonFrame to_pelvis_frame(const SkeletonFrame& frame, const DirectedSkeletonGraph& graph);

Eigen::Matrix<double, Eigen::Dynamic, 3> bones_from_joints(const SkeletonFrame& frame,
                                                           const DirectedSkeletonGraph& graph);

FeatureWindow make_window(const std::vector<SkeletonFrame>& frames,
                          const DirectedSkeletonGraph& graph,
                          int expected_length = kWindowLength);

// Unnormalized 0/1 incidence matrices.
IncidencePair raw_incidence(const DirectedSkeletonGraph& graph);

// Row-degree-normalized incidence matrices consumed by the graph network:
// each nonzero entry of the raw matrix is divided by (row degree + eps).
IncidencePair incidence_matrices(const DirectedSkeletonGraph& graph);

}  // namespace copush
