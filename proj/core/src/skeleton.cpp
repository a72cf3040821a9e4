#include "copush/skeleton.hpp"

#include <cmath>

namespace copush {

DirectedSkeletonGraph build_topology() {
  using namespace joints;
  DirectedSkeletonGraph g;
  g.joint_count = kCount;
  g.root_joint = kPelvis;
  g.joint_names = {"pelvis",     "spine",      "chest",      "neck",       "head",
                   "l_shoulder", "l_elbow",    "l_hand",     "r_shoulder", "r_elbow",
                   "r_hand",     "l_hip",      "l_knee",     "l_ankle",    "r_hip",
                   "r_knee",     "r_ankle"};
  g.bones = {
      {kPelvis, kSpine},        {kSpine, kChest},       {kChest, kNeck},
      {kNeck, kHead},           {kChest, kLeftShoulder},{kLeftShoulder, kLeftElbow},
      {kLeftElbow, kLeftHand},  {kChest, kRightShoulder},{kRightShoulder, kRightElbow},
      {kRightElbow, kRightHand},{kPelvis, kLeftHip},    {kLeftHip, kLeftKnee},
      {kLeftKnee, kLeftAnkle},  {kPelvis, kRightHip},   {kRightHip, kRightKnee},
      {kRightKnee, kRightAnkle}};
  g.bone_count = static_cast<int>(g.bones.size());
  return g;
}

static void validate_frame(const SkeletonFrame& frame, const DirectedSkeletonGraph& graph) {
  if (frame.joint_positions.rows() != graph.joint_count) {
    throw ValidationError("skeleton frame has wrong joint count");
  }
  if (!frame.joint_positions.allFinite() || !std::isfinite(frame.timestamp)) {
    throw ValidationError("skeleton frame contains non-finite values");
  }
}

SkeletonFrame to_pelvis_frame(const SkeletonFrame& frame, const DirectedSkeletonGraph& graph) {
  validate_frame(frame, graph);
  SkeletonFrame out = frame;
  const Eigen::RowVector3d pelvis = frame.joint_positions.row(graph.root_joint);
  out.joint_positions.rowwise() -= pelvis;
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> bones_from_joints(const SkeletonFrame& frame,
                                                           const DirectedSkeletonGraph& graph) {
  validate_frame(frame, graph);
  Eigen::Matrix<double, Eigen::Dynamic, 3> bones(graph.bone_count, 3);
  for (int b = 0; b < graph.bone_count; ++b) {
    const auto [src, tgt] = graph.bones[b];
    bones.row(b) = frame.joint_positions.row(tgt) - frame.joint_positions.row(src);
  }
  return bones;
}

FeatureWindow make_window(const std::vector<SkeletonFrame>& frames,
                          const DirectedSkeletonGraph& graph, int expected_length) {
  if (static_cast<int>(frames.size()) != expected_length) {
    throw ValidationError("make_window: expected " + std::to_string(expected_length) +
                          " frames, got " + std::to_string(frames.size()));
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const double gap = frames[i].timestamp - frames[i - 1].timestamp;
    if (gap <= 0.0) throw ValidationError("make_window: timestamps not strictly increasing");
    if (gap > kMaxFrameGap) {
      throw ValidationError("make_window: frame gap " + std::to_string(gap) + " s exceeds " +
                            std::to_string(kMaxFrameGap) + " s");
    }
  }

  const int T = expected_length;
  const int J = graph.joint_count;
  const int B = graph.bone_count;
  FeatureWindow w;
  w.window_length = T;
  w.end_timestamp = frames.back().timestamp;
  w.joints = Tensor({static_cast<std::size_t>(T), static_cast<std::size_t>(J), 3});
  w.bones = Tensor({static_cast<std::size_t>(T), static_cast<std::size_t>(B), 3});
  for (int t = 0; t < T; ++t) {
    const SkeletonFrame rel = to_pelvis_frame(frames[t], graph);
    const auto bones = bones_from_joints(rel, graph);
    for (int j = 0; j < J; ++j) {
      for (int c = 0; c < 3; ++c) {
        w.joints.data[(static_cast<std::size_t>(t) * J + j) * 3 + c] = rel.joint_positions(j, c);
      }
    }
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < 3; ++c) {
        w.bones.data[(static_cast<std::size_t>(t) * B + b) * 3 + c] = bones(b, c);
      }
    }
  }
  return w;
}

IncidencePair raw_incidence(const DirectedSkeletonGraph& graph) {
  IncidencePair inc;
  inc.source = Eigen::MatrixXd::Zero(graph.joint_count, graph.bone_count);
  inc.target = Eigen::MatrixXd::Zero(graph.joint_count, graph.bone_count);
  for (int b = 0; b < graph.bone_count; ++b) {
    inc.source(graph.bones[b].first, b) = 1.0;
    inc.target(graph.bones[b].second, b) = 1.0;
  }
  return inc;
}

IncidencePair incidence_matrices(const DirectedSkeletonGraph& graph) {
  IncidencePair inc = raw_incidence(graph);
  for (auto* m : {&inc.source, &inc.target}) {
    for (int j = 0; j < m->rows(); ++j) {
      const double degree = m->row(j).sum();
      m->row(j) /= (degree + kIncidenceEps);
    }
  }
  return inc;
}

}  // namespace copush
