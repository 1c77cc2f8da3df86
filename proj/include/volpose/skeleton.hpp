#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <utility>
#include <vector>

#include "volpose/geometry.hpp"

namespace volpose {

// 15-joint body layout following the Panoptic joint set, reordered so the
// mid-hip root comes first.
enum Joint : int {
  kMidHip = 0,
  kNeck,
  kNose,
  kLShoulder,
  kLElbow,
  kLWrist,
  kLHip,
  kLKnee,
  kLAnkle,
  kRShoulder,
  kRElbow,
  kRWrist,
  kRHip,
  kRKnee,
  kRAnkle,
  kJointCount
};

inline constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "mid_hip", "neck",   "nose",   "l_shoulder", "l_elbow", "l_wrist", "l_hip",  "l_knee",
    "l_ankle", "r_shoulder", "r_elbow", "r_wrist", "r_hip",   "r_knee",  "r_ankle"};

using Bone = std::pair<int, int>;

inline constexpr std::array<Bone, 14> kBones = {{{kMidHip, kNeck},
                                                 {kNeck, kNose},
                                                 {kNeck, kLShoulder},
                                                 {kLShoulder, kLElbow},
                                                 {kLElbow, kLWrist},
                                                 {kMidHip, kLHip},
                                                 {kLHip, kLKnee},
                                                 {kLKnee, kLAnkle},
                                                 {kNeck, kRShoulder},
                                                 {kRShoulder, kRElbow},
                                                 {kRElbow, kRWrist},
                                                 {kMidHip, kRHip},
                                                 {kRHip, kRKnee},
                                                 {kRKnee, kRAnkle}}};

// Limbs scored by PCP3D: head, torso, upper/lower arms, upper/lower legs.
inline constexpr std::array<Bone, 10> kPcpLimbs = {{{kNeck, kNose},
                                                    {kMidHip, kNeck},
                                                    {kLShoulder, kLElbow},
                                                    {kLElbow, kLWrist},
                                                    {kRShoulder, kRElbow},
                                                    {kRElbow, kRWrist},
                                                    {kLHip, kLKnee},
                                                    {kLKnee, kLAnkle},
                                                    {kRHip, kRKnee},
                                                    {kRKnee, kRAnkle}}};

// Rest pose in mm relative to the mid-hip, facing +x with +y to the left.
// Root height above the floor is kRootHeight.
inline constexpr double kRootHeight = 950.0;
inline const std::array<Vec3, kJointCount>& rest_pose() {
  static const std::array<Vec3, kJointCount> pose = {
      Vec3(0, 0, 0),          // mid hip
      Vec3(0, 0, 500),        // neck
      Vec3(60, 0, 650),       // nose
      Vec3(0, 180, 470),      // l shoulder
      Vec3(0, 200, 190),      // l elbow
      Vec3(20, 210, -60),     // l wrist
      Vec3(0, 100, 0),        // l hip
      Vec3(0, 100, -440),     // l knee
      Vec3(0, 100, -860),     // l ankle
      Vec3(0, -180, 470),     // r shoulder
      Vec3(0, -200, 190),     // r elbow
      Vec3(20, -210, -60),    // r wrist
      Vec3(0, -100, 0),       // r hip
      Vec3(0, -100, -440),    // r knee
      Vec3(0, -100, -860)};   // r ankle
  return pose;
}

struct Pose3D {
  std::vector<Vec3> joints;
  std::vector<double> confidence;
  int id = -1;

  std::size_t joint_count() const { return joints.size(); }
  const Vec3& root() const { return joints.front(); }
};

inline Pose3D translated(Pose3D pose, const Vec3& offset) {
  for (auto& j : pose.joints) j += offset;
  return pose;
}

}  // namespace volpose
