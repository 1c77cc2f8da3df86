#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "volpose/detect.hpp"
#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/heatmap.hpp"
#include "volpose/skeleton.hpp"

namespace volpose {

struct PersonCubeOptions {
  double side = 2000.0;
  int voxels = 32;
  double temperature = HeatmapDefaults::temperature;
  bool mask_to_bbox = true;
  int threads = 1;
};

struct PersonCube {
  FeatureVolume cube;
  Detection detection;
};

// Unprojects the views into a cube centered on the detection root; voxels
// outside the detection box stay zero.
inline PersonCube build_person_cube(std::span<const PlaneFeature> views, const CameraRig& rig,
                                    const Detection& det, const PersonCubeOptions& opts = {}) {
  UnprojectOptions u;
  u.threads = opts.threads;
  if (opts.mask_to_bbox) u.mask = det.bbox.aligned();
  const VoxelGrid grid = centered_cube(det.root, opts.side, opts.voxels);
  return {unproject_features(views, rig, grid, u), det};
}

// 2D estimate of one joint in one plane: coordinates in mm along the plane's
// two axes (cube frame) and a non-negative weight.
struct PlaneEstimate {
  double a = 0.0;
  double b = 0.0;
  double weight = 0.0;
};

struct FusedJoint {
  Vec3 position = Vec3::Zero();
  double confidence = 0.0;
};

// Each coordinate is the weighted mean of the two planes that observe it:
// x from xy and xz, y from xy and yz, z from xz and yz. A coordinate with no
// supporting weight stays at 0 (the cube center).
inline FusedJoint fuse_planes(const PlaneEstimate& xy, const PlaneEstimate& xz, const PlaneEstimate& yz) {
  if (xy.weight < 0.0 || xz.weight < 0.0 || yz.weight < 0.0)
    throw Error(ErrorKind::AllZeroWeights, "plane weights must be non-negative");
  if (xy.weight + xz.weight + yz.weight <= 0.0)
    throw Error(ErrorKind::AllZeroWeights, "all plane weights are zero");
  auto mix = [](double v1, double w1, double v2, double w2) {
    const double w = w1 + w2;
    return w > 0.0 ? (w1 * v1 + w2 * v2) / w : 0.0;
  };
  FusedJoint out;
  out.position = Vec3(mix(xy.a, xy.weight, xz.a, xz.weight), mix(xy.b, xy.weight, yz.a, yz.weight),
                      mix(xz.b, xz.weight, yz.b, yz.weight));
  out.confidence = (xy.weight + xz.weight + yz.weight) / 3.0;
  return out;
}

// Replaceable fusion head.
using PlaneFusion = std::function<FusedJoint(const PlaneEstimate&, const PlaneEstimate&, const PlaneEstimate&)>;

struct DecodedPose {
  Pose3D pose;
  TriPlane planes;
};

namespace detail {

inline PlaneEstimate plane_estimate(const PlaneFeature& plane, int channel, double temperature) {
  Heatmap2D h = channel_of(plane, channel);
  const double peak = *std::max_element(h.data.begin(), h.data.end());
  if (!(peak > 0.0)) return {};
  for (auto& v : h.data) v /= peak;
  const Peak p = soft_argmax(h, temperature);
  const Vec2 off((p.position.x() - 0.5 * (plane.rows - 1)) * plane.pitch,
                 (p.position.y() - 0.5 * (plane.cols - 1)) * plane.pitch);
  return {off.x(), off.y(), peak};
}

}  // namespace detail

// Per joint: peak-normalized soft-argmax in each plane, fused into a cube-frame
// offset and shifted by `anchor`. Joints with no signal in any plane get
// confidence 0 and sit on the anchor.
inline Pose3D decode_planes(const TriPlane& planes, const Vec3& anchor,
                            double temperature = HeatmapDefaults::temperature,
                            const PlaneFusion& fusion = {}) {
  if (planes.xy.channels != planes.xz.channels || planes.xy.channels != planes.yz.channels)
    throw Error(ErrorKind::ChannelMismatch, "tri-plane channel counts differ");
  Pose3D pose;
  const int J = planes.xy.channels;
  pose.joints.assign(J, anchor);
  pose.confidence.assign(J, 0.0);
  for (int j = 0; j < J; ++j) {
    const PlaneEstimate exy = detail::plane_estimate(planes.xy, j, temperature);
    const PlaneEstimate exz = detail::plane_estimate(planes.xz, j, temperature);
    const PlaneEstimate eyz = detail::plane_estimate(planes.yz, j, temperature);
    if (exy.weight + exz.weight + eyz.weight <= 0.0) continue;
    const FusedJoint f = fusion ? fusion(exy, exz, eyz) : fuse_planes(exy, exz, eyz);
    pose.joints[j] = anchor + f.position;
    pose.confidence[j] = f.confidence;
  }
  return pose;
}

inline DecodedPose decode_pose(const PersonCube& cube, const PersonCubeOptions& opts = {},
                               const PlaneFusion& fusion = {}) {
  DecodedPose out;
  out.planes = triplane_project(cube.cube);
  out.pose = decode_planes(out.planes, cube.detection.root, opts.temperature, fusion);
  return out;
}

// Gaussian target planes for a ground-truth pose in the frame of a cube of
// `cells` per side and `pitch` mm centered on `anchor`.
inline TriPlane render_plane_targets(const Pose3D& pose, const Vec3& anchor, int cells, double pitch,
                                     double sigma_cells) {
  const int J = static_cast<int>(pose.joint_count());
  TriPlane tp{PlaneFeature(PlaneAxes::xy, cells, cells, J, pitch, anchor),
              PlaneFeature(PlaneAxes::xz, cells, cells, J, pitch, anchor),
              PlaneFeature(PlaneAxes::yz, cells, cells, J, pitch, anchor)};
  const double mid = 0.5 * (cells - 1);
  for (int j = 0; j < J; ++j) {
    const Vec3 idx = (pose.joints[j] - anchor) / pitch + Vec3::Constant(mid);
    splat_gaussian(tp.xy, j, Vec2(idx.x(), idx.y()), sigma_cells);
    splat_gaussian(tp.xz, j, Vec2(idx.x(), idx.z()), sigma_cells);
    splat_gaussian(tp.yz, j, Vec2(idx.y(), idx.z()), sigma_cells);
  }
  return tp;
}

inline double plane_mse(const PlaneFeature& a, const PlaneFeature& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "plane shapes differ");
  if (a.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

// MSE over the three planes plus the L1 joint error, unit weights.
inline double pose_loss(const DecodedPose& pred, const DecodedPose& gt) {
  if (pred.pose.joint_count() != gt.pose.joint_count())
    throw Error(ErrorKind::ShapeMismatch, "joint counts differ");
  double loss = plane_mse(pred.planes.xy, gt.planes.xy) + plane_mse(pred.planes.xz, gt.planes.xz) +
                plane_mse(pred.planes.yz, gt.planes.yz);
  for (std::size_t j = 0; j < gt.pose.joint_count(); ++j)
    loss += (pred.pose.joints[j] - gt.pose.joints[j]).cwiseAbs().sum();
  return loss;
}

}  // namespace volpose
