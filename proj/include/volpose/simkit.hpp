#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/heatmap.hpp"
#include "volpose/skeleton.hpp"

namespace volpose {

enum class Motion { stationary, constant_velocity, crossing };

inline std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::stationary: return "stationary";
    case Motion::constant_velocity: return "constant_velocity";
    case Motion::crossing: return "crossing";
  }
  return "stationary";
}

inline Motion parse_motion(std::string_view s) {
  if (s == "stationary") return Motion::stationary;
  if (s == "constant_velocity" || s == "constant-velocity") return Motion::constant_velocity;
  if (s == "crossing") return Motion::crossing;
  throw Error(ErrorKind::ConfigError, "unknown motion '" + std::string(s) + "'");
}

struct NoiseConfig {
  double jitter_px = 0.0;
  double false_positive_rate = 0.0;
  double miss_rate = 0.0;
};

// Person `person` is invisible in every view for frames [first, last].
struct Dropout {
  int person = 0;
  int first = 0;
  int last = -1;
};

struct SceneConfig {
  int persons = 1;
  int frames = 10;
  double fps = 18.0;
  Motion motion = Motion::stationary;
  int joints = kJointCount;
  std::uint64_t seed = 0;
  double sigma_px = 4.0;
  NoiseConfig noise;
  std::vector<Dropout> dropouts;
  double speed_mm = 50.0;       // root speed per frame for moving persons
  double spacing_mm = 1500.0;   // lateral spacing between persons
  double closest_mm = 800.0;    // closest root approach of a crossing pair
  double stride_mm = 1400.0;    // gait cycle length
  double swing_rad = 0.4;       // peak limb swing
};

inline void validate(const SceneConfig& cfg) {
  if (cfg.persons < 0) throw Error(ErrorKind::ConfigError, "'persons' must be >= 0");
  if (cfg.frames < 1) throw Error(ErrorKind::ConfigError, "'frames' must be >= 1");
  if (cfg.joints < 1 || cfg.joints > kJointCount)
    throw Error(ErrorKind::ConfigError, "'joints' must be in [1, " + std::to_string(kJointCount) + "]");
  if (!(cfg.sigma_px > 0.0)) throw Error(ErrorKind::ConfigError, "'sigma_px' must be positive");
  if (!(cfg.fps > 0.0)) throw Error(ErrorKind::ConfigError, "'fps' must be positive");
  auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate(cfg.noise.false_positive_rate) || !rate(cfg.noise.miss_rate))
    throw Error(ErrorKind::ConfigError, "noise rates must lie in [0, 1]");
  if (cfg.noise.jitter_px < 0.0) throw Error(ErrorKind::ConfigError, "'jitter_px' must be >= 0");
}

struct SceneSequence {
  std::vector<std::vector<Pose3D>> frames;  // ground truth, Pose3D::id = person id
  double fps = 18.0;
  int joints = kJointCount;
};

// Default synthetic rig: four corner cameras at 2.5 m plus one overhead, all
// looking at the middle of the capture area. The workspace it spans is
// 8 m x 8 m, i.e. 80 x 80 x 20 voxels at 100 mm.
inline CameraRig default_rig(int cameras = 5, double fps = 18.0) {
  static const Vec3 positions[] = {Vec3(4000, 4000, 2500), Vec3(-4000, -4000, 2500),
                                   Vec3(-4000, 4000, 2500), Vec3(4000, -4000, 2500),
                                   Vec3(0, 0, 5000)};
  if (cameras < 1 || cameras > 5) throw Error(ErrorKind::ConfigError, "default rig supports 1 to 5 cameras");
  CameraRig rig;
  rig.fps = fps;
  for (int i = 0; i < cameras; ++i)
    rig.cameras.push_back(look_at("cam" + std::to_string(i), positions[i], Vec3(0, 0, 1000), 220.0, 256, 192));
  return rig;
}

namespace detail {

inline Vec3 rotate_about_y(const Vec3& v, double a) {
  return Vec3(std::cos(a) * v.x() + std::sin(a) * v.z(), v.y(), -std::sin(a) * v.x() + std::cos(a) * v.z());
}

// Template pose with limbs swung about the shoulder/hip lateral axis. Limb
// segment lengths are preserved exactly.
inline std::array<Vec3, kJointCount> articulate(double phase, double amplitude) {
  const auto& rest = rest_pose();
  std::array<Vec3, kJointCount> out = rest;
  const double s = amplitude * std::sin(phase);
  auto swing = [&](int base, int mid, int tip, double angle) {
    out[mid] = rest[base] + rotate_about_y(rest[mid] - rest[base], angle);
    out[tip] = out[mid] + rotate_about_y(rest[tip] - rest[mid], angle);
  };
  swing(kLShoulder, kLElbow, kLWrist, s);
  swing(kRShoulder, kRElbow, kRWrist, -s);
  swing(kLHip, kLKnee, kLAnkle, -s);
  swing(kRHip, kRKnee, kRAnkle, s);
  return out;
}

struct Trajectory {
  Vec3 start;  // root at frame 0, floor-relative height included
  Vec3 velocity;
  double phase0 = 0.0;
};

inline Pose3D pose_at(const Trajectory& tr, int frame, int joints, double stride, double amplitude, int id) {
  const Vec3 root = tr.start + tr.velocity * frame;
  const double speed = tr.velocity.head<2>().norm();
  const double phase = tr.phase0 + 2.0 * std::numbers::pi * speed * frame / stride;
  const auto local = articulate(phase, speed > 0.0 ? amplitude : 0.0);
  const double heading = speed > 0.0 ? std::atan2(tr.velocity.y(), tr.velocity.x()) : 0.0;
  const Eigen::Matrix3d yaw = Eigen::AngleAxisd(heading, Vec3::UnitZ()).toRotationMatrix();
  Pose3D p;
  p.id = id;
  for (int j = 0; j < joints; ++j) {
    p.joints.push_back(root + yaw * local[j]);
    p.confidence.push_back(1.0);
  }
  return p;
}

}  // namespace detail

// Deterministic ground-truth sequence. Persons are laid out side by side
// along y, centered on the workspace; moving persons walk along +x (crossing
// pairs in opposite directions) and meet the workspace center halfway through.
inline SceneSequence generate_scene(const SceneConfig& cfg, const VoxelGrid& workspace) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Vec3 c = workspace.center();
  const double mid = std::floor(0.5 * (cfg.frames - 1));
  std::vector<detail::Trajectory> trajs;
  for (int p = 0; p < cfg.persons; ++p) {
    detail::Trajectory tr;
    tr.phase0 = 2.0 * std::numbers::pi * unit(rng);
    const double lateral = (p - 0.5 * (cfg.persons - 1)) * cfg.spacing_mm;
    switch (cfg.motion) {
      case Motion::stationary:
        tr.start = Vec3(c.x(), c.y() + lateral, kRootHeight);
        tr.velocity = Vec3::Zero();
        break;
      case Motion::constant_velocity:
        tr.velocity = Vec3(cfg.speed_mm, 0, 0);
        tr.start = Vec3(c.x() - cfg.speed_mm * mid, c.y() + lateral, kRootHeight);
        break;
      case Motion::crossing: {
        // Pairs (0,1), (2,3), ... cross; pairs are stacked along y.
        const int pair = p / 2;
        const int pairs = (cfg.persons + 1) / 2;
        const double lane = (pair - 0.5 * (pairs - 1)) * (cfg.spacing_mm + cfg.closest_mm);
        const double dir = p % 2 == 0 ? 1.0 : -1.0;
        tr.velocity = Vec3(dir * cfg.speed_mm, 0, 0);
        tr.start = Vec3(c.x() - dir * cfg.speed_mm * mid, c.y() + lane + 0.5 * dir * cfg.closest_mm, kRootHeight);
        break;
      }
    }
    trajs.push_back(tr);
  }

  SceneSequence seq;
  seq.fps = cfg.fps;
  seq.joints = cfg.joints;
  const Box3 bounds = workspace.bounds();
  for (int t = 0; t < cfg.frames; ++t) {
    std::vector<Pose3D> frame;
    for (int p = 0; p < cfg.persons; ++p) {
      Pose3D pose = detail::pose_at(trajs[p], t, cfg.joints, cfg.stride_mm, cfg.swing_rad, p);
      for (const auto& j : pose.joints)
        if (!bounds.contains(j))
          throw Error(ErrorKind::WorkspaceOverflow,
                      "person " + std::to_string(p) + " leaves the workspace at frame " + std::to_string(t));
      frame.push_back(std::move(pose));
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

inline bool dropped(const SceneConfig& cfg, int person, int frame) {
  return std::any_of(cfg.dropouts.begin(), cfg.dropouts.end(), [&](const Dropout& d) {
    return d.person == person && frame >= d.first && frame <= d.last;
  });
}

// Per-camera J-channel heatmaps of the ground truth at `frame`. Randomness is
// seeded from (seed, frame, camera) so any frame renders identically in
// isolation. Per camera the draw order is: for each person and joint a miss
// draw then two jitter draws, then one false-positive draw per channel plus a
// position pair when it fires.
inline std::vector<PlaneFeature> render_views(const SceneSequence& scene, const CameraRig& rig, int frame,
                                              const SceneConfig& cfg) {
  if (frame < 0 || frame >= static_cast<int>(scene.frames.size()))
    throw Error(ErrorKind::ShapeMismatch, "frame " + std::to_string(frame) + " out of range");
  const int J = scene.joints;
  std::vector<PlaneFeature> views;
  views.reserve(rig.size());
  for (std::size_t ci = 0; ci < rig.size(); ++ci) {
    const Camera& cam = rig.cameras[ci];
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(frame), static_cast<std::uint32_t>(ci)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    PlaneFeature view(PlaneAxes::image, cam.height, cam.width, J);
    for (const auto& person : scene.frames[frame]) {
      const bool hidden = dropped(cfg, person.id, frame);
      for (int j = 0; j < J; ++j) {
        const bool miss = unit(rng) < cfg.noise.miss_rate;
        const double ju = gauss(rng) * cfg.noise.jitter_px, jv = gauss(rng) * cfg.noise.jitter_px;
        if (hidden || miss) continue;
        const Vec3 xc = cam.R * person.joints[j] + cam.t;
        if (xc.z() < kMinDepth) continue;
        const Projection pr = project_point(cam, person.joints[j]);
        splat_gaussian(view, j, Vec2(pr.pixel.y() + jv, pr.pixel.x() + ju), cfg.sigma_px);
      }
    }
    for (int j = 0; j < J; ++j) {
      if (!(unit(rng) < cfg.noise.false_positive_rate)) continue;
      const double u = unit(rng) * (cam.width - 1), v = unit(rng) * (cam.height - 1);
      splat_gaussian(view, j, Vec2(v, u), cfg.sigma_px);
    }
    views.push_back(std::move(view));
  }
  return views;
}

}  // namespace volpose
