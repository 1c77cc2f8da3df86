#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "volpose/simkit.hpp"

using namespace volpose;

namespace {

const VoxelGrid& workspace() {
  static const VoxelGrid g = build_workspace(default_rig());
  return g;
}

}  // namespace

TEST(GenerateScene, StationaryPoseIsConstant) {
  SceneConfig cfg;
  cfg.persons = 1;
  cfg.frames = 10;
  const SceneSequence s = generate_scene(cfg, workspace());
  ASSERT_EQ(s.frames.size(), 10u);
  for (const auto& f : s.frames) {
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].joints, s.frames[0][0].joints);
    EXPECT_EQ(f[0].id, 0);
  }
  EXPECT_DOUBLE_EQ(s.frames[0][0].root().z(), kRootHeight);
}

TEST(GenerateScene, ConstantVelocityStepsExactly) {
  SceneConfig cfg;
  cfg.persons = 2;
  cfg.frames = 12;
  cfg.motion = Motion::constant_velocity;
  cfg.speed_mm = 100.0;
  const SceneSequence s = generate_scene(cfg, workspace());
  for (std::size_t t = 1; t < s.frames.size(); ++t)
    for (int p = 0; p < 2; ++p) {
      const Vec3 d = s.frames[t][p].root() - s.frames[t - 1][p].root();
      EXPECT_NEAR(d.x(), 100.0, 1e-9);
      EXPECT_NEAR(d.y(), 0.0, 1e-12);
      EXPECT_NEAR(d.z(), 0.0, 1e-12);
    }
}

TEST(GenerateScene, CrossingClosestApproach) {
  for (int frames : {30, 31}) {
    SceneConfig cfg;
    cfg.persons = 2;
    cfg.frames = frames;
    cfg.motion = Motion::crossing;
    cfg.closest_mm = 700.0;
    const SceneSequence s = generate_scene(cfg, workspace());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : s.frames) best = std::min(best, (f[0].root() - f[1].root()).norm());
    EXPECT_NEAR(best, 700.0, 1e-9);
  }
}

TEST(GenerateScene, LimbLengthsPreserved) {
  SceneConfig cfg;
  cfg.persons = 1;
  cfg.frames = 15;
  cfg.motion = Motion::constant_velocity;
  const SceneSequence s = generate_scene(cfg, workspace());
  const auto& rest = rest_pose();
  for (const auto& f : s.frames)
    for (const auto& [a, b] : kBones)
      EXPECT_NEAR((f[0].joints[a] - f[0].joints[b]).norm(), (rest[a] - rest[b]).norm(), 1e-9);
}

TEST(GenerateScene, JointsStayInWorkspace) {
  SceneConfig cfg;
  cfg.persons = 3;
  cfg.frames = 40;
  cfg.motion = Motion::crossing;
  const SceneSequence s = generate_scene(cfg, workspace());
  for (const auto& f : s.frames)
    for (const auto& p : f)
      for (const auto& j : p.joints) EXPECT_TRUE(workspace().contains(j));
}

TEST(GenerateScene, OverflowIsReported) {
  SceneConfig cfg;
  cfg.frames = 50;
  cfg.motion = Motion::constant_velocity;
  cfg.speed_mm = 400.0;
  try {
    generate_scene(cfg, workspace());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WorkspaceOverflow);
  }
}

TEST(GenerateScene, Validation) {
  SceneConfig cfg;
  cfg.frames = 0;
  EXPECT_THROW(generate_scene(cfg, workspace()), Error);
  cfg = SceneConfig{};
  cfg.noise.miss_rate = 1.5;
  EXPECT_THROW(generate_scene(cfg, workspace()), Error);
  EXPECT_THROW(parse_motion("teleport"), Error);
  EXPECT_EQ(parse_motion("crossing"), Motion::crossing);
}

TEST(GenerateScene, DeterministicGivenSeed) {
  SceneConfig cfg;
  cfg.persons = 3;
  cfg.frames = 8;
  cfg.motion = Motion::crossing;
  cfg.seed = 77;
  const SceneSequence a = generate_scene(cfg, workspace()), b = generate_scene(cfg, workspace());
  for (std::size_t t = 0; t < a.frames.size(); ++t)
    for (std::size_t p = 0; p < a.frames[t].size(); ++p) EXPECT_EQ(a.frames[t][p].joints, b.frames[t][p].joints);
}

TEST(RenderViews, NoiselessPeaksAtProjection) {
  const CameraRig rig = default_rig();
  SceneConfig cfg;
  cfg.persons = 1;
  cfg.frames = 1;
  const SceneSequence s = generate_scene(cfg, workspace());
  const auto views = render_views(s, rig, 0, cfg);
  ASSERT_EQ(views.size(), rig.size());
  const double margin = 5.0 * cfg.sigma_px + 1.0;
  int checked = 0;
  for (std::size_t c = 0; c < rig.size(); ++c)
    for (int j = 0; j < kJointCount; ++j) {
      const Vec2 px = project_point(rig.cameras[c], s.frames[0][0].joints[j]).pixel;
      const Heatmap2D h = channel_of(views[c], j);
      const int r = static_cast<int>(std::lround(px.y())), k = static_cast<int>(std::lround(px.x()));
      const double d2 = (r - px.y()) * (r - px.y()) + (k - px.x()) * (k - px.x());
      EXPECT_NEAR(h.at(r, k), std::exp(-d2 / (2 * cfg.sigma_px * cfg.sigma_px)), 1e-12);
      if (px.x() < margin || px.y() < margin || px.x() > h.cols - 1 - margin || px.y() > h.rows - 1 - margin)
        continue;
      // First moment of a sampled Gaussian with sigma >> 1 cell equals its
      // center, up to the exp(-12.5) tail cut by the 5-sigma splat window.
      double w = 0, mu = 0, mv = 0;
      for (int rr = 0; rr < h.rows; ++rr)
        for (int cc = 0; cc < h.cols; ++cc) {
          w += h.at(rr, cc);
          mu += h.at(rr, cc) * cc;
          mv += h.at(rr, cc) * rr;
        }
      EXPECT_NEAR(mu / w, px.x(), 1e-4);
      EXPECT_NEAR(mv / w, px.y(), 1e-4);
      ++checked;
    }
  EXPECT_GT(checked, 40);
}

TEST(RenderViews, MissRateOneIsBlank) {
  const CameraRig rig = default_rig();
  SceneConfig cfg;
  cfg.persons = 2;
  cfg.frames = 1;
  cfg.noise.miss_rate = 1.0;
  const auto views = render_views(generate_scene(cfg, workspace()), rig, 0, cfg);
  for (const auto& v : views)
    for (double x : v.data) EXPECT_EQ(x, 0.0);
}

TEST(RenderViews, DropoutHidesPerson) {
  const CameraRig rig = default_rig();
  SceneConfig cfg;
  cfg.persons = 1;
  cfg.frames = 3;
  cfg.dropouts = {{0, 1, 1}};
  const SceneSequence s = generate_scene(cfg, workspace());
  for (const auto& v : render_views(s, rig, 1, cfg))
    for (double x : v.data) EXPECT_EQ(x, 0.0);
  double total = 0.0;
  for (const auto& v : render_views(s, rig, 2, cfg))
    for (double x : v.data) total += x;
  EXPECT_GT(total, 0.0);
}

TEST(RenderViews, DeterministicPerFrame) {
  const CameraRig rig = default_rig();
  SceneConfig cfg;
  cfg.persons = 2;
  cfg.frames = 4;
  cfg.noise = {2.0, 0.3, 0.1};
  cfg.seed = 123;
  const SceneSequence s = generate_scene(cfg, workspace());
  const auto a = render_views(s, rig, 2, cfg);
  render_views(s, rig, 0, cfg);
  const auto b = render_views(s, rig, 2, cfg);
  for (std::size_t c = 0; c < a.size(); ++c) EXPECT_EQ(a[c].data, b[c].data);
  EXPECT_THROW(render_views(s, rig, 4, cfg), Error);
}

TEST(RenderViews, JitterStatisticsMatchInjectedNoise) {
  CameraRig rig = default_rig(5);
  rig = select_cameras(rig, std::vector<std::size_t>{4});
  SceneConfig cfg;
  cfg.persons = 1;
  cfg.joints = 1;
  cfg.frames = 1000;
  cfg.noise.jitter_px = 2.0;
  cfg.seed = 5;
  const SceneSequence s = generate_scene(cfg, workspace());
  const Vec2 px = project_point(rig.cameras[0], s.frames[0][0].root()).pixel;
  const int n = cfg.frames;
  double su = 0, sv = 0, suu = 0, svv = 0;
  for (int t = 0; t < n; ++t) {
    const PlaneFeature v = render_views(s, rig, t, cfg)[0];
    double w = 0, mu = 0, mv = 0;
    for (int r = 0; r < v.rows; ++r)
      for (int c = 0; c < v.cols; ++c) {
        w += v.at(r, c);
        mu += v.at(r, c) * c;
        mv += v.at(r, c) * r;
      }
    const double du = mu / w - px.x(), dv = mv / w - px.y();
    su += du;
    sv += dv;
    suu += du * du;
    svv += dv * dv;
  }
  const double sigma = cfg.noise.jitter_px;
  const double mean_bound = 3.0 * sigma / std::sqrt(n);
  const double var_bound = 3.0 * sigma * sigma * std::sqrt(2.0 / (n - 1));
  EXPECT_LE(std::abs(su / n), mean_bound);
  EXPECT_LE(std::abs(sv / n), mean_bound);
  const double var_u = (suu - su * su / n) / (n - 1), var_v = (svv - sv * sv / n) / (n - 1);
  EXPECT_NEAR(var_u, sigma * sigma, var_bound);
  EXPECT_NEAR(var_v, sigma * sigma, var_bound);
}

TEST(DefaultRig, FiveValidCameras) {
  const CameraRig rig = default_rig();
  EXPECT_EQ(rig.size(), 5u);
  EXPECT_NO_THROW(validate(rig));
  EXPECT_THROW(default_rig(0), Error);
  EXPECT_THROW(default_rig(6), Error);
}
