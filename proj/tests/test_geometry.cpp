#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "volpose/geometry.hpp"
#include "volpose/heatmap.hpp"
#include "volpose/simkit.hpp"

using namespace volpose;

namespace {

Camera simple_camera() {
  Camera cam;
  cam.id = "c";
  cam.K << 1000, 0, 500, 0, 1000, 500, 0, 0, 1;
  cam.width = 1000;
  cam.height = 1000;
  return cam;
}

// Independent bilinear oracle: explicit four-corner weights, no shared helpers.
double oracle_bilinear(const PlaneFeature& m, double row, double col, int ch) {
  if (row < 0 || col < 0 || row > m.rows - 1 || col > m.cols - 1) return 0.0;
  const int r0 = static_cast<int>(std::floor(row)), c0 = static_cast<int>(std::floor(col));
  double acc = 0.0;
  for (int dr = 0; dr <= 1; ++dr)
    for (int dc = 0; dc <= 1; ++dc) {
      const int r = std::min(r0 + dr, m.rows - 1), c = std::min(c0 + dc, m.cols - 1);
      const double wr = dr ? row - r0 : 1.0 - (row - r0);
      const double wc = dc ? col - c0 : 1.0 - (col - c0);
      acc += wr * wc * m.at(r, c, ch);
    }
  return acc;
}

PlaneFeature random_plane(int rows, int cols, int ch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlaneFeature p(PlaneAxes::image, rows, cols, ch);
  for (auto& v : p.data) v = u(rng);
  return p;
}

}  // namespace

TEST(ProjectPoint, PrincipalAxisHitsPrincipalPoint) {
  const auto pr = project_point(simple_camera(), Vec3(0, 0, 2000));
  EXPECT_DOUBLE_EQ(pr.pixel.x(), 500.0);
  EXPECT_DOUBLE_EQ(pr.pixel.y(), 500.0);
  EXPECT_DOUBLE_EQ(pr.depth, 2000.0);
}

TEST(ProjectPoint, OffAxisMatchesHomogeneousOracle) {
  const Camera cam = simple_camera();
  const Vec3 p(2000, 0, 2000);
  Eigen::Matrix<double, 3, 4> P;
  P.leftCols<3>() = cam.K * cam.R;
  P.col(3) = cam.K * cam.t;
  const Eigen::Vector3d h = P * p.homogeneous();
  const auto pr = project_point(cam, p);
  EXPECT_NEAR(pr.pixel.x(), h.x() / h.z(), 1e-12);
  EXPECT_NEAR(pr.pixel.y(), h.y() / h.z(), 1e-12);
  EXPECT_NEAR(pr.pixel.x(), 1500.0, 1e-12);
  EXPECT_NEAR(pr.pixel.y(), 500.0, 1e-12);
}

TEST(ProjectPoint, ZeroDepthThrows) {
  try {
    project_point(simple_camera(), Vec3(100, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateDepth);
  }
}

TEST(CameraValidation, RejectsBadCameras) {
  Camera cam = simple_camera();
  cam.R(0, 1) = 1e-6;
  EXPECT_THROW(validate(cam), Error);
  cam = simple_camera();
  cam.K(0, 0) = -1;
  EXPECT_THROW(validate(cam), Error);
  cam = simple_camera();
  cam.K(1, 0) = 0.5;
  EXPECT_THROW(validate(cam), Error);
  cam = simple_camera();
  cam.width = 0;
  EXPECT_THROW(validate(cam), Error);
  EXPECT_NO_THROW(validate(simple_camera()));
}

TEST(CameraValidation, RigNeedsUniqueIdsAndCameras) {
  CameraRig rig;
  try {
    validate(rig);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyRig);
  }
  rig.cameras = {simple_camera(), simple_camera()};
  EXPECT_THROW(validate(rig), Error);
}

TEST(CameraValidation, LookAtIsOrthonormal) {
  for (const auto& cam : default_rig().cameras) {
    EXPECT_LE((cam.R.transpose() * cam.R - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NO_THROW(validate(cam));
  }
}

TEST(BuildWorkspace, FourCornerCameras) {
  CameraRig rig;
  int n = 0;
  for (double x : {-3000.0, 3000.0})
    for (double y : {-3000.0, 3000.0})
      rig.cameras.push_back(look_at("c" + std::to_string(n++), Vec3(x, y, 2500), Vec3(0, 0, 1000), 500, 64, 48));
  const VoxelGrid g = build_workspace(rig, 100.0);
  EXPECT_EQ(g.dims, (std::array<int, 3>{60, 60, 20}));
  EXPECT_NEAR((g.origin - Vec3(-3000, -3000, 0)).norm(), 0.0, 1e-9);
}

TEST(BuildWorkspace, SingleCameraClampsToOneVoxel) {
  CameraRig rig;
  rig.cameras.push_back(look_at("c0", Vec3(0, 0, 3000), Vec3(1000, 0, 0), 500, 64, 48));
  rig.cameras.front().t = Vec3::Zero();  // center at origin
  const VoxelGrid g = build_workspace(rig, 100.0);
  EXPECT_EQ(g.dims, (std::array<int, 3>{1, 1, 20}));
}

TEST(BuildWorkspace, DefaultRigIs80x80x20) {
  const VoxelGrid g = build_workspace(default_rig(), 100.0);
  EXPECT_EQ(g.dims, (std::array<int, 3>{80, 80, 20}));
  EXPECT_DOUBLE_EQ(g.extent().z(), 2000.0);
}

TEST(BuildWorkspace, Errors) {
  EXPECT_THROW(build_workspace(CameraRig{}, 100.0), Error);
  EXPECT_THROW(build_workspace(default_rig(), 0.0), Error);
}

TEST(BuildWorkspace, InvariantToCameraOrder) {
  CameraRig rig = default_rig();
  const VoxelGrid a = build_workspace(rig);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(rig.cameras.begin(), rig.cameras.end(), rng);
    const VoxelGrid b = build_workspace(rig);
    EXPECT_EQ(a.dims, b.dims);
    EXPECT_EQ(a.origin, b.origin);
  }
}

TEST(BilinearSample, NodesMidpointsAndOutside) {
  PlaneFeature m(PlaneAxes::image, 3, 4, 2);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      m.at(r, c, 0) = r * 10 + c;
      m.at(r, c, 1) = -r;
    }
  EXPECT_EQ(bilinear_sample(m, Vec2(2, 3))[0], 23.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(m, Vec2(1, 1.5))[0], 0.5 * (11 + 12));
  EXPECT_DOUBLE_EQ(bilinear_sample(m, Vec2(0.5, 0))[1], -0.5);
  const auto out = bilinear_sample(m, Vec2(-1, -1));
  EXPECT_EQ(out, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(bilinear_sample(m, Vec2(2.0001, 0))[0], 0.0);
}

TEST(BilinearSample, MatchesOracleOnRandomPoints) {
  std::mt19937_64 rng(11);
  const PlaneFeature m = random_plane(7, 9, 3, rng);
  std::uniform_real_distribution<double> r(-1.0, 10.0);
  for (int i = 0; i < 500; ++i) {
    const Vec2 p(r(rng), r(rng));
    const auto s = bilinear_sample(m, p);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(s[c], oracle_bilinear(m, p.x(), p.y(), c), 1e-12);
  }
}

TEST(Unproject, ConstantFieldOneCamera) {
  const CameraRig rig = default_rig(1);
  const Camera& cam = rig.cameras.front();
  PlaneFeature view(PlaneAxes::image, cam.height, cam.width, 1);
  std::fill(view.data.begin(), view.data.end(), 0.75);
  const VoxelGrid grid = centered_cube(Vec3(0, 0, 1000), 1000, 6);
  const FeatureVolume v = unproject_features(std::span(&view, 1), rig, grid);
  for (double x : v.data) EXPECT_NEAR(x, 0.75, 1e-12);
}

TEST(Unproject, ConstantFieldsSumOverCameras) {
  const CameraRig rig = default_rig(5);
  std::vector<PlaneFeature> views;
  double total = 0.0;
  for (std::size_t i = 0; i < rig.size(); ++i) {
    const auto& cam = rig.cameras[i];
    PlaneFeature view(PlaneAxes::image, cam.height, cam.width, 2);
    std::fill(view.data.begin(), view.data.end(), 0.1 * (i + 1));
    total += 0.1 * (i + 1);
    views.push_back(view);
  }
  const VoxelGrid grid = centered_cube(Vec3(0, 0, 1000), 800, 4);
  const FeatureVolume v = unproject_features(views, rig, grid);
  for (double x : v.data) EXPECT_NEAR(x, total, 1e-12);
}

TEST(Unproject, MatchesPerVoxelOracle) {
  const CameraRig rig = default_rig(5);
  std::mt19937_64 rng(5);
  std::vector<PlaneFeature> views;
  for (const auto& cam : rig.cameras) views.push_back(random_plane(cam.height, cam.width, 2, rng));
  const VoxelGrid grid = build_workspace(rig, 400.0);
  const FeatureVolume v = unproject_features(views, rig, grid);
  for (int i = 0; i < grid.dims[0]; ++i)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int k = 0; k < grid.dims[2]; ++k) {
        const Vec3 x = grid.voxel_center(i, j, k);
        for (int c = 0; c < 2; ++c) {
          double expect = 0.0;
          for (std::size_t n = 0; n < rig.size(); ++n) {
            const Camera& cam = rig.cameras[n];
            const Vec3 xc = cam.R * x + cam.t;
            if (xc.z() < kMinDepth) continue;
            const Vec3 h = cam.K * xc;
            expect += oracle_bilinear(views[n], h.y() / h.z(), h.x() / h.z(), c);
          }
          EXPECT_NEAR(v.at(i, j, k, c), expect, 1e-12 * std::max(1.0, std::abs(expect)));
        }
      }
}

TEST(Unproject, ThreadedResultIsBitIdentical) {
  const CameraRig rig = default_rig(5);
  std::mt19937_64 rng(9);
  std::vector<PlaneFeature> views;
  for (const auto& cam : rig.cameras) views.push_back(random_plane(cam.height, cam.width, 1, rng));
  const VoxelGrid grid = build_workspace(rig, 200.0);
  UnprojectOptions opts;
  const auto a = unproject_features(views, rig, grid, opts);
  opts.threads = 4;
  const auto b = unproject_features(views, rig, grid, opts);
  EXPECT_EQ(a.data, b.data);
}

TEST(Unproject, TwoCameraGaussianPeaksAtTriangulatedPoint) {
  const CameraRig rig = default_rig(2);
  const Vec3 target(300, -200, 900);
  std::vector<PlaneFeature> views;
  for (const auto& cam : rig.cameras) {
    PlaneFeature view(PlaneAxes::image, cam.height, cam.width, 1);
    const Vec2 px = project_point(cam, target).pixel;
    splat_gaussian(view, 0, Vec2(px.y(), px.x()), 3.0);
    views.push_back(view);
  }
  const VoxelGrid grid = build_workspace(rig, 100.0);
  const FeatureVolume v = unproject_features(views, rig, grid);
  const auto best = std::max_element(v.data.begin(), v.data.end()) - v.data.begin();
  const int k = static_cast<int>(best % grid.dims[2]);
  const int j = static_cast<int>((best / grid.dims[2]) % grid.dims[1]);
  const int i = static_cast<int>(best / (grid.dims[2] * grid.dims[1]));
  const Vec3 idx = grid.to_index(target);
  EXPECT_LE(std::abs(i - idx.x()), 1.0);
  EXPECT_LE(std::abs(j - idx.y()), 1.0);
  EXPECT_LE(std::abs(k - idx.z()), 1.0);
}

TEST(Unproject, BehindCameraContributesZero) {
  CameraRig rig;
  rig.cameras.push_back(simple_camera());
  PlaneFeature view(PlaneAxes::image, 1000, 1000, 1);
  std::fill(view.data.begin(), view.data.end(), 1.0);
  VoxelGrid grid;
  grid.origin = Vec3(-50, -50, -1000);
  grid.dims = {1, 1, 1};
  const FeatureVolume v = unproject_features(std::span(&view, 1), rig, grid);
  EXPECT_EQ(v.data.front(), 0.0);
}

TEST(Unproject, Errors) {
  const CameraRig rig = default_rig(2);
  std::vector<PlaneFeature> views = {PlaneFeature(PlaneAxes::image, 4, 4, 1), PlaneFeature(PlaneAxes::image, 4, 4, 2)};
  try {
    unproject_features(views, rig, centered_cube(Vec3::Zero(), 100, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChannelMismatch);
  }
  views.pop_back();
  EXPECT_THROW(unproject_features(views, rig, centered_cube(Vec3::Zero(), 100, 2)), Error);
}

TEST(Unproject, MeanOverValidViewsOption) {
  const CameraRig rig = default_rig(3);
  std::vector<PlaneFeature> views;
  for (const auto& cam : rig.cameras) {
    PlaneFeature view(PlaneAxes::image, cam.height, cam.width, 1);
    std::fill(view.data.begin(), view.data.end(), 2.0);
    views.push_back(view);
  }
  UnprojectOptions opts;
  opts.mean_over_valid_views = true;
  const auto v = unproject_features(views, rig, centered_cube(Vec3(0, 0, 1000), 500, 3), opts);
  for (double x : v.data) EXPECT_NEAR(x, 2.0, 1e-12);
}

TEST(BevProject, ColumnMaxAndZeros) {
  VoxelGrid g;
  g.dims = {1, 1, 3};
  FeatureVolume v(g, 1);
  v.data = {0.1, 0.9, 0.3};
  EXPECT_EQ(bev_project(v).at(0, 0), 0.9);
  g.dims = {3, 2, 4};
  const FeatureVolume z(g, 2);
  const PlaneFeature b = bev_project(z);
  EXPECT_EQ(b.axes, PlaneAxes::bev);
  for (double x : b.data) EXPECT_EQ(x, 0.0);
}

TEST(BevProject, MatchesOracleAndDominates) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  VoxelGrid g;
  g.dims = {5, 5, 4};
  FeatureVolume v(g, 3);
  for (auto& x : v.data) x = n(rng);
  const PlaneFeature b = bev_project(v);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      for (int c = 0; c < 3; ++c) {
        double m = -1e300;
        for (int k = 0; k < 4; ++k) {
          m = std::max(m, v.at(i, j, k, c));
          EXPECT_GE(b.at(i, j, c), v.at(i, j, k, c));
        }
        EXPECT_EQ(b.at(i, j, c), m);
      }
}

TEST(TriplaneProject, SingleVoxelAndConstantCube) {
  VoxelGrid g;
  g.dims = {4, 5, 6};
  FeatureVolume v(g, 1);
  v.at(1, 3, 4) = 1.0;
  const TriPlane tp = triplane_project(v);
  EXPECT_EQ(tp.xy.at(1, 3), 1.0);
  EXPECT_EQ(tp.xz.at(1, 4), 1.0);
  EXPECT_EQ(tp.yz.at(3, 4), 1.0);
  EXPECT_DOUBLE_EQ(std::accumulate(tp.xy.data.begin(), tp.xy.data.end(), 0.0), 1.0);
  std::fill(v.data.begin(), v.data.end(), 0.4);
  const TriPlane c = triplane_project(v);
  for (const auto* p : {&c.xy, &c.xz, &c.yz})
    for (double x : p->data) EXPECT_EQ(x, 0.4);
}

TEST(TriplaneProject, MatchesOracleOnRandomCube) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  VoxelGrid g;
  g.dims = {8, 8, 8};
  FeatureVolume v(g, 2);
  for (auto& x : v.data) x = n(rng);
  const TriPlane tp = triplane_project(v);
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      for (int c = 0; c < 2; ++c) {
        double mxy = -1e300, mxz = -1e300, myz = -1e300;
        for (int s = 0; s < 8; ++s) {
          mxy = std::max(mxy, v.at(a, b, s, c));
          mxz = std::max(mxz, v.at(a, s, b, c));
          myz = std::max(myz, v.at(s, a, b, c));
        }
        EXPECT_EQ(tp.xy.at(a, b, c), mxy);
        EXPECT_EQ(tp.xz.at(a, b, c), mxz);
        EXPECT_EQ(tp.yz.at(a, b, c), myz);
      }
}

TEST(WarpPlane, ZeroDisplacementIsIdentity) {
  std::mt19937_64 rng(1);
  PlaneFeature p = random_plane(6, 6, 2, rng);
  p.pitch = 50.0;
  EXPECT_EQ(warp_plane(p, Vec2::Zero()).data, p.data);
}

TEST(WarpPlane, IntegerShiftMovesDeltaExactly) {
  PlaneFeature p(PlaneAxes::xy, 10, 10, 1, 100.0);
  p.at(4, 5) = 1.0;
  const PlaneFeature w = warp_plane(p, Vec2(200.0, -300.0));
  EXPECT_EQ(w.at(6, 2), 1.0);
  EXPECT_DOUBLE_EQ(std::accumulate(w.data.begin(), w.data.end(), 0.0), 1.0);
}

TEST(WarpPlane, VacatedRegionIsZero) {
  PlaneFeature p(PlaneAxes::xy, 5, 5, 1, 10.0);
  std::fill(p.data.begin(), p.data.end(), 1.0);
  const PlaneFeature w = warp_plane(p, Vec2(20.0, 0.0));
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(w.at(0, c), 0.0);
    EXPECT_EQ(w.at(1, c), 0.0);
    EXPECT_EQ(w.at(2, c), 1.0);
  }
}

TEST(WarpPlane, RoundTripOnInteriorSupport) {
  std::mt19937_64 rng(4);
  PlaneFeature p(PlaneAxes::xy, 24, 24, 1, 100.0);
  // Linear ramp: bilinear resampling reproduces it exactly.
  for (int r = 6; r < 18; ++r)
    for (int c = 6; c < 18; ++c) p.at(r, c) = 0.5 + 0.01 * r - 0.02 * c;
  std::uniform_real_distribution<double> u(-250.0, 250.0);
  for (int t = 0; t < 10; ++t) {
    const Vec2 d(u(rng), u(rng));
    const PlaneFeature back = warp_plane(warp_plane(p, d), -d);
    for (int r = 9; r < 15; ++r)
      for (int c = 9; c < 15; ++c) EXPECT_NEAR(back.at(r, c), p.at(r, c), 1e-9);
  }
}

TEST(WarpPlane, LinearInFeature) {
  std::mt19937_64 rng(8);
  PlaneFeature a = random_plane(9, 7, 2, rng), b = random_plane(9, 7, 2, rng);
  a.pitch = b.pitch = 30.0;
  const double alpha = 0.7, beta = -1.3;
  PlaneFeature mix = a;
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = alpha * a.data[i] + beta * b.data[i];
  const Vec2 d(41.0, -17.5);
  const PlaneFeature wa = warp_plane(a, d), wb = warp_plane(b, d), wm = warp_plane(mix, d);
  for (std::size_t i = 0; i < wm.data.size(); ++i)
    EXPECT_NEAR(wm.data[i], alpha * wa.data[i] + beta * wb.data[i], 1e-12);
}
