#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/parallel.hpp"

namespace volpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Box3 = Eigen::AlignedBox3d;

// Pinhole camera. Extrinsics map world to camera: x_cam = R * x_world + t.
// World units are millimeters; pixel coordinates are (u, v) = (col, row).
struct Camera {
  std::string id;
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int width = 1;
  int height = 1;

  Vec3 center() const { return -R.transpose() * t; }
};

inline constexpr double kOrthonormalTolerance = 1e-9;
inline constexpr double kMinDepth = 1e-6;

inline void validate(const Camera& cam) {
  const double ortho = (cam.R.transpose() * cam.R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= kOrthonormalTolerance))
    throw Error(ErrorKind::InvalidCamera, "camera '" + cam.id + "': rotation is not orthonormal");
  if (!(cam.K(0, 0) > 0.0 && cam.K(1, 1) > 0.0 && cam.K(2, 2) > 0.0))
    throw Error(ErrorKind::InvalidCamera, "camera '" + cam.id + "': focal entries must be positive");
  if (cam.K(1, 0) != 0.0 || cam.K(2, 0) != 0.0 || cam.K(2, 1) != 0.0)
    throw Error(ErrorKind::InvalidCamera, "camera '" + cam.id + "': intrinsics must be upper triangular");
  if (cam.width <= 0 || cam.height <= 0)
    throw Error(ErrorKind::InvalidCamera, "camera '" + cam.id + "': image size must be positive");
  if (!cam.t.allFinite() || !cam.K.allFinite())
    throw Error(ErrorKind::InvalidCamera, "camera '" + cam.id + "': non-finite parameters");
}

// Camera at `eye` looking at `target` with world +z up.
inline Camera look_at(std::string id, const Vec3& eye, const Vec3& target, double focal_px, int width,
                      int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-12) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.id = std::move(id);
  cam.R.row(0) = right.transpose();
  cam.R.row(1) = down.transpose();
  cam.R.row(2) = forward.transpose();
  cam.t = -cam.R * eye;
  cam.K << focal_px, 0.0, 0.5 * (width - 1), 0.0, focal_px, 0.5 * (height - 1), 0.0, 0.0, 1.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

struct CameraRig {
  std::vector<Camera> cameras;
  double fps = 30.0;

  std::size_t size() const { return cameras.size(); }
};

inline void validate(const CameraRig& rig) {
  if (rig.cameras.empty()) throw Error(ErrorKind::EmptyRig, "rig has no cameras");
  std::set<std::string> ids;
  for (const auto& cam : rig.cameras) {
    validate(cam);
    if (!ids.insert(cam.id).second)
      throw Error(ErrorKind::InvalidCamera, "duplicate camera id '" + cam.id + "'");
  }
  if (!(rig.fps > 0.0)) throw Error(ErrorKind::InvalidCamera, "rig frame rate must be positive");
}

// Keeps the cameras at `indices`, in that order.
inline CameraRig select_cameras(const CameraRig& rig, std::span<const std::size_t> indices) {
  CameraRig out;
  out.fps = rig.fps;
  for (auto i : indices) out.cameras.push_back(rig.cameras.at(i));
  return out;
}

struct Projection {
  Vec2 pixel;
  double depth;
};

inline Projection project_point(const Camera& cam, const Vec3& point) {
  const Vec3 xc = cam.R * point + cam.t;
  if (std::abs(xc.z()) < kMinDepth)
    throw Error(ErrorKind::DegenerateDepth, "point projects with zero depth in camera '" + cam.id + "'");
  const Vec3 h = cam.K * xc;
  return {Vec2(h.x() / h.z(), h.y() / h.z()), xc.z()};
}

// Regular voxel lattice. Voxel (i, j, k) covers
// [origin + (i, j, k) * pitch, origin + (i+1, j+1, k+1) * pitch).
struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  double pitch = 100.0;
  std::array<int, 3> dims{1, 1, 1};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  Vec3 voxel_center(int i, int j, int k) const {
    return origin + pitch * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  // Continuous voxel coordinates, where integer values are voxel centers.
  Vec3 to_world(const Vec3& index) const { return origin + pitch * (index.array() + 0.5).matrix(); }
  Vec3 to_index(const Vec3& world) const { return ((world - origin) / pitch).array() - 0.5; }
  Vec3 extent() const { return pitch * Vec3(dims[0], dims[1], dims[2]); }
  Vec3 center() const { return origin + 0.5 * extent(); }
  Box3 bounds() const { return Box3(origin, origin + extent()); }
  bool contains(const Vec3& world) const { return bounds().contains(world); }
};

inline void validate(const VoxelGrid& grid) {
  if (!(grid.pitch > 0.0)) throw Error(ErrorKind::ShapeMismatch, "voxel pitch must be positive");
  for (int d : grid.dims)
    if (d < 1) throw Error(ErrorKind::ShapeMismatch, "voxel grid dimensions must be >= 1");
}

inline constexpr double kWorkspaceHeight = 2000.0;

// Top-down bounding box of the camera centers, centered on their mean, with
// the vertical range anchored at the floor. Degenerate spans clamp to one voxel.
inline VoxelGrid build_workspace(const CameraRig& rig, double pitch = 100.0) {
  if (rig.cameras.empty()) throw Error(ErrorKind::EmptyRig, "cannot build a workspace from an empty rig");
  if (!(pitch > 0.0)) throw Error(ErrorKind::ShapeMismatch, "voxel pitch must be positive");

  std::vector<std::array<double, 2>> xy;
  for (const auto& cam : rig.cameras) {
    const Vec3 c = cam.center();
    xy.push_back({c.x(), c.y()});
  }
  // Sorted summation keeps the mean bit-identical under camera reordering.
  std::sort(xy.begin(), xy.end());
  double sx = 0.0, sy = 0.0;
  double lo_x = xy.front()[0], hi_x = lo_x, lo_y = xy.front()[1], hi_y = lo_y;
  for (const auto& p : xy) {
    sx += p[0];
    sy += p[1];
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  }
  const double n = static_cast<double>(xy.size());
  const double mx = sx / n, my = sy / n;

  auto cells = [pitch](double span) {
    return std::max(1, static_cast<int>(std::ceil(span / pitch - 1e-9)));
  };
  VoxelGrid grid;
  grid.pitch = pitch;
  grid.dims = {cells(hi_x - lo_x), cells(hi_y - lo_y), cells(kWorkspaceHeight)};
  grid.origin = Vec3(mx - 0.5 * grid.dims[0] * pitch, my - 0.5 * grid.dims[1] * pitch, 0.0);
  return grid;
}

// Cube of `voxels`^3 cells and side `side` mm centered on `center`.
inline VoxelGrid centered_cube(const Vec3& center, double side, int voxels) {
  VoxelGrid grid;
  grid.pitch = side / voxels;
  grid.dims = {voxels, voxels, voxels};
  grid.origin = center - Vec3::Constant(0.5 * side);
  return grid;
}

// Dense nx * ny * nz * channels array, channel-last.
struct FeatureVolume {
  VoxelGrid grid;
  int channels = 1;
  std::vector<double> data;

  FeatureVolume() = default;
  FeatureVolume(const VoxelGrid& g, int c) : grid(g), channels(c), data(g.voxel_count() * c, 0.0) {}

  std::size_t index(int i, int j, int k, int c = 0) const {
    return ((static_cast<std::size_t>(i) * grid.dims[1] + j) * grid.dims[2] + k) * channels + c;
  }
  double& at(int i, int j, int k, int c = 0) { return data[index(i, j, k, c)]; }
  double at(int i, int j, int k, int c = 0) const { return data[index(i, j, k, c)]; }
};

enum class PlaneAxes { xy, xz, yz, bev, image };

// Dense rows * cols * channels plane, channel-last. Plane coordinates are
// (row, col) with integer values at cell centers. For image-space maps the
// row is the pixel v coordinate and the column is u. `pitch` is the size of
// one cell in mm (1 for image maps) and `world_anchor` the world point at the
// plane center.
struct PlaneFeature {
  PlaneAxes axes = PlaneAxes::image;
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<double> data;
  Vec3 world_anchor = Vec3::Zero();
  double pitch = 1.0;

  PlaneFeature() = default;
  PlaneFeature(PlaneAxes a, int r, int c, int ch, double p = 1.0, const Vec3& anchor = Vec3::Zero())
      : axes(a), rows(r), cols(c), channels(ch),
        data(static_cast<std::size_t>(r) * c * ch, 0.0), world_anchor(anchor), pitch(p) {}

  std::size_t index(int r, int c, int ch = 0) const {
    return (static_cast<std::size_t>(r) * cols + c) * channels + ch;
  }
  double& at(int r, int c, int ch = 0) { return data[index(r, c, ch)]; }
  double at(int r, int c, int ch = 0) const { return data[index(r, c, ch)]; }
  bool same_shape(const PlaneFeature& o) const {
    return rows == o.rows && cols == o.cols && channels == o.channels;
  }
};

namespace detail {

// Adds scale * bilinear(map, p) into out[0..channels). Returns false, adding
// nothing, when p lies outside [0, rows-1] x [0, cols-1].
inline bool accumulate_bilinear(const PlaneFeature& map, double row, double col, double scale,
                                double* out) {
  if (!(row >= 0.0 && col >= 0.0 && row <= map.rows - 1 && col <= map.cols - 1)) return false;
  const int r0 = static_cast<int>(row);  // non-negative here, so truncation is floor
  const int c0 = static_cast<int>(col);
  const int r1 = std::min(r0 + 1, map.rows - 1);
  const int c1 = std::min(c0 + 1, map.cols - 1);
  const double fr = row - r0, fc = col - c0;
  const double w00 = (1.0 - fr) * (1.0 - fc) * scale;
  const double w01 = (1.0 - fr) * fc * scale;
  const double w10 = fr * (1.0 - fc) * scale;
  const double w11 = fr * fc * scale;
  const double* p00 = &map.data[map.index(r0, c0)];
  const double* p01 = &map.data[map.index(r0, c1)];
  const double* p10 = &map.data[map.index(r1, c0)];
  const double* p11 = &map.data[map.index(r1, c1)];
  for (int ch = 0; ch < map.channels; ++ch)
    out[ch] += w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
  return true;
}

}  // namespace detail

// Four-neighbour bilinear interpolation at (row, col); zero outside the map.
inline std::vector<double> bilinear_sample(const PlaneFeature& map, const Vec2& point) {
  std::vector<double> out(map.channels, 0.0);
  detail::accumulate_bilinear(map, point.x(), point.y(), 1.0, out.data());
  return out;
}

struct UnprojectOptions {
  // Divide each voxel by the number of views it projects into instead of the
  // plain sum. Off by default.
  bool mean_over_valid_views = false;
  // Voxels whose centers fall outside this box are left at zero.
  std::optional<Box3> mask;
  int threads = 1;
};

// Each voxel center x receives sum_i F_i(C_i x). Samples outside an image or
// behind a camera contribute zero. Views are summed in rig order.
inline FeatureVolume unproject_features(std::span<const PlaneFeature> views, const CameraRig& rig,
                                        const VoxelGrid& grid, const UnprojectOptions& opts = {}) {
  validate(grid);
  if (views.size() != rig.cameras.size())
    throw Error(ErrorKind::ShapeMismatch, "expected one view per camera");
  if (views.empty()) throw Error(ErrorKind::EmptyRig, "no views to unproject");
  const int channels = views.front().channels;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].channels != channels)
      throw Error(ErrorKind::ChannelMismatch, "view " + std::to_string(i) + " has a different channel count");
  }

  struct Projector {
    Eigen::Matrix<double, 3, 4> P;
    Eigen::RowVector4d depth_row;
  };
  std::vector<Projector> projectors;
  for (const auto& cam : rig.cameras) {
    Projector pr;
    pr.P.leftCols<3>() = cam.K * cam.R;
    pr.P.col(3) = cam.K * cam.t;
    pr.depth_row << cam.R.row(2), cam.t.z();
    projectors.push_back(pr);
  }

  FeatureVolume volume(grid, channels);
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  parallel_for(static_cast<std::size_t>(nx), opts.threads, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    // Homogeneous projections are affine in k, so each column is stepped
    // incrementally from its bottom voxel.
    std::vector<Eigen::Vector3d> h0(views.size()), dh(views.size());
    std::vector<double> d0(views.size()), dd(views.size());
    for (int j = 0; j < ny; ++j) {
      const Vec3 base = grid.voxel_center(i, j, 0);
      const Eigen::Vector4d bh(base.x(), base.y(), base.z(), 1.0);
      for (std::size_t v = 0; v < views.size(); ++v) {
        h0[v] = projectors[v].P * bh;
        dh[v] = projectors[v].P.col(2) * grid.pitch;
        d0[v] = projectors[v].depth_row.dot(bh);
        dd[v] = projectors[v].depth_row(2) * grid.pitch;
      }
      for (int k = 0; k < nz; ++k) {
        if (opts.mask && !opts.mask->contains(grid.voxel_center(i, j, k))) continue;
        double* out = &volume.data[volume.index(i, j, k)];
        int valid = 0;
        for (std::size_t v = 0; v < views.size(); ++v) {
          const double depth = d0[v] + k * dd[v];
          if (depth < kMinDepth) continue;
          const Eigen::Vector3d h = h0[v] + k * dh[v];
          const double u = h.x() / h.z(), row = h.y() / h.z();
          if (detail::accumulate_bilinear(views[v], row, u, 1.0, out)) ++valid;
        }
        if (opts.mean_over_valid_views && valid > 1)
          for (int c = 0; c < channels; ++c) out[c] /= valid;
      }
    }
  });
  return volume;
}

// Max over z: result(x, y, c) = max_z volume(x, y, z, c).
inline PlaneFeature bev_project(const FeatureVolume& volume) {
  const auto& g = volume.grid;
  const auto [nx, ny, nz] = g.dims;
  const int C = volume.channels;
  PlaneFeature bev(PlaneAxes::bev, nx, ny, C, g.pitch, g.center());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int c = 0; c < C; ++c) {
        double m = volume.at(i, j, 0, c);
        for (int k = 1; k < nz; ++k) m = std::max(m, volume.at(i, j, k, c));
        bev.at(i, j, c) = m;
      }
  return bev;
}

struct TriPlane {
  PlaneFeature xy;
  PlaneFeature xz;
  PlaneFeature yz;
};

// Max projections along z, y and x respectively.
inline TriPlane triplane_project(const FeatureVolume& cube) {
  const auto& g = cube.grid;
  const auto [nx, ny, nz] = g.dims;
  const int C = cube.channels;
  const Vec3 anchor = g.center();
  constexpr double lowest = -std::numeric_limits<double>::infinity();
  TriPlane tp{PlaneFeature(PlaneAxes::xy, nx, ny, C, g.pitch, anchor),
              PlaneFeature(PlaneAxes::xz, nx, nz, C, g.pitch, anchor),
              PlaneFeature(PlaneAxes::yz, ny, nz, C, g.pitch, anchor)};
  std::fill(tp.xy.data.begin(), tp.xy.data.end(), lowest);
  std::fill(tp.xz.data.begin(), tp.xz.data.end(), lowest);
  std::fill(tp.yz.data.begin(), tp.yz.data.end(), lowest);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) {
        const double* v = &cube.data[cube.index(i, j, k)];
        double* pxy = &tp.xy.data[tp.xy.index(i, j)];
        double* pxz = &tp.xz.data[tp.xz.index(i, k)];
        double* pyz = &tp.yz.data[tp.yz.index(j, k)];
        for (int c = 0; c < C; ++c) {
          pxy[c] = std::max(pxy[c], v[c]);
          pxz[c] = std::max(pxz[c], v[c]);
          pyz[c] = std::max(pyz[c], v[c]);
        }
      }
  return tp;
}

// Moves the plane content by displacement / pitch cells (row, col order),
// resampling bilinearly. Cells whose source falls outside the plane become zero.
inline PlaneFeature warp_plane(const PlaneFeature& feature, const Vec2& displacement_mm) {
  PlaneFeature out = feature;
  std::fill(out.data.begin(), out.data.end(), 0.0);
  const double dr = displacement_mm.x() / feature.pitch;
  const double dc = displacement_mm.y() / feature.pitch;
  if (dr == 0.0 && dc == 0.0) return feature;
  for (int r = 0; r < feature.rows; ++r)
    for (int c = 0; c < feature.cols; ++c)
      detail::accumulate_bilinear(feature, r - dr, c - dc, 1.0, &out.data[out.index(r, c)]);
  return out;
}

}  // namespace volpose
