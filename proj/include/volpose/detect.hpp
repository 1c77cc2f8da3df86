#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/heatmap.hpp"

namespace volpose {

inline constexpr double kMinBoxSide = 200.0;

// Axis-aligned person box. Width spans x, length spans y, height spans z
// starting at the floor.
struct BBox3D {
  Vec3 center = Vec3(0, 0, 0.5 * kWorkspaceHeight);
  double width = kMinBoxSide;
  double length = kMinBoxSide;
  double height = kWorkspaceHeight;

  Box3 aligned() const {
    const Vec3 half(0.5 * width, 0.5 * length, 0.5 * height);
    return Box3(center - half, center + half);
  }
};

struct Detection {
  Vec3 root = Vec3::Zero();
  BBox3D bbox;
  double confidence = 0.0;
  int frame = 0;
};

// Per-BEV-cell box regression channels: 0 width, 1 length, 2 centerness.
using BBoxMap = PlaneFeature;

// World (first axis, second axis) coordinates of a plane cell, relative to
// the plane's anchor projected onto the same axes.
inline Vec2 plane_offset_mm(const PlaneFeature& plane, const Vec2& cell) {
  return Vec2((cell.x() - 0.5 * (plane.rows - 1)) * plane.pitch,
              (cell.y() - 0.5 * (plane.cols - 1)) * plane.pitch);
}

// Support-based box regressor: flood fills the 4-connected component of cells
// above rel_threshold * (value at the peak) and takes its extent. Empty
// support yields a kMinBoxSide square on the peak.
inline std::vector<BBox3D> regress_bboxes(const PlaneFeature& bev, std::span<const Peak> peaks,
                                          int channel = 0, double rel_threshold = 0.3) {
  std::vector<BBox3D> boxes;
  boxes.reserve(peaks.size());
  const Vec3& anchor = bev.world_anchor;
  std::vector<int> stamp(static_cast<std::size_t>(bev.rows) * bev.cols, -1);
  std::vector<std::array<int, 2>> stack;
  for (std::size_t p = 0; p < peaks.size(); ++p) {
    const int r = std::clamp(static_cast<int>(std::lround(peaks[p].position.x())), 0, bev.rows - 1);
    const int c = std::clamp(static_cast<int>(std::lround(peaks[p].position.y())), 0, bev.cols - 1);
    const double ref = bev.at(r, c, channel);
    BBox3D box;
    Vec2 center_cell(r, c);
    if (ref > 0.0) {
      const double cut = rel_threshold * ref;
      int rmin = r, rmax = r, cmin = c, cmax = c;
      stack.assign(1, {r, c});
      stamp[static_cast<std::size_t>(r) * bev.cols + c] = static_cast<int>(p);
      while (!stack.empty()) {
        const auto [rr, cc] = stack.back();
        stack.pop_back();
        rmin = std::min(rmin, rr);
        rmax = std::max(rmax, rr);
        cmin = std::min(cmin, cc);
        cmax = std::max(cmax, cc);
        constexpr int dr[4] = {-1, 1, 0, 0};
        constexpr int dc[4] = {0, 0, -1, 1};
        for (int n = 0; n < 4; ++n) {
          const int nr = rr + dr[n], nc = cc + dc[n];
          if (nr < 0 || nc < 0 || nr >= bev.rows || nc >= bev.cols) continue;
          auto& s = stamp[static_cast<std::size_t>(nr) * bev.cols + nc];
          if (s == static_cast<int>(p) || !(bev.at(nr, nc, channel) > cut)) continue;
          s = static_cast<int>(p);
          stack.push_back({nr, nc});
        }
      }
      box.width = std::max(kMinBoxSide, (rmax - rmin + 1) * bev.pitch);
      box.length = std::max(kMinBoxSide, (cmax - cmin + 1) * bev.pitch);
      center_cell = Vec2(0.5 * (rmin + rmax), 0.5 * (cmin + cmax));
    }
    const Vec2 off = plane_offset_mm(bev, center_cell);
    box.center = Vec3(anchor.x() + off.x(), anchor.y() + off.y(), 0.5 * kWorkspaceHeight);
    boxes.push_back(box);
  }
  return boxes;
}

// Replaceable box head; the default is regress_bboxes on the support channel.
using BoxRegressor = std::function<std::vector<BBox3D>(const PlaneFeature&, std::span<const Peak>)>;

struct DetectOptions {
  int k = HeatmapDefaults::k;
  int nms_radius = HeatmapDefaults::nms_radius;
  double threshold = HeatmapDefaults::threshold;
  double temperature = HeatmapDefaults::temperature;
  int root_channel = 0;
  // Channel whose BEV support defines box extents; negative uses root_channel.
  int box_channel = -1;
  // Support cut for box extents, relative to the box channel at the peak.
  double box_rel_threshold = 0.3;
  // Stand-in for the learned BEV heatmap head: H = heatmap_scale * BEV(root).
  double heatmap_scale = 1.0;
  int refine_radius = 1;
  BoxRegressor box_regressor;
};

// BEV max-projection of the root channel, greedy top-k proposals, sub-cell
// refinement, then a 1D peak along the voxel column for the height.
inline std::vector<Detection> detect_people(const FeatureVolume& volume, const VoxelGrid& grid,
                                            const DetectOptions& opts = {}, int frame = 0) {
  if (opts.root_channel < 0 || opts.root_channel >= volume.channels)
    throw Error(ErrorKind::ChannelMismatch, "volume has no root-joint channel");
  const PlaneFeature bev = bev_project(volume);
  Heatmap2D heat = channel_of(bev, opts.root_channel);
  for (auto& v : heat.data) v *= opts.heatmap_scale;

  std::vector<Peak> peaks = top_k_peaks(heat, opts.k, opts.nms_radius, opts.threshold);
  std::vector<BBox3D> boxes;
  if (opts.box_regressor) {
    boxes = opts.box_regressor(bev, peaks);
  } else {
    const int box_channel = opts.box_channel < 0 ? opts.root_channel : opts.box_channel;
    boxes = regress_bboxes(bev, peaks, box_channel, opts.box_rel_threshold);
  }

  std::vector<Detection> out;
  const int nz = grid.dims[2];
  for (std::size_t p = 0; p < peaks.size(); ++p) {
    const int i = static_cast<int>(peaks[p].position.x());
    const int j = static_cast<int>(peaks[p].position.y());
    Heatmap1D column(static_cast<std::size_t>(nz));
    double top = 0.0;
    for (int k = 0; k < nz; ++k) {
      column.data[k] = volume.at(i, j, k, opts.root_channel);
      top = std::max(top, column.data[k]);
    }
    if (!(top > 0.0)) continue;
    for (auto& v : column.data) v /= top;
    const Peak1D z = peak_1d(column, opts.temperature);
    const Vec2 cell = refine_peak(heat, peaks[p].position, opts.refine_radius, opts.temperature);

    Detection det;
    det.root = grid.to_world(Vec3(cell.x(), cell.y(), z.position));
    det.bbox = boxes[p];
    det.confidence = std::clamp(peaks[p].confidence, 0.0, 1.0);
    det.frame = frame;
    out.push_back(det);
  }
  return out;
}

struct DetectionHeads {
  Heatmap2D root_map;                 // H
  std::vector<Heatmap1D> heights;     // H_k, one per proposal
  BBoxMap boxes;                      // S
  std::vector<std::array<int, 2>> box_cells;  // U, cells where S is supervised
};

struct DetectionLoss {
  double l2d = 0.0;
  double l1d = 0.0;
  double lbbox = 0.0;
  double total = 0.0;
};

// l2d and l1d are squared differences summed per cell; lbbox is L1 over the
// supervised cells U of the ground truth.
inline DetectionLoss detection_loss(const DetectionHeads& pred, const DetectionHeads& gt) {
  if (pred.root_map.rows != gt.root_map.rows || pred.root_map.cols != gt.root_map.cols)
    throw Error(ErrorKind::ShapeMismatch, "2D heatmap shapes differ");
  if (pred.heights.size() != gt.heights.size())
    throw Error(ErrorKind::ShapeMismatch, "proposal counts differ");
  if (!pred.boxes.same_shape(gt.boxes)) throw Error(ErrorKind::ShapeMismatch, "box map shapes differ");

  DetectionLoss loss;
  for (std::size_t i = 0; i < gt.root_map.data.size(); ++i) {
    const double d = pred.root_map.data[i] - gt.root_map.data[i];
    loss.l2d += d * d;
  }
  for (std::size_t k = 0; k < gt.heights.size(); ++k) {
    if (pred.heights[k].size() != gt.heights[k].size())
      throw Error(ErrorKind::ShapeMismatch, "1D heatmap lengths differ");
    for (std::size_t z = 0; z < gt.heights[k].size(); ++z) {
      const double d = pred.heights[k].data[z] - gt.heights[k].data[z];
      loss.l1d += d * d;
    }
  }
  for (const auto& [r, c] : gt.box_cells) {
    if (r < 0 || c < 0 || r >= gt.boxes.rows || c >= gt.boxes.cols)
      throw Error(ErrorKind::ShapeMismatch, "supervised box cell outside the map");
    for (int ch = 0; ch < gt.boxes.channels; ++ch)
      loss.lbbox += std::abs(pred.boxes.at(r, c, ch) - gt.boxes.at(r, c, ch));
  }
  loss.total = loss.l2d + loss.l1d + loss.lbbox;
  return loss;
}

inline DetectionLoss detection_loss(std::span<const DetectionHeads> pred, std::span<const DetectionHeads> gt) {
  if (pred.size() != gt.size()) throw Error(ErrorKind::LengthMismatch, "sequence lengths differ");
  DetectionLoss sum;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const auto l = detection_loss(pred[t], gt[t]);
    sum.l2d += l.l2d;
    sum.l1d += l.l1d;
    sum.lbbox += l.lbbox;
  }
  sum.total = sum.l2d + sum.l1d + sum.lbbox;
  return sum;
}

}  // namespace volpose
