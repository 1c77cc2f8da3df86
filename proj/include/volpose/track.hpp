#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "volpose/detect.hpp"
#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/temporal.hpp"

namespace volpose {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Constant-velocity state (x, y, z, vx, vy, vz) in mm and mm/frame.
struct KalmanState {
  Vec6 mean = Vec6::Zero();
  Mat6 cov = Mat6::Identity();
  double q = 1e-2;    // process noise per frame
  double r = 400.0;   // measurement variance, (20 mm)^2

  Vec3 position() const { return mean.head<3>(); }
  Vec3 velocity() const { return mean.tail<3>(); }
};

inline constexpr double kInitialVelocityVariance = 1e4;

inline KalmanState kalman_init(const Vec3& position, double q = 1e-2, double r = 400.0,
                               double velocity_variance = kInitialVelocityVariance) {
  KalmanState s;
  s.mean.head<3>() = position;
  s.cov.setZero();
  s.cov.diagonal() << r, r, r, velocity_variance, velocity_variance, velocity_variance;
  s.q = q;
  s.r = r;
  return s;
}

inline void check_covariance(const Mat6& cov) {
  if (!cov.allFinite()) throw Error(ErrorKind::NonPSDCovariance, "covariance has non-finite entries");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
    throw Error(ErrorKind::NonPSDCovariance, "covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat6> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-9)
    throw Error(ErrorKind::NonPSDCovariance, "covariance has a negative eigenvalue");
}

inline KalmanState kalman_predict(const KalmanState& s, double dt = 1.0) {
  if (!(dt >= 1.0)) throw Error(ErrorKind::ShapeMismatch, "prediction step must be at least one frame");
  check_covariance(s.cov);
  Mat6 F = Mat6::Identity();
  F.topRightCorner<3, 3>() = dt * Eigen::Matrix3d::Identity();
  KalmanState out = s;
  out.mean = F * s.mean;
  out.cov = F * s.cov * F.transpose() + (s.q * dt) * Mat6::Identity();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

// Standard update with H = [I 0], Joseph-form covariance.
inline KalmanState kalman_update(const KalmanState& s, const Vec3& measurement) {
  check_covariance(s.cov);
  Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
  H.leftCols<3>().setIdentity();
  const Eigen::Matrix3d Rm = s.r * Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d S = H * s.cov * H.transpose() + Rm;
  const Eigen::Matrix<double, 6, 3> K = s.cov * H.transpose() * S.inverse();
  KalmanState out = s;
  out.mean = s.mean + K * (measurement - H * s.mean);
  const Mat6 A = Mat6::Identity() - K * H;
  out.cov = A * s.cov * A.transpose() + K * Rm * K.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

enum class TrackStatus { tentative, confirmed, dead };

struct Track {
  int id = 0;
  KalmanState kalman;
  TemporalState temporal;
  BBox3D bbox;
  int hits = 0;
  int misses = 0;
  TrackStatus status = TrackStatus::tentative;
};

enum class CostKind { center_distance, bev_iou };

struct TrackerConfig {
  double gate_mm = 500.0;
  int max_age = 3;
  int min_hits = 2;
  double q = 1e-2;
  double r = 400.0;
  CostKind cost = CostKind::center_distance;
  // Largest accepted 1 - IoU when cost == bev_iou.
  double iou_gate = 0.9;
};

using CostMatrix = Eigen::MatrixXd;

// A(i, j) = distance (mm) from detection i's root to track j's predicted position.
inline CostMatrix cost_matrix(std::span<const Detection> dets, std::span<const Track> tracks) {
  CostMatrix A(static_cast<Eigen::Index>(dets.size()), static_cast<Eigen::Index>(tracks.size()));
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = 0; j < tracks.size(); ++j)
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (dets[i].root - tracks[j].kalman.position()).norm();
  return A;
}

// Alternative cost: 1 - IoU of the top-down boxes, the track's box moved to
// its predicted position.
inline CostMatrix iou_cost_matrix(std::span<const Detection> dets, std::span<const Track> tracks) {
  CostMatrix A(static_cast<Eigen::Index>(dets.size()), static_cast<Eigen::Index>(tracks.size()));
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = 0; j < tracks.size(); ++j) {
      const auto& a = dets[i].bbox;
      const Vec3 pc = tracks[j].kalman.position();
      const auto& b = tracks[j].bbox;
      const double ix = std::max(0.0, std::min(a.center.x() + 0.5 * a.width, pc.x() + 0.5 * b.width) -
                                          std::max(a.center.x() - 0.5 * a.width, pc.x() - 0.5 * b.width));
      const double iy = std::max(0.0, std::min(a.center.y() + 0.5 * a.length, pc.y() + 0.5 * b.length) -
                                          std::max(a.center.y() - 0.5 * a.length, pc.y() - 0.5 * b.length));
      const double inter = ix * iy;
      const double uni = a.width * a.length + b.width * b.length - inter;
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = uni > 0.0 ? 1.0 - inter / uni : 1.0;
    }
  return A;
}

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double total_cost = 0.0;
};

namespace detail {

// Shortest augmenting path (Jonker-Volgenant style potentials) for an
// n x m cost matrix with n <= m. Returns the column assigned to every row.
inline std::vector<int> solve_assignment(const CostMatrix& cost) {
  const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

// Minimum-total-cost one-to-one assignment; pairs costing more than `gate`
// are dropped afterwards.
inline Assignment hungarian(const CostMatrix& cost, double gate = std::numeric_limits<double>::infinity()) {
  Assignment out;
  const int n = static_cast<int>(cost.rows()), m = static_cast<int>(cost.cols());
  std::vector<int> row_to_col(n, -1);
  if (n > 0 && m > 0) {
    if (n <= m) {
      row_to_col = detail::solve_assignment(cost);
    } else {
      const std::vector<int> col_to_row = detail::solve_assignment(cost.transpose());
      for (int j = 0; j < m; ++j) row_to_col[col_to_row[j]] = j;
    }
  }
  std::vector<char> col_used(m, 0);
  for (int i = 0; i < n; ++i) {
    const int j = row_to_col[i];
    if (j >= 0 && cost(i, j) <= gate) {
      out.pairs.emplace_back(i, j);
      out.total_cost += cost(i, j);
      col_used[j] = 1;
    } else {
      out.unmatched_rows.push_back(i);
    }
  }
  for (int j = 0; j < m; ++j)
    if (!col_used[j]) out.unmatched_cols.push_back(j);
  return out;
}

struct TrackerStep {
  // Track id assigned to every input detection, in input order.
  std::vector<int> detection_ids;
  std::vector<int> unmatched_tracks;
};

// One SORT step: predict, associate on root distance, update matches, age
// unmatched tracks, spawn tracks for unmatched detections. `tracks` is kept
// sorted by id, so cost ties resolve toward the older track.
inline TrackerStep step_tracker(std::vector<Track>& tracks, std::span<const Detection> dets,
                                const TrackerConfig& cfg, int& next_id) {
  for (auto& t : tracks) t.kalman = kalman_predict(t.kalman, 1.0);

  const bool iou = cfg.cost == CostKind::bev_iou;
  const CostMatrix cost = iou ? iou_cost_matrix(dets, tracks) : cost_matrix(dets, tracks);
  const Assignment a = hungarian(cost, iou ? cfg.iou_gate : cfg.gate_mm);

  TrackerStep step;
  step.detection_ids.assign(dets.size(), -1);
  for (const auto& [d, t] : a.pairs) {
    Track& tr = tracks[t];
    tr.kalman = kalman_update(tr.kalman, dets[d].root);
    tr.bbox = dets[d].bbox;
    ++tr.hits;
    tr.misses = 0;
    if (tr.hits >= cfg.min_hits) tr.status = TrackStatus::confirmed;
    step.detection_ids[d] = tr.id;
  }
  for (int t : a.unmatched_cols) {
    Track& tr = tracks[t];
    ++tr.misses;
    step.unmatched_tracks.push_back(tr.id);
    if (tr.misses > cfg.max_age) tr.status = TrackStatus::dead;
  }
  std::erase_if(tracks, [](const Track& t) { return t.status == TrackStatus::dead; });
  for (int d : a.unmatched_rows) {
    Track tr;
    tr.id = next_id++;
    tr.kalman = kalman_init(dets[d].root, cfg.q, cfg.r);
    tr.bbox = dets[d].bbox;
    tr.hits = 1;
    tr.status = cfg.min_hits <= 1 ? TrackStatus::confirmed : TrackStatus::tentative;
    step.detection_ids[d] = tr.id;
    tracks.push_back(std::move(tr));
  }
  return step;
}

// Owns the track list and id counter across frames.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(cfg) {}

  TrackerStep step(std::span<const Detection> dets) {
    ++frames_;
    return step_tracker(tracks_, dets, cfg_, next_id_);
  }

  const std::vector<Track>& tracks() const { return tracks_; }
  std::vector<Track>& tracks() { return tracks_; }
  const TrackerConfig& config() const { return cfg_; }
  int frames() const { return frames_; }

  Track* find(int id) {
    auto it = std::find_if(tracks_.begin(), tracks_.end(), [id](const Track& t) { return t.id == id; });
    return it == tracks_.end() ? nullptr : &*it;
  }

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  int frames_ = 0;
};

}  // namespace volpose
