#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/skeleton.hpp"
#include "volpose/track.hpp"

namespace volpose {

inline double mpjpe(const Pose3D& pred, const Pose3D& gt) {
  if (pred.joint_count() != gt.joint_count() || gt.joint_count() == 0)
    throw Error(ErrorKind::ShapeMismatch, "joint counts differ");
  double s = 0.0;
  for (std::size_t j = 0; j < gt.joint_count(); ++j) s += (pred.joints[j] - gt.joints[j]).norm();
  return s / static_cast<double>(gt.joint_count());
}

// Predictions carry track ids in Pose3D::id and a detection score; ground
// truth carries person ids.
struct EvalFrame {
  int frame = 0;
  std::vector<Pose3D> predictions;
  std::vector<double> scores;
  std::vector<Pose3D> ground_truth;
};

// Mean over ground-truth poses of the error to the closest prediction in the
// same frame. Ground truth in frames without predictions is skipped.
inline double pose_mpjpe(std::span<const EvalFrame> frames) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : frames) {
    if (f.predictions.empty()) continue;
    for (const auto& g : f.ground_truth) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : f.predictions) best = std::min(best, mpjpe(p, g));
      sum += best;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// All-point interpolated average precision (percent). Predictions are visited
// in descending score over all frames; each is matched to the closest still
// unmatched ground truth in its frame and counts as a true positive when that
// error is below `threshold_mm`.
inline double ap_at(std::span<const EvalFrame> frames, double threshold_mm) {
  struct Item {
    double score;
    int frame;
    Vec3 root;
    std::size_t f, p;
  };
  std::vector<Item> items;
  std::size_t total_gt = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    total_gt += frames[f].ground_truth.size();
    for (std::size_t p = 0; p < frames[f].predictions.size(); ++p)
      items.push_back({frames[f].scores.at(p), frames[f].frame, frames[f].predictions[p].root(), f, p});
  }
  if (items.empty() || total_gt == 0) return 0.0;
  // Content-based tie break keeps the result independent of input order.
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return std::tie(a.root.x(), a.root.y(), a.root.z()) < std::tie(b.root.x(), b.root.y(), b.root.z());
  });

  std::vector<std::vector<char>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) taken[f].assign(frames[f].ground_truth.size(), 0);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const auto& it : items) {
    const auto& frame = frames[it.f];
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
      if (taken[it.f][g]) continue;
      const double e = mpjpe(frame.predictions[it.p], frame.ground_truth[g]);
      if (e < best) {
        best = e;
        best_g = g;
      }
    }
    if (best < threshold_mm) {
      taken[it.f][best_g] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return 100.0 * ap;
}

// Percent of limbs whose mean endpoint error is at most half the GT limb length.
inline double pcp3d(const Pose3D& pred, const Pose3D& gt, std::span<const Bone> limbs) {
  if (pred.joint_count() != gt.joint_count()) throw Error(ErrorKind::ShapeMismatch, "joint counts differ");
  if (limbs.empty()) return 0.0;
  int correct = 0;
  for (const auto& [a, b] : limbs) {
    const double len = (gt.joints[a] - gt.joints[b]).norm();
    const double err = 0.5 * ((pred.joints[a] - gt.joints[a]).norm() + (pred.joints[b] - gt.joints[b]).norm());
    if (err <= 0.5 * len) ++correct;
  }
  return 100.0 * correct / static_cast<double>(limbs.size());
}

struct PcpReport {
  std::map<int, double> per_actor;
  double average = 0.0;
};

// Per ground-truth actor, scored against the lowest-MPJPE prediction of each
// frame; frames without a prediction count every limb as wrong.
inline PcpReport pcp3d_report(std::span<const EvalFrame> frames, std::span<const Bone> limbs) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& f : frames)
    for (const auto& g : f.ground_truth) {
      double score = 0.0;
      if (!f.predictions.empty()) {
        const Pose3D* best = &f.predictions.front();
        double best_e = std::numeric_limits<double>::infinity();
        for (const auto& p : f.predictions) {
          const double e = mpjpe(p, g);
          if (e < best_e) {
            best_e = e;
            best = &p;
          }
        }
        score = pcp3d(*best, g, limbs);
      }
      auto& [sum, n] = acc[g.id];
      sum += score;
      ++n;
    }
  PcpReport rep;
  for (const auto& [id, sn] : acc) rep.per_actor[id] = sn.first / sn.second;
  for (const auto& [id, v] : rep.per_actor) rep.average += v;
  if (!rep.per_actor.empty()) rep.average /= static_cast<double>(rep.per_actor.size());
  return rep;
}

struct MotReport {
  double mota = 100.0;
  double idf1 = 100.0;
  int gt_count = 0;
  int false_negatives = 0;
  int false_positives = 0;
  int id_switches = 0;
  int idtp = 0;
  int idfp = 0;
  int idfn = 0;
};

// CLEAR-MOT and identity F1 on root positions. Per frame, correspondences
// from the previous frame are kept while still within `threshold_mm`; the
// rest are assigned by Hungarian matching gated at the threshold.
inline MotReport mot_metrics(std::span<const EvalFrame> frames, double threshold_mm) {
  std::vector<const EvalFrame*> ordered;
  for (const auto& f : frames) ordered.push_back(&f);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const EvalFrame* a, const EvalFrame* b) { return a->frame < b->frame; });

  MotReport rep;
  int pred_count = 0;
  std::map<int, int> last_match;  // gt id -> pred id of its latest correspondence
  std::map<int, int> prev_frame;  // correspondences active in the previous frame
  std::map<std::pair<int, int>, int> overlap;  // (gt id, pred id) -> frames within threshold
  std::map<int, int> gt_frames, pred_frames;

  for (const EvalFrame* f : ordered) {
    const auto& gts = f->ground_truth;
    const auto& preds = f->predictions;
    rep.gt_count += static_cast<int>(gts.size());
    pred_count += static_cast<int>(preds.size());
    for (const auto& g : gts) ++gt_frames[g.id];
    for (const auto& p : preds) ++pred_frames[p.id];
    for (const auto& g : gts)
      for (const auto& p : preds)
        if ((g.root() - p.root()).norm() <= threshold_mm) ++overlap[{g.id, p.id}];

    std::vector<char> g_used(gts.size(), 0), p_used(preds.size(), 0);
    std::map<int, int> current;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      auto it = prev_frame.find(gts[gi].id);
      if (it == prev_frame.end()) continue;
      for (std::size_t pi = 0; pi < preds.size(); ++pi) {
        if (p_used[pi] || preds[pi].id != it->second) continue;
        if ((gts[gi].root() - preds[pi].root()).norm() <= threshold_mm) {
          g_used[gi] = p_used[pi] = 1;
          current[gts[gi].id] = preds[pi].id;
        }
        break;
      }
    }
    std::vector<std::size_t> gi_free, pi_free;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (!g_used[i]) gi_free.push_back(i);
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (!p_used[i]) pi_free.push_back(i);
    CostMatrix cost(static_cast<Eigen::Index>(gi_free.size()), static_cast<Eigen::Index>(pi_free.size()));
    for (std::size_t a = 0; a < gi_free.size(); ++a)
      for (std::size_t b = 0; b < pi_free.size(); ++b)
        cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            (gts[gi_free[a]].root() - preds[pi_free[b]].root()).norm();
    const Assignment asg = hungarian(cost, threshold_mm);
    for (const auto& [a, b] : asg.pairs) {
      const int gid = gts[gi_free[a]].id, pid = preds[pi_free[b]].id;
      g_used[gi_free[a]] = p_used[pi_free[b]] = 1;
      auto lm = last_match.find(gid);
      if (lm != last_match.end() && lm->second != pid) ++rep.id_switches;
      current[gid] = pid;
    }
    for (const auto& [gid, pid] : current) last_match[gid] = pid;
    for (char u : g_used)
      if (!u) ++rep.false_negatives;
    for (char u : p_used)
      if (!u) ++rep.false_positives;
    prev_frame = std::move(current);
  }

  const int errors = rep.false_negatives + rep.false_positives + rep.id_switches;
  if (rep.gt_count > 0)
    rep.mota = 100.0 * (1.0 - static_cast<double>(errors) / rep.gt_count);
  else
    rep.mota = errors == 0 ? 100.0 : 0.0;

  // Global id mapping maximizing identity true positives.
  std::vector<int> gids, pids;
  for (const auto& [id, n] : gt_frames) gids.push_back(id);
  for (const auto& [id, n] : pred_frames) pids.push_back(id);
  CostMatrix neg(static_cast<Eigen::Index>(gids.size()), static_cast<Eigen::Index>(pids.size()));
  for (std::size_t a = 0; a < gids.size(); ++a)
    for (std::size_t b = 0; b < pids.size(); ++b) {
      auto it = overlap.find({gids[a], pids[b]});
      neg(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = it == overlap.end() ? 0.0 : -it->second;
    }
  const Assignment ids = hungarian(neg);
  for (const auto& [a, b] : ids.pairs) rep.idtp += static_cast<int>(-neg(a, b));
  rep.idfp = pred_count - rep.idtp;
  rep.idfn = rep.gt_count - rep.idtp;
  const int denom = 2 * rep.idtp + rep.idfp + rep.idfn;
  rep.idf1 = denom > 0 ? 100.0 * 2.0 * rep.idtp / denom : 100.0;
  return rep;
}

struct ForecastSample {
  int dt_frames = 0;
  Pose3D predicted;
  Pose3D ground_truth;
};

// MPJPE over forecasts made exactly `horizon_frames` ahead.
inline double forecast_mpjpe(std::span<const ForecastSample> samples, int horizon_frames) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.dt_frames != horizon_frames) continue;
    sum += mpjpe(s.predicted, s.ground_truth);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

inline constexpr std::array<double, 4> kApThresholds = {25.0, 50.0, 100.0, 150.0};

struct MetricReport {
  double mpjpe = 0.0;
  std::array<double, 4> ap{};  // at kApThresholds
  PcpReport pcp3d;
  double mota = 0.0;
  double idf1 = 0.0;
  int id_switches = 0;
  double forecast_mpjpe = 0.0;
};

inline MetricReport evaluate(std::span<const EvalFrame> frames, std::span<const ForecastSample> forecasts,
                             int horizon_frames, double mot_threshold_mm = 500.0) {
  MetricReport rep;
  rep.mpjpe = pose_mpjpe(frames);
  for (std::size_t i = 0; i < kApThresholds.size(); ++i) rep.ap[i] = ap_at(frames, kApThresholds[i]);
  std::size_t joints = 0;
  for (const auto& f : frames)
    if (!f.ground_truth.empty()) joints = f.ground_truth.front().joint_count();
  std::vector<Bone> limbs;
  for (const auto& l : kPcpLimbs)
    if (static_cast<std::size_t>(std::max(l.first, l.second)) < joints) limbs.push_back(l);
  rep.pcp3d = pcp3d_report(frames, limbs);
  const MotReport mot = mot_metrics(frames, mot_threshold_mm);
  rep.mota = mot.mota;
  rep.idf1 = mot.idf1;
  rep.id_switches = mot.id_switches;
  rep.forecast_mpjpe = forecast_mpjpe(forecasts, horizon_frames);
  return rep;
}

}  // namespace volpose
