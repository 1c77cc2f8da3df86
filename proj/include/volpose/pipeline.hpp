#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "volpose/detect.hpp"
#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/io.hpp"
#include "volpose/metrics.hpp"
#include "volpose/posecube.hpp"
#include "volpose/simkit.hpp"
#include "volpose/temporal.hpp"
#include "volpose/track.hpp"

namespace volpose {

struct RunConfig {
  std::string rig_path;    // empty: synthetic rig
  std::string scene_path;  // empty: generate from `scene`
  std::string out_dir = "out";
  SceneConfig scene;
  int cameras = 5;  // synthetic rig size
  int views = 0;    // cameras used for inference, evenly spaced; 0 = all
  double pitch_mm = 100.0;
  int history = 3;
  double gate_gain = 0.0;
  int forecast_steps = 2;
  int forecast_stride = 3;
  bool warp = true;
  bool mean_over_views = false;
  TrackerConfig tracker;
  DetectOptions detect;
  PersonCubeOptions cube;
  int threads = 1;
  bool svg = false;
  int benchmark_frames = 100;

  RunConfig() {
    detect.threshold = 0.6;
    detect.box_rel_threshold = 0.7;
  }
};

inline void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& key, const std::string& what) {
    throw Error(ErrorKind::ConfigError, "'" + key + "' " + what);
  };
  if (!cfg.rig_path.empty() && !std::filesystem::exists(cfg.rig_path))
    fail("rig", "file not found: " + cfg.rig_path);
  if (!cfg.scene_path.empty() && !std::filesystem::exists(cfg.scene_path))
    fail("scene", "file not found: " + cfg.scene_path);
  if (cfg.cameras < 1 || cfg.cameras > 5) fail("cameras", "must be in [1, 5]");
  if (cfg.views < 0) fail("views", "must be >= 0");
  if (!(cfg.pitch_mm > 0.0)) fail("pitch_mm", "must be positive");
  if (cfg.history < 1) fail("history", "must be >= 1");
  if (cfg.forecast_steps < 0) fail("forecast_steps", "must be >= 0");
  if (cfg.forecast_stride < 1) fail("forecast_stride", "must be >= 1");
  if (!(cfg.tracker.gate_mm > 0.0)) fail("gate_mm", "must be positive");
  if (cfg.tracker.max_age < 0) fail("max_age", "must be >= 0");
  if (cfg.tracker.min_hits < 1) fail("min_hits", "must be >= 1");
  if (cfg.detect.k < 1) fail("detect_k", "must be >= 1");
  if (!(cfg.detect.temperature > 0.0)) fail("temperature", "must be positive");
  if (cfg.cube.voxels < 2) fail("cube_voxels", "must be >= 2");
  if (!(cfg.cube.side > 0.0)) fail("cube_side_mm", "must be positive");
  if (cfg.threads < 1) fail("threads", "must be >= 1");
  if (cfg.benchmark_frames < 1) fail("benchmark_frames", "must be >= 1");
  try {
    validate(cfg.scene);
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, std::string("scene settings: ") + e.what());
  }
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::ConfigError, "'" + key + "' expects a number, got '" + v + "'");
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d)) throw Error(ErrorKind::ConfigError, "'" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(d);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::ConfigError, "'" + key + "' expects a boolean, got '" + v + "'");
}

// "person:first:last[,person:first:last...]"
inline std::vector<Dropout> parse_dropouts(const std::string& key, const std::string& v) {
  std::vector<Dropout> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    Dropout d;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> d.person >> c1 >> d.first >> c2 >> d.last) || c1 != ':' || c2 != ':' || !is.eof())
      throw Error(ErrorKind::ConfigError, "'" + key + "' expects person:first:last, got '" + item + "'");
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

// Applies one key = value setting. Keys may carry a section prefix
// ("scene.persons"); only the last component is significant.
inline void apply_setting(RunConfig& cfg, std::string key, std::string value) {
  if (const auto dot = key.rfind('.'); dot != std::string::npos) key = key.substr(dot + 1);
  std::replace(key.begin(), key.end(), '-', '_');
  value = detail::trim(value);
  if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
    value = value.substr(1, value.size() - 2);
  using namespace detail;
  const std::string& k = key;
  const std::string& v = value;
  if (k == "rig") cfg.rig_path = v;
  else if (k == "scene") cfg.scene_path = v;
  else if (k == "out" || k == "out_dir") cfg.out_dir = v;
  else if (k == "cameras") cfg.cameras = parse_int(k, v);
  else if (k == "views") cfg.views = parse_int(k, v);
  else if (k == "pitch_mm") cfg.pitch_mm = parse_double(k, v);
  else if (k == "history") cfg.history = parse_int(k, v);
  else if (k == "gate_gain") cfg.gate_gain = parse_double(k, v);
  else if (k == "forecast_steps") cfg.forecast_steps = parse_int(k, v);
  else if (k == "forecast_stride") cfg.forecast_stride = parse_int(k, v);
  else if (k == "warp") cfg.warp = parse_bool(k, v);
  else if (k == "mean_over_views") cfg.mean_over_views = parse_bool(k, v);
  else if (k == "threads") cfg.threads = parse_int(k, v);
  else if (k == "svg") cfg.svg = parse_bool(k, v);
  else if (k == "benchmark_frames") cfg.benchmark_frames = parse_int(k, v);
  else if (k == "seed") cfg.scene.seed = static_cast<std::uint64_t>(parse_double(k, v));
  else if (k == "persons") cfg.scene.persons = parse_int(k, v);
  else if (k == "frames") cfg.scene.frames = parse_int(k, v);
  else if (k == "fps") cfg.scene.fps = parse_double(k, v);
  else if (k == "motion") {
    try {
      cfg.scene.motion = parse_motion(v);
    } catch (const Error&) {
      throw Error(ErrorKind::ConfigError, "'motion' expects stationary, constant_velocity or crossing, got '" + v + "'");
    }
  }
  else if (k == "joints") cfg.scene.joints = parse_int(k, v);
  else if (k == "sigma_px") cfg.scene.sigma_px = parse_double(k, v);
  else if (k == "jitter_px") cfg.scene.noise.jitter_px = parse_double(k, v);
  else if (k == "false_positive_rate") cfg.scene.noise.false_positive_rate = parse_double(k, v);
  else if (k == "miss_rate") cfg.scene.noise.miss_rate = parse_double(k, v);
  else if (k == "speed_mm") cfg.scene.speed_mm = parse_double(k, v);
  else if (k == "spacing_mm") cfg.scene.spacing_mm = parse_double(k, v);
  else if (k == "closest_mm") cfg.scene.closest_mm = parse_double(k, v);
  else if (k == "dropouts") cfg.scene.dropouts = parse_dropouts(k, v);
  else if (k == "gate_mm") cfg.tracker.gate_mm = parse_double(k, v);
  else if (k == "max_age") cfg.tracker.max_age = parse_int(k, v);
  else if (k == "min_hits") cfg.tracker.min_hits = parse_int(k, v);
  else if (k == "kalman_q") cfg.tracker.q = parse_double(k, v);
  else if (k == "kalman_r") cfg.tracker.r = parse_double(k, v);
  else if (k == "cost") {
    if (v == "distance") cfg.tracker.cost = CostKind::center_distance;
    else if (v == "iou") cfg.tracker.cost = CostKind::bev_iou;
    else throw Error(ErrorKind::ConfigError, "'cost' expects distance or iou, got '" + v + "'");
  }
  else if (k == "detect_threshold") cfg.detect.threshold = parse_double(k, v);
  else if (k == "box_threshold") cfg.detect.box_rel_threshold = parse_double(k, v);
  else if (k == "detect_k") cfg.detect.k = parse_int(k, v);
  else if (k == "nms_radius") cfg.detect.nms_radius = parse_int(k, v);
  else if (k == "temperature") cfg.detect.temperature = cfg.cube.temperature = parse_double(k, v);
  else if (k == "cube_side_mm") cfg.cube.side = parse_double(k, v);
  else if (k == "cube_voxels") cfg.cube.voxels = parse_int(k, v);
  else if (k == "mask_to_bbox") cfg.cube.mask_to_bbox = parse_bool(k, v);
  else throw Error(ErrorKind::ConfigError, "unknown key '" + key + "'");
}

// TOML-like file: `key = value` lines, `#` comments, optional [section] headers.
inline void load_config(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file '" + path.string() + "'");
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::ConfigError, where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    try {
      apply_setting(cfg, section.empty() ? key : section + "." + key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorKind::ConfigError, where + ": " + std::string(e.what()));
    }
  }
}

// Keeps freed per-frame buffers in the heap instead of returning them to the
// OS, avoiding page-fault churn on multi-megabyte volumes. glibc only.
inline void retain_heap_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

// Indices of `n` cameras spread evenly over a rig of `total`.
inline std::vector<std::size_t> spread_indices(int total, int n) {
  if (n <= 0 || n >= total) n = total;
  std::vector<std::size_t> idx;
  for (int i = 0; i < n; ++i) idx.push_back(static_cast<std::size_t>(i * total / n));
  return idx;
}

// Detection input per view: channel 0 is the root joint, channel 1 the
// per-pixel max over all joints (body support for box extents).
inline std::vector<PlaneFeature> detection_views(std::span<const PlaneFeature> views, int root_joint = kMidHip) {
  std::vector<PlaneFeature> out;
  out.reserve(views.size());
  for (const auto& v : views) {
    if (root_joint >= v.channels) throw Error(ErrorKind::ChannelMismatch, "views lack the root-joint channel");
    PlaneFeature d(PlaneAxes::image, v.rows, v.cols, 2);
    const std::size_t n = static_cast<std::size_t>(v.rows) * v.cols;
    const int C = v.channels;
    const double* src = v.data.data();
    double* dst = d.data.data();
    for (std::size_t p = 0; p < n; ++p, src += C, dst += 2) {
      double m = src[0];
      for (int c = 1; c < C; ++c) m = src[c] > m ? src[c] : m;
      dst[0] = src[root_joint];
      dst[1] = m;
    }
    out.push_back(std::move(d));
  }
  return out;
}

struct ForecastResult {
  int dt_frames = 0;
  Pose3D joints;
};

struct TrackResult {
  int tid = 0;
  Vec3 root = Vec3::Zero();
  Pose3D pose;
  double conf = 0.0;
  std::vector<ForecastResult> forecast;
};

struct FrameResult {
  int t = 0;
  std::vector<TrackResult> tracks;
};

struct StageTimes {
  double unprojection = 0.0;
  double detection = 0.0;
  double tracking = 0.0;
  double temporal_decode = 0.0;
  double total() const { return unprojection + detection + tracking + temporal_decode; }
};

struct PipelineOptions {
  DetectOptions detect;
  PersonCubeOptions cube;
  TrackerConfig tracker;
  int history = 3;
  double gate_gain = 0.0;
  int forecast_steps = 2;
  int forecast_stride = 3;
  bool warp = true;
  bool mean_over_views = false;
  int threads = 1;
};

inline PipelineOptions pipeline_options(const RunConfig& cfg) {
  PipelineOptions o;
  o.detect = cfg.detect;
  o.cube = cfg.cube;
  o.cube.threads = cfg.threads;
  o.tracker = cfg.tracker;
  o.history = cfg.history;
  o.gate_gain = cfg.gate_gain;
  o.forecast_steps = cfg.forecast_steps;
  o.forecast_stride = cfg.forecast_stride;
  o.warp = cfg.warp;
  o.mean_over_views = cfg.mean_over_views;
  o.threads = cfg.threads;
  return o;
}

// Causal per-frame loop: unproject, detect, track, per-person cube, temporal
// fusion, decode, forecast.
class Pipeline {
 public:
  Pipeline(CameraRig rig, VoxelGrid workspace, PipelineOptions opts)
      : rig_(std::move(rig)), grid_(workspace), opts_(std::move(opts)), tracker_(opts_.tracker) {
    validate(rig_);
    validate(grid_);
    opts_.detect.root_channel = 0;
    opts_.detect.box_channel = 1;
    opts_.detect.heatmap_scale = 1.0 / static_cast<double>(rig_.size());
  }

  FrameResult process(int t, std::span<const PlaneFeature> views) {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::time_point a, clock::time_point b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    FrameResult out;
    out.t = t;
    times_ = {};

    auto t0 = clock::now();
    const std::vector<PlaneFeature> dviews = detection_views(views);
    UnprojectOptions u;
    u.threads = opts_.threads;
    u.mean_over_valid_views = opts_.mean_over_views;
    const FeatureVolume volume = unproject_features(dviews, rig_, grid_, u);
    auto t1 = clock::now();
    const std::vector<Detection> dets = detect_people(volume, grid_, opts_.detect, t);
    auto t2 = clock::now();
    const TrackerStep step = tracker_.step(dets);
    auto t3 = clock::now();

    if (!views.empty() && (!gru_ || gru_->channels != views.front().channels))
      gru_ = memory_gru(views.front().channels, opts_.history, 1.0, opts_.gate_gain);
    const bool warm_up = tracker_.frames() <= opts_.tracker.min_hits;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      Track* track = tracker_.find(step.detection_ids[d]);
      if (!track) continue;
      const PersonCube cube = build_person_cube(views, rig_, dets[d], opts_.cube);
      const TriPlane planes = triplane_project(cube.cube);
      const PoseEmbedding obs = encode_observation(planes, dets[d].root);
      const FuseResult fused = temporal_fuse(track->temporal, obs, *gru_, TemporalOptions{opts_.warp});
      track->temporal = fused.state;
      if (!(track->status == TrackStatus::confirmed || warm_up)) continue;

      TrackResult r;
      r.tid = track->id;
      r.root = dets[d].root;
      r.conf = dets[d].confidence;
      r.pose = decode_planes(fused.fused.planes, fused.fused.anchor, opts_.cube.temperature);
      r.pose.id = track->id;
      const auto rollout = forecast(track->temporal, *gru_, opts_.forecast_steps, opts_.forecast_stride,
                                    track->kalman.position(), track->kalman.velocity());
      for (std::size_t s = 0; s < rollout.size(); ++s) {
        ForecastResult f;
        f.dt_frames = static_cast<int>(s + 1) * opts_.forecast_stride;
        f.joints = decode_planes(rollout[s].planes, rollout[s].anchor, opts_.cube.temperature);
        f.joints.id = track->id;
        r.forecast.push_back(std::move(f));
      }
      out.tracks.push_back(std::move(r));
    }
    std::sort(out.tracks.begin(), out.tracks.end(), [](const TrackResult& a, const TrackResult& b) {
      return a.tid < b.tid;
    });
    auto t4 = clock::now();
    times_ = {ms(t0, t1), ms(t1, t2), ms(t2, t3), ms(t3, t4)};
    return out;
  }

  const StageTimes& last_times() const { return times_; }
  const Tracker& tracker() const { return tracker_; }
  const CameraRig& rig() const { return rig_; }
  const VoxelGrid& grid() const { return grid_; }

 private:
  CameraRig rig_;
  VoxelGrid grid_;
  PipelineOptions opts_;
  Tracker tracker_;
  std::optional<GruParams> gru_;
  StageTimes times_;
};

// ---- results.jsonl ----

inline json pose_to_json(const Pose3D& p) {
  json joints = json::array();
  for (const auto& j : p.joints) joints.push_back(detail::to_json(j));
  return joints;
}

inline json frame_to_json(const FrameResult& f) {
  json tracks = json::array();
  for (const auto& tr : f.tracks) {
    json fc = json::array();
    for (const auto& s : tr.forecast) fc.push_back({{"dt_frames", s.dt_frames}, {"joints", pose_to_json(s.joints)}});
    tracks.push_back({{"tid", tr.tid},
                      {"root", detail::to_json(tr.root)},
                      {"joints", pose_to_json(tr.pose)},
                      {"conf", tr.conf},
                      {"forecast", fc}});
  }
  return {{"t", f.t}, {"tracks", tracks}};
}

inline void write_results(const std::filesystem::path& path, std::span<const FrameResult> frames) {
  auto out = detail::open_out(path);
  for (const auto& f : frames) out << frame_to_json(f).dump() << '\n';
}

inline std::vector<FrameResult> read_results(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<FrameResult> frames;
  std::string line;
  int lineno = 0;
  auto pose_from = [](const json& arr, int id, const std::string& where) {
    Pose3D p;
    p.id = id;
    for (const auto& j : arr) {
      p.joints.push_back(detail::vec3_from_json(j, where));
      p.confidence.push_back(1.0);
    }
    return p;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      FrameResult f;
      f.t = j.at("t").get<int>();
      for (const auto& tj : j.at("tracks")) {
        TrackResult tr;
        tr.tid = tj.at("tid").get<int>();
        tr.root = detail::vec3_from_json(tj.at("root"), where);
        tr.pose = pose_from(tj.at("joints"), tr.tid, where);
        tr.conf = tj.at("conf").get<double>();
        for (const auto& fj : tj.value("forecast", json::array()))
          tr.forecast.push_back({fj.at("dt_frames").get<int>(), pose_from(fj.at("joints"), tr.tid, where)});
        f.tracks.push_back(std::move(tr));
      }
      frames.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::IoError, where + ": " + e.what());
    }
  }
  return frames;
}

// ---- evaluation ----

// Scores results against ground truth. A forecast issued at t by a track is
// compared with the ground-truth person closest to the track's root at t,
// within `mot_threshold_mm`, at frame t + dt.
inline MetricReport evaluate_results(std::span<const FrameResult> results, const SceneSequence& scene,
                                     int horizon_frames, double mot_threshold_mm = 500.0) {
  std::vector<EvalFrame> frames;
  std::vector<ForecastSample> samples;
  auto gt_at = [&](int t) -> const std::vector<Pose3D>* {
    return t >= 0 && t < static_cast<int>(scene.frames.size()) ? &scene.frames[t] : nullptr;
  };
  for (const auto& r : results) {
    const auto* gt = gt_at(r.t);
    if (!gt) continue;
    EvalFrame f;
    f.frame = r.t;
    f.ground_truth = *gt;
    for (const auto& tr : r.tracks) {
      f.predictions.push_back(tr.pose);
      f.scores.push_back(tr.conf);
      int best = -1;
      double best_d = mot_threshold_mm;
      for (const auto& g : *gt) {
        const double d = (g.root() - tr.pose.root()).norm();
        if (d <= best_d) {
          best_d = d;
          best = g.id;
        }
      }
      if (best < 0) continue;
      for (const auto& fc : tr.forecast) {
        const auto* fut = gt_at(r.t + fc.dt_frames);
        if (!fut) continue;
        for (const auto& g : *fut)
          if (g.id == best) samples.push_back({fc.dt_frames, fc.joints, g});
      }
    }
    frames.push_back(std::move(f));
  }
  return evaluate(frames, samples, horizon_frames, mot_threshold_mm);
}

// ---- latency statistics ----

struct StageStats {
  std::string stage;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
};

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::vector<StageStats> stage_stats(std::span<const StageTimes> times) {
  std::vector<StageStats> out;
  auto add = [&](const char* name, auto get) {
    std::vector<double> v;
    double sum = 0.0;
    for (const auto& t : times) {
      v.push_back(get(t));
      sum += v.back();
    }
    out.push_back({name, percentile(v, 0.5), percentile(v, 0.95), v.empty() ? 0.0 : sum / v.size()});
  };
  add("unprojection", [](const StageTimes& t) { return t.unprojection; });
  add("detection", [](const StageTimes& t) { return t.detection; });
  add("tracking", [](const StageTimes& t) { return t.tracking; });
  add("temporal_decode", [](const StageTimes& t) { return t.temporal_decode; });
  add("end_to_end", [](const StageTimes& t) { return t.total(); });
  return out;
}

inline void write_stage_stats(const std::filesystem::path& path, std::span<const StageStats> stats,
                              std::size_t frames) {
  auto out = detail::open_out(path);
  out << "stage,frames,median_ms,p95_ms,mean_ms\n" << std::fixed << std::setprecision(4);
  for (const auto& s : stats)
    out << s.stage << ',' << frames << ',' << s.median_ms << ',' << s.p95_ms << ',' << s.mean_ms << '\n';
}

// ---- SVG ----

inline void write_bev_svg(const std::filesystem::path& path, std::span<const FrameResult> results,
                          const SceneSequence& scene, const VoxelGrid& grid) {
  const Box3 b = grid.bounds();
  const double w = b.max().x() - b.min().x(), h = b.max().y() - b.min().y();
  const double scale = 600.0 / std::max(w, h);
  auto px = [&](const Vec3& p) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << (p.x() - b.min().x()) * scale << ','
       << (b.max().y() - p.y()) * scale;
    return os.str();
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::map<int, std::vector<Vec3>> gt, tracks;
  for (const auto& f : scene.frames)
    for (const auto& p : f) gt[p.id].push_back(p.root());
  for (const auto& f : results)
    for (const auto& t : f.tracks) tracks[t.tid].push_back(t.root);
  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::ceil(w * scale) << "\" height=\""
      << std::ceil(h * scale) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& [id, pts] : gt) {
    out << "<polyline fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"4\" points=\"";
    for (const auto& p : pts) out << px(p) << ' ';
    out << "\"/>\n";
  }
  for (const auto& [id, pts] : tracks) {
    out << "<polyline fill=\"none\" stroke=\"" << palette[id % 10] << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : pts) out << px(p) << ' ';
    out << "\"><title>track " << id << "</title></polyline>\n";
  }
  out << "</svg>\n";
}

inline void write_skeleton_svg(const std::filesystem::path& path, const FrameResult& result,
                               const std::vector<Pose3D>& gt, const Camera& cam) {
  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cam.width << "\" height=\"" << cam.height
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"black\"/>\n";
  auto draw = [&](const Pose3D& p, const char* color) {
    for (const auto& [a, c] : kBones) {
      if (a >= static_cast<int>(p.joint_count()) || c >= static_cast<int>(p.joint_count())) continue;
      const Vec3 pa = cam.R * p.joints[a] + cam.t, pc = cam.R * p.joints[c] + cam.t;
      if (pa.z() < kMinDepth || pc.z() < kMinDepth) continue;
      const Vec2 ua = project_point(cam, p.joints[a]).pixel, uc = project_point(cam, p.joints[c]).pixel;
      out << std::fixed << std::setprecision(1) << "<line x1=\"" << ua.x() << "\" y1=\"" << ua.y() << "\" x2=\""
          << uc.x() << "\" y2=\"" << uc.y() << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    }
  };
  for (const auto& p : gt) draw(p, "#888888");
  for (const auto& t : result.tracks) draw(t.pose, "#33ff66");
  out << "</svg>\n";
}

// ---- run / benchmark / ablate ----

struct RunOutput {
  CameraRig rig;  // full rig
  VoxelGrid grid;
  SceneSequence scene;
  std::vector<FrameResult> frames;
  std::vector<StageTimes> timings;
  MetricReport report;
};

inline CameraRig load_rig(const RunConfig& cfg) {
  return cfg.rig_path.empty() ? default_rig(cfg.cameras, cfg.scene.fps) : read_rig(cfg.rig_path);
}

inline SceneSequence load_scene(const RunConfig& cfg, const VoxelGrid& grid, double fps) {
  return cfg.scene_path.empty() ? generate_scene(cfg.scene, grid) : read_scene(cfg.scene_path, fps);
}

inline int forecast_horizon(const RunConfig& cfg) { return cfg.forecast_steps * cfg.forecast_stride; }

// Runs the pipeline in memory; `frame_limit` < 0 processes the whole scene.
inline RunOutput run_pipeline(const RunConfig& cfg, int frame_limit = -1) {
  validate(cfg);
  RunOutput out;
  out.rig = load_rig(cfg);
  out.grid = build_workspace(out.rig, cfg.pitch_mm);
  out.scene = load_scene(cfg, out.grid, out.rig.fps);
  SceneConfig render = cfg.scene;
  render.joints = out.scene.joints;

  const auto active = spread_indices(static_cast<int>(out.rig.size()), cfg.views);
  Pipeline pipe(select_cameras(out.rig, active), out.grid, pipeline_options(cfg));
  int frames = static_cast<int>(out.scene.frames.size());
  if (frame_limit >= 0) frames = std::min(frames, frame_limit);
  for (int t = 0; t < frames; ++t) {
    const std::vector<PlaneFeature> all = render_views(out.scene, out.rig, t, render);
    std::vector<PlaneFeature> views;
    for (auto i : active) views.push_back(all[i]);
    out.frames.push_back(pipe.process(t, views));
    out.timings.push_back(pipe.last_times());
  }
  out.report = evaluate_results(out.frames, out.scene, forecast_horizon(cfg), cfg.tracker.gate_mm);
  return out;
}

inline void write_run(const RunOutput& run, const RunConfig& cfg, const std::string& name = "run") {
  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create output directory '" + dir.string() + "'");
  write_results(dir / "results.jsonl", run.frames);
  {
    auto csv = detail::open_out(dir / "metrics.csv");
    csv << kMetricsCsvHeader << '\n' << metrics_csv_row(name, run.report) << '\n';
  }
  {
    auto js = detail::open_out(dir / "metrics.json");
    js << metrics_to_json(run.report).dump(2) << '\n';
  }
  write_stage_stats(dir / "latency.csv", stage_stats(run.timings), run.timings.size());
  if (cfg.svg) {
    write_bev_svg(dir / "bev.svg", run.frames, run.scene, run.grid);
    std::filesystem::create_directories(dir / "skeletons", ec);
    for (const auto& f : run.frames) {
      std::ostringstream name_os;
      name_os << "frame_" << std::setw(4) << std::setfill('0') << f.t << ".svg";
      write_skeleton_svg(dir / "skeletons" / name_os.str(), f, run.scene.frames[f.t], run.rig.cameras.front());
    }
  }
}

// Times every stage over at least `benchmark_frames` frames (the scene is
// extended if it is shorter) and writes benchmark.csv.
inline std::vector<StageStats> benchmark(RunConfig cfg) {
  if (cfg.scene_path.empty()) cfg.scene.frames = std::max(cfg.scene.frames, cfg.benchmark_frames);
  const RunOutput run = run_pipeline(cfg);
  auto stats = stage_stats(run.timings);
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_stage_stats(dir / "benchmark.csv", stats, run.timings.size());
  return stats;
}

struct AblationRow {
  std::string name;
  MetricReport report;
};

// Variants: full, no_warp, history_1, no_forecast. Writes ablation.csv.
inline std::vector<AblationRow> ablate(const RunConfig& cfg) {
  std::vector<std::pair<std::string, RunConfig>> variants;
  variants.emplace_back("full", cfg);
  RunConfig v = cfg;
  v.warp = false;
  variants.emplace_back("no_warp", v);
  v = cfg;
  v.history = 1;
  variants.emplace_back("history_1", v);
  v = cfg;
  v.forecast_steps = 0;
  variants.emplace_back("no_forecast", v);
  std::vector<AblationRow> rows;
  for (const auto& [name, c] : variants) rows.push_back({name, run_pipeline(c).report});
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  auto csv = detail::open_out(dir / "ablation.csv");
  csv << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) csv << metrics_csv_row(r.name, r.report) << '\n';
  return rows;
}

}  // namespace volpose
