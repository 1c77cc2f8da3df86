#pragma once

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/metrics.hpp"
#include "volpose/simkit.hpp"
#include "volpose/temporal.hpp"

namespace volpose {

using json = nlohmann::json;

namespace detail {

inline json to_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

inline Mat3 mat3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::IoError, what + " must be a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) throw Error(ErrorKind::IoError, what + " must be a 3x3 array");
    for (int c = 0; c < 3; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::IoError, what + " must have 3 entries");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

// rig.json: {"cameras":[{"id","K","R","t","width","height"}], "fps"}, row-major, mm.
inline json rig_to_json(const CameraRig& rig) {
  json cams = json::array();
  for (const auto& c : rig.cameras)
    cams.push_back({{"id", c.id},
                    {"K", detail::to_json(c.K)},
                    {"R", detail::to_json(c.R)},
                    {"t", detail::to_json(c.t)},
                    {"width", c.width},
                    {"height", c.height}});
  return {{"cameras", cams}, {"fps", rig.fps}};
}

inline CameraRig rig_from_json(const json& j, const std::string& source = "rig.json") {
  CameraRig rig;
  try {
    for (const auto& c : j.at("cameras")) {
      Camera cam;
      cam.id = c.at("id").get<std::string>();
      cam.K = detail::mat3_from_json(c.at("K"), source + ": K");
      cam.R = detail::mat3_from_json(c.at("R"), source + ": R");
      cam.t = detail::vec3_from_json(c.at("t"), source + ": t");
      cam.width = c.at("width").get<int>();
      cam.height = c.at("height").get<int>();
      rig.cameras.push_back(std::move(cam));
    }
    rig.fps = j.at("fps").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoError, source + ": " + e.what());
  }
  validate(rig);
  return rig;
}

inline CameraRig read_rig(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoError, path.string() + ": " + e.what());
  }
  return rig_from_json(j, path.string());
}

inline void write_rig(const std::filesystem::path& path, const CameraRig& rig) {
  auto out = detail::open_out(path);
  out << rig_to_json(rig).dump(2) << '\n';
}

// scene.jsonl: one line per frame {"t", "persons":[{"pid","joints":[[x,y,z]...]}]}.
inline void write_scene(const std::filesystem::path& path, const SceneSequence& scene) {
  auto out = detail::open_out(path);
  for (std::size_t t = 0; t < scene.frames.size(); ++t) {
    json persons = json::array();
    for (const auto& p : scene.frames[t]) {
      json joints = json::array();
      for (const auto& j : p.joints) joints.push_back(detail::to_json(j));
      persons.push_back({{"pid", p.id}, {"joints", joints}});
    }
    out << json{{"t", t}, {"persons", persons}}.dump() << '\n';
  }
}

inline SceneSequence read_scene(const std::filesystem::path& path, double fps = 18.0) {
  auto in = detail::open_in(path);
  SceneSequence scene;
  scene.fps = fps;
  scene.joints = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      const auto t = j.at("t").get<std::size_t>();
      if (t != scene.frames.size()) throw Error(ErrorKind::IoError, where + ": frames must be consecutive from 0");
      std::vector<Pose3D> frame;
      for (const auto& p : j.at("persons")) {
        Pose3D pose;
        pose.id = p.at("pid").get<int>();
        for (const auto& jt : p.at("joints")) {
          pose.joints.push_back(detail::vec3_from_json(jt, where));
          pose.confidence.push_back(1.0);
        }
        if (scene.joints == 0) scene.joints = static_cast<int>(pose.joints.size());
        if (static_cast<int>(pose.joints.size()) != scene.joints)
          throw Error(ErrorKind::IoError, where + ": inconsistent joint count");
        frame.push_back(std::move(pose));
      }
      scene.frames.push_back(std::move(frame));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::IoError, where + ": " + e.what());
    }
  }
  if (scene.joints == 0) scene.joints = kJointCount;
  return scene;
}

// GruParams blob: one JSON header line describing the shape, then the raw
// parameters as little-endian float64 in the order wz, bz, wr, br, wh, bh.
inline void write_gru_params(std::ostream& out, const GruParams& p) {
  const json header = {{"format", "volpose-gru"},
                       {"version", 1},
                       {"channels", p.channels},
                       {"kernel", GruParams::kKernel},
                       {"order", {"wz", "bz", "wr", "br", "wh", "bh"}},
                       {"dtype", "f64le"},
                       {"count", p.parameter_count()}};
  out << header.dump() << '\n';
  for (double v : p.flatten()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

inline GruParams read_gru_params(std::istream& in, const std::string& source = "gru blob") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, source + ": missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoError, source + ": " + e.what());
  }
  if (header.value("format", "") != "volpose-gru" || header.value("dtype", "") != "f64le" ||
      header.value("kernel", 0) != GruParams::kKernel)
    throw Error(ErrorKind::IoError, source + ": unsupported header");
  GruParams p = GruParams::zeros(header.at("channels").get<int>());
  if (header.at("count").get<std::size_t>() != p.parameter_count())
    throw Error(ErrorKind::IoError, source + ": parameter count does not match the shape");
  std::vector<double> flat(p.parameter_count());
  for (auto& v : flat) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error(ErrorKind::IoError, source + ": truncated payload");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    v = std::bit_cast<double>(bits);
  }
  p.unflatten(flat);
  return p;
}

inline void write_gru_params(const std::filesystem::path& path, const GruParams& p) {
  auto out = detail::open_out(path, true);
  write_gru_params(out, p);
}

inline GruParams read_gru_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for reading");
  return read_gru_params(in, path.string());
}

// metrics.csv columns, fixed order.
inline constexpr const char* kMetricsCsvHeader =
    "run,mpjpe_mm,ap25,ap50,ap100,ap150,pcp3d_avg,mota,idf1,id_switches,forecast_mpjpe_mm";

inline std::string metrics_csv_row(const std::string& run, const MetricReport& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << run << ',' << m.mpjpe << ',' << m.ap[0] << ',' << m.ap[1] << ','
     << m.ap[2] << ',' << m.ap[3] << ',' << m.pcp3d.average << ',' << m.mota << ',' << m.idf1 << ','
     << m.id_switches << ',' << m.forecast_mpjpe;
  return os.str();
}

inline json metrics_to_json(const MetricReport& m) {
  json pcp = json::object();
  for (const auto& [id, v] : m.pcp3d.per_actor) pcp[std::to_string(id)] = v;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"mpjpe_mm", num(m.mpjpe)},
          {"ap", {{"25", m.ap[0]}, {"50", m.ap[1]}, {"100", m.ap[2]}, {"150", m.ap[3]}}},
          {"pcp3d", {{"per_actor", pcp}, {"average", m.pcp3d.average}}},
          {"mota", m.mota},
          {"idf1", m.idf1},
          {"id_switches", m.id_switches},
          {"forecast_mpjpe_mm", num(m.forecast_mpjpe)}};
}

}  // namespace volpose
