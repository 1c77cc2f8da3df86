#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "volpose/volpose.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::string config;
  std::optional<std::string> seed, threads, pitch, gate, forecast_steps, out, rig, scene, views, frames, persons,
      motion;
  bool no_warp = false;
  bool svg = false;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "key = value config file");
  app->add_option("--seed", o.seed, "rng seed");
  app->add_option("--threads", o.threads, "worker threads");
  app->add_option("--pitch-mm", o.pitch, "workspace voxel pitch (mm)");
  app->add_option("--gate-mm", o.gate, "tracker association gate (mm)");
  app->add_option("--forecast-steps", o.forecast_steps, "forecast rollout steps");
  app->add_flag("--no-warp", o.no_warp, "disable hidden-state warping");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("--rig", o.rig, "rig.json");
  app->add_option("--scene", o.scene, "scene.jsonl");
  app->add_option("--views", o.views, "cameras used for inference (0 = all)");
  app->add_option("--frames", o.frames, "synthetic frame count");
  app->add_option("--persons", o.persons, "synthetic person count");
  app->add_option("--motion", o.motion, "stationary | constant_velocity | crossing");
  app->add_flag("--svg", o.svg, "emit SVG plots");
}

volpose::RunConfig resolve(const Overrides& o) {
  volpose::RunConfig cfg;
  if (!o.config.empty()) volpose::load_config(cfg, o.config);
  std::vector<std::pair<std::string, std::string>> given;  // (flag, key)
  auto apply = [&cfg, &given](const char* flag, const char* key, const std::optional<std::string>& v) {
    if (!v) return;
    given.emplace_back(flag, key);
    try {
      volpose::apply_setting(cfg, key, *v);
    } catch (const volpose::Error& e) {
      throw volpose::Error(volpose::ErrorKind::ConfigError, std::string(flag) + ": " + e.what());
    }
  };
  apply("--seed", "seed", o.seed);
  apply("--threads", "threads", o.threads);
  apply("--pitch-mm", "pitch_mm", o.pitch);
  apply("--gate-mm", "gate_mm", o.gate);
  apply("--forecast-steps", "forecast_steps", o.forecast_steps);
  apply("--out", "out_dir", o.out);
  apply("--rig", "rig", o.rig);
  apply("--scene", "scene", o.scene);
  apply("--views", "views", o.views);
  apply("--frames", "frames", o.frames);
  apply("--persons", "persons", o.persons);
  apply("--motion", "motion", o.motion);
  if (o.no_warp) cfg.warp = false;
  if (o.svg) cfg.svg = true;
  try {
    volpose::validate(cfg);
  } catch (const volpose::Error& e) {
    const std::string what = e.what();
    for (const auto& [flag, key] : given)
      if (what.find("'" + key + "'") != std::string::npos) throw volpose::Error(e.kind(), flag + ": " + what);
    throw;
  }
  return cfg;
}

void print_report(const std::string& name, const volpose::MetricReport& m) {
  std::printf("%-12s MPJPE %8.2f mm  AP25/50/100/150 %.3f/%.3f/%.3f/%.3f  PCP3D %.3f  MOTA %.2f  IDF1 %.2f  "
              "IDSW %d  forecast %.2f mm\n",
              name.c_str(), m.mpjpe, m.ap[0], m.ap[1], m.ap[2], m.ap[3], m.pcp3d.average, m.mota, m.idf1,
              m.id_switches, m.forecast_mpjpe);
}

int cmd_simulate(const volpose::RunConfig& cfg) {
  const auto rig = volpose::load_rig(cfg);
  const auto grid = volpose::build_workspace(rig, cfg.pitch_mm);
  const auto scene = volpose::generate_scene(cfg.scene, grid);
  std::filesystem::create_directories(cfg.out_dir);
  volpose::write_rig(std::filesystem::path(cfg.out_dir) / "rig.json", rig);
  volpose::write_scene(std::filesystem::path(cfg.out_dir) / "scene.jsonl", scene);
  std::printf("wrote %zu frames, %d persons, %zu cameras to %s\n", scene.frames.size(), cfg.scene.persons,
              rig.size(), cfg.out_dir.c_str());
  return kExitOk;
}

int cmd_run(const volpose::RunConfig& cfg) {
  const auto run = volpose::run_pipeline(cfg);
  volpose::write_run(run, cfg);
  print_report("run", run.report);
  for (const auto& s : volpose::stage_stats(run.timings))
    std::printf("  %-16s median %8.3f ms  p95 %8.3f ms\n", s.stage.c_str(), s.median_ms, s.p95_ms);
  return kExitOk;
}

int cmd_eval(const volpose::RunConfig& cfg, const std::string& results_path) {
  if (cfg.scene_path.empty())
    throw volpose::Error(volpose::ErrorKind::ConfigError, "--scene: eval needs a ground-truth scene.jsonl");
  if (!std::filesystem::exists(results_path))
    throw volpose::Error(volpose::ErrorKind::ConfigError, "--results: file not found: " + results_path);
  const auto results = volpose::read_results(results_path);
  const auto scene = volpose::read_scene(cfg.scene_path, cfg.scene.fps);
  const auto report =
      volpose::evaluate_results(results, scene, volpose::forecast_horizon(cfg), cfg.tracker.gate_mm);
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir(cfg.out_dir);
  {
    std::ofstream csv(dir / "metrics.csv");
    if (!csv) throw volpose::Error(volpose::ErrorKind::IoError, "cannot write " + (dir / "metrics.csv").string());
    csv << volpose::kMetricsCsvHeader << '\n' << volpose::metrics_csv_row("eval", report) << '\n';
  }
  {
    std::ofstream js(dir / "metrics.json");
    if (!js) throw volpose::Error(volpose::ErrorKind::IoError, "cannot write " + (dir / "metrics.json").string());
    js << volpose::metrics_to_json(report).dump(2) << '\n';
  }
  print_report("eval", report);
  return kExitOk;
}

int cmd_benchmark(const volpose::RunConfig& cfg) {
  const auto stats = volpose::benchmark(cfg);
  std::printf("%-16s %10s %10s\n", "stage", "median_ms", "p95_ms");
  for (const auto& s : stats) std::printf("%-16s %10.3f %10.3f\n", s.stage.c_str(), s.median_ms, s.p95_ms);
  return kExitOk;
}

int cmd_ablate(const volpose::RunConfig& cfg) {
  for (const auto& row : volpose::ablate(cfg)) print_report(row.name, row.report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  volpose::retain_heap_memory();
  CLI::App app{"volpose: multi-view volumetric pose detection, tracking and forecasting"};
  app.require_subcommand(1);
  Overrides o;
  std::string results_path;
  auto* simulate = app.add_subcommand("simulate", "write a synthetic rig.json and scene.jsonl");
  auto* run = app.add_subcommand("run", "run the pipeline and score it");
  auto* eval = app.add_subcommand("eval", "score a results.jsonl against a scene.jsonl");
  auto* bench = app.add_subcommand("benchmark", "per-stage latency over >= 100 frames");
  auto* ablate = app.add_subcommand("ablate", "metric rows for the ablation variants");
  for (auto* sub : {simulate, run, eval, bench, ablate}) add_common(sub, o);
  eval->add_option("--results", results_path, "results.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const volpose::RunConfig cfg = resolve(o);
    if (*simulate) return cmd_simulate(cfg);
    if (*run) return cmd_run(cfg);
    if (*eval) return cmd_eval(cfg, results_path);
    if (*bench) return cmd_benchmark(cfg);
    if (*ablate) return cmd_ablate(cfg);
  } catch (const volpose::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == volpose::ErrorKind::ConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
