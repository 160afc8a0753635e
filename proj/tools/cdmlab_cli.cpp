// cdmlab: calibrate, run, replay and sweep on the simulated bench.
//
// Exit codes: 0 ok, 1 usage, 2 scenario error, 3 malformed input.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "cdm/errors.hpp"
#include "cdm/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitScenario = 2;
constexpr int kExitMalformed = 3;

int exit_code_for(const cdm::Error& e) {
  switch (e.code()) {
    case cdm::ErrorCode::kMalformedTrace:
    case cdm::ErrorCode::kMalformedConfig:
    case cdm::ErrorCode::kIo:
      return kExitMalformed;
    default:
      return kExitScenario;
  }
}

cdm::CalibrationMap load_map(const fs::path& p) {
  try {
    return cdm::CalibrationMap::from_json(json::parse(cdm::read_file(p)));
  } catch (const json::exception& e) {
    throw cdm::Error(cdm::ErrorCode::kMalformedConfig, p.string() + ": " + e.what());
  }
}

cdm::Scenario resolve_scenario(const std::string& what, std::optional<std::uint64_t> seed) {
  cdm::Scenario s;
  const auto& ids = cdm::builtin_scenario_ids();
  if (std::find(ids.begin(), ids.end(), what) != ids.end()) {
    s = cdm::builtin_scenario(what, seed.value_or(1));
  } else if (fs::exists(what)) {
    s = cdm::load_scenario_file(what);
  } else {
    throw cdm::Error(cdm::ErrorCode::kMalformedConfig, "'" + what + "' is neither a scenario id nor a file");
  }
  if (seed) s.seed = *seed;
  return s;
}

std::vector<double> parse_jigs(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cdm::Error(cdm::ErrorCode::kMalformedConfig, "bad jig curvature '" + item + "'");
    }
  }
  return out;
}

void print_run(const cdm::RunOutput& run, double wall) {
  std::printf("scenario %s seed %llu\n", run.scenario.id.c_str(), static_cast<unsigned long long>(run.scenario.seed));
  for (const auto& l : run.legs) {
    std::printf("  target (%.3f, %.3f): %d iterations, measured error %.4f mm, true error %.4f mm%s\n", l.target(0),
                l.target(1), l.iterations, l.measured_error(), l.true_error(),
                l.verdict == cdm::RunVerdict::kConverged ? "" : " (max iterations)");
  }
  std::printf("  contact: %s", cdm::to_string(run.verdict.state));
  if (run.verdict.state == cdm::ContactState::kContact) {
    std::printf(" onset %d, %s, drop %.3f, wrapped %s", run.verdict.onset, cdm::to_string(run.verdict.hardness),
                run.drop.value_or(0.0), run.verdict.wrapped ? "yes" : "no");
  }
  std::printf("\n  simulated %.2f s, wall %.2f s\n", run.sim_time, wall);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cable-driven manipulator bench: calibration, closed-loop runs and contact detection"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string map_path;

  auto* cal = app.add_subcommand("calibrate", "fit the wavelength-to-curvature map from jig frames");
  std::string jigs_text;
  int frames_per_jig = 200;
  std::string layout_file;
  cal->add_option("--jigs", jigs_text, "comma-separated jig curvatures, 1/m");
  cal->add_option("--frames", frames_per_jig, "frames per jig")->check(CLI::PositiveNumber);
  cal->add_option("--config", layout_file, "scenario file providing the sensor layout");
  cal->add_option("--seed", seed, "noise seed");
  cal->add_option("--out-dir", out_dir, "output directory");
  cal->add_option("-o,--output", map_path, "map file (default <out-dir>/map.json)");

  auto* run = app.add_subcommand("run", "run a scenario");
  std::string scenario_arg;
  run->add_option("scenario", scenario_arg, "scenario id or config file")->required();
  run->add_option("--seed", seed, "seed");
  run->add_option("--out-dir", out_dir, "output directory");
  run->add_option("--map", map_path, "calibration map (calibrates when absent)");

  auto* rep = app.add_subcommand("replay", "rerun the contact detector over a saved trace");
  std::string trace_arg, detector_file;
  rep->add_option("trace", trace_arg, "trace CSV")->required();
  rep->add_option("--detector", detector_file, "JSON object of detector parameters");
  rep->add_option("--out-dir", out_dir, "output directory");

  auto* sw = app.add_subcommand("sweep", "detector corpus over seeded free and obstacle runs");
  int runs_per_class = 50;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  sw->add_option("--runs", runs_per_class, "runs per class")->check(CLI::PositiveNumber);
  sw->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  sw->add_option("--seed", seed, "base seed");
  sw->add_option("--out-dir", out_dir, "output directory");
  sw->add_option("--map", map_path, "calibration map (calibrates when absent)");
  std::string report_path;
  sw->add_option("--report", report_path, "grid-search the detector thresholds and write a markdown report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*cal) {
      cdm::Scenario base = layout_file.empty() ? cdm::builtin_scenario("custom") : cdm::load_scenario_file(layout_file);
      if (!jigs_text.empty()) base.jigs.curvatures = parse_jigs(jigs_text);
      base.fbg.validate(base.cdm.active_length);
      base.jigs.validate(base.cdm.kappa_max);
      const auto map = cdm::calibrate_scenario(base.fbg, base.jigs, frames_per_jig, seed.value_or(1));
      const fs::path out = map_path.empty() ? fs::path(out_dir) / "map.json" : fs::path(map_path);
      cdm::write_file(out, map.dump());
      for (int c = 0; c < cdm::kChannels; ++c) {
        const auto& f = map.fits[static_cast<std::size_t>(c)];
        std::printf("channel %d: slope %.6g 1/m per nm, intercept %.3g 1/m, rms %.3g\n", c, f.slope, f.intercept,
                    f.residual_rms);
      }
      std::printf("wrote %s\n", out.string().c_str());
    } else if (*run) {
      const cdm::Scenario s = resolve_scenario(scenario_arg, seed);
      std::optional<cdm::CalibrationMap> map;
      if (!map_path.empty()) map = load_map(map_path);
      const auto t0 = std::chrono::steady_clock::now();
      const cdm::RunOutput out = cdm::execute(s, map);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      cdm::ArtifactPaths paths;
      cdm::write_run_artifacts(out, out_dir, &paths);
      // Wall time lives outside the report so reports stay reproducible.
      cdm::write_file(fs::path(out_dir) / (s.id + "_timing.json"),
                      json{{"wall_time_s", wall}, {"simulated_time_s", out.sim_time}}.dump(2) + "\n");
      print_run(out, wall);
      std::printf("  report %s\n", paths.report.string().c_str());
    } else if (*rep) {
      std::optional<cdm::DetectorParams> params;
      if (!detector_file.empty()) {
        cdm::Scenario tmp;
        json j;
        try {
          j = json::parse(cdm::read_file(detector_file));
        } catch (const json::exception& e) {
          throw cdm::Error(cdm::ErrorCode::kMalformedConfig, detector_file + ": " + e.what());
        }
        tmp = cdm::scenario_from_json(json{{"targets_mm", json::array({json::array({0.0, 34.0})})}, {"detector", j}});
        params = tmp.detector;
      }
      const cdm::ReplayOutput r = cdm::replay(trace_arg, params);
      cdm::write_replay_series(r, out_dir);
      std::printf("records %zu: %s", r.trace.records.size(), cdm::to_string(r.verdict.state));
      if (r.verdict.state == cdm::ContactState::kContact) {
        std::printf(" onset %d, %s, drop %.3f, wrapped %s", r.verdict.onset, cdm::to_string(r.verdict.hardness),
                    r.drop.value_or(0.0), r.verdict.wrapped ? "yes" : "no");
      }
      std::printf("\n");
    } else if (*sw) {
      const cdm::Scenario base = cdm::builtin_scenario("custom");
      const std::uint64_t base_seed = seed.value_or(1000);
      const auto map = map_path.empty()
                           ? cdm::calibrate_scenario(base.fbg, base.jigs, base.calibration_frames_per_jig, base_seed)
                           : load_map(map_path);
      const auto t0 = std::chrono::steady_clock::now();
      const auto results = cdm::run_sweep(cdm::sweep_cases(runs_per_class, base_seed), map, threads, base);
      const auto summary = cdm::summarize_sweep(results);
      cdm::write_sweep_artifacts(results, summary, out_dir);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("free runs %d, false positives %d\n", summary.free_runs, summary.false_positives);
      std::printf("contact runs %d, detected %d (recall %.3f)\n", summary.contact_runs, summary.detected,
                  summary.recall());
      std::printf("classified %d, correct %d (accuracy %.3f)\n", summary.classified, summary.correct_class,
                  summary.accuracy());
      std::printf("onset within 15 records: %d of %d\n", summary.onset_within, summary.onset_checked);
      if (summary.errors) std::printf("runs with errors: %d\n", summary.errors);
      if (!report_path.empty()) {
        std::vector<double> soft_grid, hard_grid;
        for (int i = 2; i <= 30; i += 2) soft_grid.push_back(i / 100.0);
        for (int i = 30; i <= 90; i += 5) hard_grid.push_back(i / 100.0);
        const auto cal = cdm::calibrate_detector(results, base.detector, soft_grid, hard_grid);
        cdm::write_file(report_path, cdm::calibration_report(cal, runs_per_class, base_seed));
        std::printf("calibrated drop_threshold_soft %.3f, drop_threshold_hard %.3f (accuracy %.3f)\n",
                    cal.params.drop_threshold_soft, cal.params.drop_threshold_hard, cal.summary.accuracy());
      }
      std::printf("wall %.1f s\n", wall);
    }
  } catch (const cdm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitScenario;
  }
  return 0;
}
