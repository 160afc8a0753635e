#pragma once

// Scenario runner: builds the simulated bench, calibrates the sensor, runs
// the controller over the target list and the contact detector over the
// trace, and writes traces, reports and plot series.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdm/cdm_sim.hpp"
#include "cdm/collision.hpp"
#include "cdm/controller.hpp"
#include "cdm/fbg_model.hpp"
#include "cdm/rig.hpp"
#include "cdm/shape_recon.hpp"
#include "cdm/trace_io.hpp"

namespace cdm {

// Targets used by the built-in scenarios (lateral, axial) mm.
inline const Point2 kStraightTip{0.0, 34.0};
inline const Point2 kTargetP1{-10.0, 32.1};
inline const Point2 kTargetP2{-22.6, 21.4};
inline const Point2 kTargetP3{-25.0, 16.2};

struct Scenario {
  std::string id = "custom";
  std::vector<Point2> targets;
  std::vector<Obstacle> obstacles;
  std::uint64_t seed = 1;
  CdmConfig cdm = CdmConfig::defaults();
  FbgLayout fbg;
  ControllerParams controller;
  ControlConstraints constraints;
  DetectorParams detector;
  CalibrationJigSet jigs;
  int calibration_frames_per_jig = 200;
  int n_per_segment = 10;

  void validate() const;
};

// Hard and soft obstacles of the built-in p3 scenarios.
Obstacle default_obstacle(ObstacleKind kind);

const std::vector<std::string>& builtin_scenario_ids();
Scenario builtin_scenario(const std::string& id, std::uint64_t seed = 1);

// Config file: optional "scenario" names a built-in base, every other key
// overrides it. Unknown keys are rejected.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario_file(const std::filesystem::path& path);

// Calibration on synthetic jig frames.
CalibrationMap calibrate_scenario(const FbgLayout& layout, const CalibrationJigSet& jigs, int frames_per_jig,
                                  std::uint64_t seed);

struct TargetOutcome {
  Point2 target = Point2::Zero();
  Point2 measured_tip = Point2::Zero();
  Point2 true_tip = Point2::Zero();
  int iterations = 0;
  RunVerdict verdict = RunVerdict::kConverged;
  int first_record = 0;  // index of this leg's first record in the trace

  double measured_error() const { return (target - measured_tip).norm(); }
  double true_error() const { return (target - true_tip).norm(); }
};

struct RunOutput {
  Scenario scenario;
  CalibrationMap map;
  Eigen::Matrix2d j0 = Eigen::Matrix2d::Zero();
  Point2 start_tip = Point2::Zero();
  std::vector<TargetOutcome> legs;
  std::vector<StepRecord> trace;
  std::vector<TruthRecord> truth;  // one per trace record (probes excluded)
  std::vector<WavelengthFrame> frames;  // the frame consumed at each record
  ContactVerdict verdict;
  std::optional<double> drop;  // sustained relative norm drop after onset
  int truth_first_contact = -1;  // first record with simulated contact
  int truth_contact_records = 0;
  double max_penetration_hard = 0.0;
  double max_penetration_soft = 0.0;
  double sim_time = 0.0;
};

// Runs in memory. Calibrates from the scenario when no map is given.
RunOutput execute(const Scenario& scenario, const std::optional<CalibrationMap>& map = std::nullopt);

struct ArtifactPaths {
  std::filesystem::path trace, truth, frames, report, tip_path, jnorm, cables, map;
};

// Writes all artifacts of a run into out_dir and returns the report.
nlohmann::json write_run_artifacts(const RunOutput& run, const std::filesystem::path& out_dir,
                                   ArtifactPaths* paths = nullptr);

nlohmann::json report_json(const RunOutput& run, const ArtifactPaths& paths);

TraceMeta trace_metadata(const RunOutput& run);

// Detector over a persisted trace; parameters default to those stored in it.
struct ReplayOutput {
  TraceFile trace;
  DetectorParams params;
  ContactVerdict verdict;
  std::optional<double> drop;
};
ReplayOutput replay(const std::filesystem::path& trace_path, const std::optional<DetectorParams>& params = std::nullopt);
void write_replay_series(const ReplayOutput& r, const std::filesystem::path& out_dir);

// Detector corpus: seeded free runs per target and randomized soft/hard
// obstacle runs on the p3 bending path.
struct SweepCase {
  std::string cls;  // free_p1, free_p2, free_p3, soft, hard
  std::uint64_t seed = 0;
  std::optional<Obstacle> obstacle;
};

struct SweepResult {
  SweepCase c;
  ContactVerdict verdict;
  std::optional<double> drop;
  int truth_first_contact = -1;
  int truth_contact_records = 0;
  double final_true_error = 0.0;
  double final_measured_error = 0.0;
  int iterations = 0;
  RunVerdict run_verdict = RunVerdict::kConverged;
  std::string error;  // non-empty if the run threw
  std::vector<StepRecord> trace;
};

std::vector<SweepCase> sweep_cases(int runs_per_class, std::uint64_t base_seed);
Scenario sweep_scenario(const SweepCase& c, const Scenario& base);
std::vector<SweepResult> run_sweep(const std::vector<SweepCase>& cases, const CalibrationMap& map, int threads,
                                   const Scenario& base);

struct SweepSummary {
  int free_runs = 0, false_positives = 0;
  int contact_runs = 0, detected = 0;  // runs with >= 20 records of simulated contact
  int classified = 0, correct_class = 0;
  int onset_checked = 0, onset_within = 0;
  int errors = 0;

  double recall() const { return contact_runs ? static_cast<double>(detected) / contact_runs : 1.0; }
  double accuracy() const { return classified ? static_cast<double>(correct_class) / classified : 1.0; }
};
SweepSummary summarize_sweep(const std::vector<SweepResult>& results, int onset_tolerance = 15);
// Detector verdicts recomputed over the stored traces.
std::vector<SweepResult> reanalyze(std::vector<SweepResult> results, const DetectorParams& params);

struct DetectorCalibration {
  DetectorParams params;
  std::vector<std::pair<double, SweepSummary>> onset_rows, hardness_rows;
  double soft_drop_max = 0.0, hard_drop_min = 0.0;
  SweepSummary summary;  // at the chosen params
};

// Threshold grid search over a corpus.
DetectorCalibration calibrate_detector(const std::vector<SweepResult>& results, const DetectorParams& base,
                                       const std::vector<double>& soft_grid, const std::vector<double>& hard_grid);
std::string calibration_report(const DetectorCalibration& cal, int runs_per_class, std::uint64_t base_seed);

void write_sweep_artifacts(const std::vector<SweepResult>& results, const SweepSummary& summary,
                           const std::filesystem::path& out_dir);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);

}  // namespace cdm
