#include "cdm/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "cdm/errors.hpp"
#include "cdm/trace_io.hpp"

namespace cdm {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- files

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + p.string());
}

// ---------------------------------------------------------------- scenarios

Obstacle default_obstacle(ObstacleKind kind) {
  Obstacle ob;
  ob.center = Point2(-14.0, 20.5);
  ob.radius = 5.0;
  ob.kind = kind;
  return ob;
}

const std::vector<std::string>& builtin_scenario_ids() {
  static const std::vector<std::string> ids{"free_p1", "free_p2", "free_p3", "repeatability",
                                            "soft_p3", "hard_p3", "custom"};
  return ids;
}

Scenario builtin_scenario(const std::string& id, std::uint64_t seed) {
  Scenario s;
  s.id = id;
  s.seed = seed;
  if (id == "free_p1") {
    s.targets = {kTargetP1};
  } else if (id == "free_p2") {
    s.targets = {kTargetP2};
  } else if (id == "free_p3") {
    s.targets = {kTargetP3};
  } else if (id == "repeatability") {
    s.targets = {kTargetP1, kStraightTip, kTargetP1, kStraightTip};
  } else if (id == "soft_p3") {
    s.targets = {kTargetP3};
    s.obstacles = {default_obstacle(ObstacleKind::kSoft)};
  } else if (id == "hard_p3") {
    s.targets = {kTargetP3};
    s.obstacles = {default_obstacle(ObstacleKind::kHard)};
  } else if (id != "custom") {
    throw Error(ErrorCode::kInvalidArgument, "unknown scenario '" + id + "'");
  }
  return s;
}

void Scenario::validate() const {
  if (targets.empty()) throw Error(ErrorCode::kInvalidArgument, "scenario '" + id + "' has no targets");
  cdm.validate();
  fbg.validate(cdm.active_length);
  controller.validate();
  constraints.validate();
  detector.validate();
  jigs.validate(cdm.kappa_max);
  if (calibration_frames_per_jig < 1) throw Error(ErrorCode::kInvalidArgument, "calibration needs frames");
  if (n_per_segment < 1) throw Error(ErrorCode::kInvalidArgument, "n_per_segment must be >= 1");
  for (const auto& ob : obstacles) ob.validate(cdm);
  for (const auto& t : targets) {
    // Every reachable tip lies within one body length of the base.
    if (!t.allFinite() || t.norm() > cdm.active_length + 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "target outside the reachable disc");
    }
    for (const auto& ob : obstacles) {
      if ((t - ob.center).norm() < ob.radius && ob.kind == ObstacleKind::kHard) {
        throw Error(ErrorCode::kInvalidArgument, "target inside a hard obstacle");
      }
    }
  }
}

// ---------------------------------------------------------------- json

namespace {

json point_json(const Point2& p) { return json::array({p(0), p(1)}); }

Point2 point_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw Error(ErrorCode::kMalformedConfig, what + " must be a [lateral, axial] pair");
  }
  return Point2(j[0].get<double>(), j[1].get<double>());
}

json matrix_json(const Eigen::Matrix2d& m) {
  return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})});
}

const char* kind_name(ObstacleKind k) { return k == ObstacleKind::kHard ? "hard" : "soft"; }

json obstacle_json(const Obstacle& ob) {
  return {{"center_mm", point_json(ob.center)}, {"radius_mm", ob.radius}, {"kind", kind_name(ob.kind)}};
}

// Reads keys from an object and rejects any it does not know.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error(ErrorCode::kMalformedConfig, where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw Error(ErrorCode::kMalformedConfig, "unknown key '" + it.key() + "' in " + where_);
      }
    }
  }
  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw Error(ErrorCode::kMalformedConfig, where_ + "." + key + " has the wrong type");
      }
    }
  }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json cdm_json(const CdmConfig& c) {
  return {{"n_links", c.n_links},
          {"active_length_mm", c.active_length},
          {"cable_offset_mm", c.cable_offset},
          {"joint_stiffness_n_mm_per_rad", c.joint_stiffness},
          {"kappa_max_per_m", c.kappa_max},
          {"contact_stiffness_hard_n_per_mm", c.contact_stiffness_hard},
          {"contact_stiffness_soft_n_per_mm", c.contact_stiffness_soft},
          {"softening_fraction", c.softening_fraction},
          {"softening_angle_rad", c.softening_angle},
          {"preload_redistribution_per_mm", c.preload_redistribution}};
}

void read_cdm(const json& j, CdmConfig& c) {
  Reader r(j, "cdm");
  const int old_n = c.n_links;
  r.get("n_links", c.n_links);
  r.get("active_length_mm", c.active_length);
  r.get("cable_offset_mm", c.cable_offset);
  r.get("kappa_max_per_m", c.kappa_max);
  r.get("contact_stiffness_hard_n_per_mm", c.contact_stiffness_hard);
  r.get("contact_stiffness_soft_n_per_mm", c.contact_stiffness_soft);
  r.get("softening_fraction", c.softening_fraction);
  r.get("softening_angle_rad", c.softening_angle);
  r.get("preload_redistribution_per_mm", c.preload_redistribution);
  double base = 0.0, ratio = 0.0;
  r.get("joint_stiffness_base_n_mm_per_rad", base);
  r.get("joint_stiffness_tip_ratio", ratio);
  if (r.find("joint_stiffness_n_mm_per_rad")) {
    r.get("joint_stiffness_n_mm_per_rad", c.joint_stiffness);
  } else if (base > 0 || ratio > 0) {
    const auto& k = c.joint_stiffness;
    const double b0 = base > 0 ? base : k.front();
    const double r0 = ratio > 0 ? ratio : k.back() / k.front();
    c.joint_stiffness = CdmConfig::graded_stiffness(c.n_links, b0, r0);
  } else if (c.n_links != old_n) {
    const auto& k = c.joint_stiffness;
    c.joint_stiffness = CdmConfig::graded_stiffness(c.n_links, k.front(), k.back() / k.front());
  }
}

json fbg_json(const FbgLayout& f) {
  return {{"aa_positions_mm", f.aa_positions},
          {"bragg_wavelengths_nm", f.bragg_wavelengths},
          {"strain_coefficient", f.strain_coefficient},
          {"sensor_bias_mm", f.sensor_bias},
          {"noise_sigma_nm", f.noise_sigma},
          {"sample_rate_hz", f.sample_rate},
          {"thermal_offset_nm", f.thermal_offset}};
}

void read_fbg(const json& j, FbgLayout& f) {
  Reader r(j, "fbg");
  r.get("aa_positions_mm", f.aa_positions);
  r.get("bragg_wavelengths_nm", f.bragg_wavelengths);
  r.get("strain_coefficient", f.strain_coefficient);
  r.get("sensor_bias_mm", f.sensor_bias);
  r.get("noise_sigma_nm", f.noise_sigma);
  r.get("sample_rate_hz", f.sample_rate);
  r.get("thermal_offset_nm", f.thermal_offset);
}

json controller_json(const ControllerParams& p, const ControlConstraints& c) {
  return {{"epsilon_mm", p.epsilon},
          {"cable_velocity_mm_per_s", p.cable_velocity},
          {"dl_min_mm", p.dl_min},
          {"probe_amplitude_mm", p.probe_amplitude},
          {"max_iterations", p.max_iterations},
          {"max_tip_step_mm", p.max_tip_step},
          {"l_max_mm", c.l_max},
          {"per_step_cap_mm", c.per_step_cap},
          {"coupling_cap_mm", c.coupling_cap}};
}

void read_controller(const json& j, ControllerParams& p, ControlConstraints& c) {
  Reader r(j, "controller");
  r.get("epsilon_mm", p.epsilon);
  r.get("cable_velocity_mm_per_s", p.cable_velocity);
  r.get("dl_min_mm", p.dl_min);
  r.get("probe_amplitude_mm", p.probe_amplitude);
  r.get("max_iterations", p.max_iterations);
  r.get("max_tip_step_mm", p.max_tip_step);
  r.get("l_max_mm", c.l_max);
  r.get("per_step_cap_mm", c.per_step_cap);
  r.get("coupling_cap_mm", c.coupling_cap);
}

json detector_json(const DetectorParams& d) {
  return {{"baseline_window", d.baseline_window},
          {"drop_threshold_soft", d.drop_threshold_soft},
          {"drop_threshold_hard", d.drop_threshold_hard},
          {"stall_progress_ratio_mm_per_mm", d.stall_progress_ratio},
          {"stall_window", d.stall_window},
          {"persistence", d.persistence},
          {"epsilon_mm", d.epsilon}};
}

void read_detector(const json& j, DetectorParams& d) {
  Reader r(j, "detector");
  r.get("baseline_window", d.baseline_window);
  r.get("drop_threshold_soft", d.drop_threshold_soft);
  r.get("drop_threshold_hard", d.drop_threshold_hard);
  r.get("stall_progress_ratio_mm_per_mm", d.stall_progress_ratio);
  r.get("stall_window", d.stall_window);
  r.get("persistence", d.persistence);
  r.get("epsilon_mm", d.epsilon);
}

DetectorParams detector_from_json(const json& j) {
  DetectorParams d;
  read_detector(j, d);
  return d;
}

}  // namespace

json scenario_to_json(const Scenario& s) {
  json targets = json::array();
  for (const auto& t : s.targets) targets.push_back(point_json(t));
  json obstacles = json::array();
  for (const auto& ob : s.obstacles) obstacles.push_back(obstacle_json(ob));
  return {{"scenario", s.id},
          {"seed", s.seed},
          {"targets_mm", targets},
          {"obstacles", obstacles},
          {"cdm", cdm_json(s.cdm)},
          {"fbg", fbg_json(s.fbg)},
          {"controller", controller_json(s.controller, s.constraints)},
          {"detector", detector_json(s.detector)},
          {"calibration",
           {{"jig_curvatures_per_m", s.jigs.curvatures},
            {"frames_per_jig", s.calibration_frames_per_jig},
            {"points_per_segment", s.n_per_segment}}}};
}

Scenario scenario_from_json(const json& j) {
  Reader r(j, "scenario file");
  std::string id = "custom";
  r.get("scenario", id);
  std::uint64_t seed = 1;
  r.get("seed", seed);
  Scenario s;
  try {
    s = builtin_scenario(id, seed);
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformedConfig, e.what());
  }
  if (const json* t = r.find("targets_mm")) {
    if (!t->is_array()) throw Error(ErrorCode::kMalformedConfig, "targets_mm must be a list");
    s.targets.clear();
    for (const auto& p : *t) s.targets.push_back(point_from(p, "target"));
  }
  if (const json* o = r.find("obstacles")) {
    if (!o->is_array()) throw Error(ErrorCode::kMalformedConfig, "obstacles must be a list");
    s.obstacles.clear();
    for (const auto& e : *o) {
      Reader ro(e, "obstacle");
      Obstacle ob;
      if (const json* c = ro.find("center_mm")) ob.center = point_from(*c, "obstacle center");
      ro.get("radius_mm", ob.radius);
      std::string kind = "hard";
      ro.get("kind", kind);
      if (kind == "hard") ob.kind = ObstacleKind::kHard;
      else if (kind == "soft") ob.kind = ObstacleKind::kSoft;
      else throw Error(ErrorCode::kMalformedConfig, "obstacle kind must be 'hard' or 'soft'");
      s.obstacles.push_back(ob);
    }
  }
  if (const json* c = r.find("cdm")) read_cdm(*c, s.cdm);
  if (const json* f = r.find("fbg")) read_fbg(*f, s.fbg);
  if (const json* c = r.find("controller")) read_controller(*c, s.controller, s.constraints);
  if (const json* d = r.find("detector")) read_detector(*d, s.detector);
  if (const json* c = r.find("calibration")) {
    Reader rc(*c, "calibration");
    rc.get("jig_curvatures_per_m", s.jigs.curvatures);
    rc.get("frames_per_jig", s.calibration_frames_per_jig);
    rc.get("points_per_segment", s.n_per_segment);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw Error(ErrorCode::kMalformedConfig, e.what());
    throw;
  }
  return s;
}

Scenario load_scenario_file(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedConfig, path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------- running

CalibrationMap calibrate_scenario(const FbgLayout& layout, const CalibrationJigSet& jigs, int frames_per_jig,
                                  std::uint64_t seed) {
  return calibrate(jigs, jig_frames(layout, jigs, frames_per_jig, seed));
}

namespace {

// Separate streams for calibration and the run, both derived from the seed.
std::uint64_t calibration_seed(std::uint64_t seed) { return seed * 2 + 1; }
std::uint64_t rig_seed(std::uint64_t seed) { return seed * 2; }

}  // namespace

RunOutput execute(const Scenario& scenario, const std::optional<CalibrationMap>& map) {
  scenario.validate();
  RunOutput out;
  out.scenario = scenario;
  out.map = map ? *map
                : calibrate_scenario(scenario.fbg, scenario.jigs, scenario.calibration_frames_per_jig,
                                     calibration_seed(scenario.seed));

  RigOptions ro;
  ro.cable_velocity = scenario.controller.cable_velocity;
  SimRig rig(scenario.cdm, scenario.obstacles, scenario.fbg, rig_seed(scenario.seed), ro);
  FbgTipSensor sensor(rig.mailbox(), out.map, scenario.fbg, scenario.cdm.active_length, scenario.n_per_segment);

  JacobianEstimate J = initialize_jacobian(rig, sensor, scenario.controller);
  out.j0 = J.J;
  const std::size_t probes = rig.truth().size();
  out.start_tip = read_tip(sensor, rig.now()).tip;

  for (const auto& target : scenario.targets) {
    TargetOutcome leg;
    leg.target = target;
    leg.first_record = static_cast<int>(out.trace.size());
    auto observer = [&](const StepRecord&) { out.frames.push_back(*sensor.last_frame()); };
    RunResult res = run_to_target(target, rig, sensor, J, scenario.controller, scenario.constraints,
                                  static_cast<int>(out.trace.size()), observer);
    leg.iterations = static_cast<int>(res.trace.size());
    leg.verdict = res.verdict;
    leg.measured_tip = res.final_tip;
    leg.true_tip = rig.state().tip;
    out.trace.insert(out.trace.end(), res.trace.begin(), res.trace.end());
    out.legs.push_back(leg);
  }
  out.truth.assign(rig.truth().begin() + static_cast<std::ptrdiff_t>(probes), rig.truth().end());
  out.sim_time = rig.now();

  out.verdict = analyze(out.trace, scenario.detector);
  if (out.verdict.state == ContactState::kContact) {
    out.drop = sustained_drop(out.trace, out.verdict.onset, scenario.detector);
  }
  for (std::size_t i = 0; i < out.truth.size(); ++i) {
    const auto& t = out.truth[i];
    bool any = false;
    for (std::size_t o = 0; o < t.contact_active.size(); ++o) {
      if (!t.contact_active[o]) continue;
      any = true;
      double& slot = scenario.obstacles[o].kind == ObstacleKind::kHard ? out.max_penetration_hard
                                                                        : out.max_penetration_soft;
      slot = std::max(slot, t.max_penetration);
    }
    if (any) {
      if (out.truth_first_contact < 0) out.truth_first_contact = static_cast<int>(i);
      ++out.truth_contact_records;
    }
  }
  return out;
}

// ---------------------------------------------------------------- artifacts

TraceMeta trace_metadata(const RunOutput& run) {
  const Scenario& s = run.scenario;
  json targets = json::array();
  for (const auto& t : s.targets) targets.push_back(point_json(t));
  json obstacles = json::array();
  for (const auto& ob : s.obstacles) obstacles.push_back(obstacle_json(ob));
  return {{"scenario", s.id},
          {"seed", std::to_string(s.seed)},
          {"targets_mm", targets.dump()},
          {"obstacles", obstacles.dump()},
          {"start_tip_mm", point_json(run.start_tip).dump()},
          {"controller", controller_json(s.controller, s.constraints).dump()},
          {"detector", detector_json(s.detector).dump()},
          {"initial_jacobian", matrix_json(run.j0).dump()}};
}

namespace {

std::string truth_csv(const RunOutput& run) {
  std::string out = "k,pull1,pull2,true_lat,true_ax,contact,max_penetration,saturated,time\n";
  for (std::size_t i = 0; i < run.truth.size(); ++i) {
    const auto& t = run.truth[i];
    bool contact = false;
    for (bool c : t.contact_active) contact = contact || c;
    out += std::to_string(run.trace[i].k) + "," + format_double(t.pull(0)) + "," + format_double(t.pull(1)) + "," +
           format_double(t.tip(0)) + "," + format_double(t.tip(1)) + "," + (contact ? "1" : "0") + "," +
           format_double(t.max_penetration) + "," + (t.saturated ? "1" : "0") + "," + format_double(t.time) + "\n";
  }
  return out;
}

std::string tip_path_csv(const std::vector<StepRecord>& trace, const Point2& start,
                         const std::vector<TruthRecord>* truth) {
  std::string out = truth ? "k,x_lat,x_ax,true_lat,true_ax\n" : "k,x_lat,x_ax\n";
  out += "-1," + format_double(start(0)) + "," + format_double(start(1));
  if (truth) out += ",,";
  out += "\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += std::to_string(trace[i].k) + "," + format_double(trace[i].x(0)) + "," + format_double(trace[i].x(1));
    if (truth) out += "," + format_double((*truth)[i].tip(0)) + "," + format_double((*truth)[i].tip(1));
    out += "\n";
  }
  return out;
}

std::string jnorm_csv(const std::vector<StepRecord>& trace) {
  std::string out = "k,Jnorm\n";
  for (const auto& r : trace) out += std::to_string(r.k) + "," + format_double(r.j_norm) + "\n";
  return out;
}

// Cable pulls over time from the commanded increments.
std::string cables_csv(const std::vector<StepRecord>& trace) {
  std::string out = "k,time,pull1,pull2\n";
  Pull p = Pull::Zero();
  for (const auto& r : trace) {
    p += r.dl;
    out += std::to_string(r.k) + "," + format_double(r.timestamp) + "," + format_double(p(0)) + "," +
           format_double(p(1)) + "\n";
  }
  return out;
}

json verdict_json(const ContactVerdict& v, const std::optional<double>& drop) {
  return {{"state", to_string(v.state)},
          {"onset", v.onset},
          {"hardness", to_string(v.hardness)},
          {"wrapped", v.wrapped},
          {"sustained_drop", drop ? json(*drop) : json(nullptr)}};
}

}  // namespace

json report_json(const RunOutput& run, const ArtifactPaths& paths) {
  json legs = json::array();
  for (const auto& l : run.legs) {
    legs.push_back({{"target_mm", point_json(l.target)},
                    {"measured_tip_mm", point_json(l.measured_tip)},
                    {"true_tip_mm", point_json(l.true_tip)},
                    {"measured_error_mm", l.measured_error()},
                    {"true_error_mm", l.true_error()},
                    {"iterations", l.iterations},
                    {"verdict", l.verdict == RunVerdict::kConverged ? "Converged" : "MaxIterationsReached"}});
  }
  double jmin = 0, jmax = 0;
  if (!run.trace.empty()) {
    jmin = jmax = run.trace.front().j_norm;
    for (const auto& r : run.trace) {
      jmin = std::min(jmin, r.j_norm);
      jmax = std::max(jmax, r.j_norm);
    }
  }
  auto name = [](const fs::path& p) { return p.filename().string(); };
  return {{"scenario", run.scenario.id},
          {"seed", run.scenario.seed},
          {"targets", legs},
          {"iterations", run.trace.size()},
          {"simulated_time_s", run.sim_time},
          {"jacobian",
           {{"initial", matrix_json(run.j0)},
            {"norm_initial", run.j0.norm()},
            {"norm_final", run.trace.empty() ? run.j0.norm() : run.trace.back().j_norm},
            {"norm_min", jmin},
            {"norm_max", jmax}}},
          {"contact", verdict_json(run.verdict, run.drop)},
          {"ground_truth",
           {{"first_contact_record", run.truth_first_contact},
            {"contact_records", run.truth_contact_records},
            {"max_penetration_hard_mm", run.max_penetration_hard},
            {"max_penetration_soft_mm", run.max_penetration_soft}}},
          {"detector", detector_json(run.scenario.detector)},
          {"files",
           {{"trace", name(paths.trace)},
            {"truth", name(paths.truth)},
            {"frames", name(paths.frames)},
            {"tip_path", name(paths.tip_path)},
            {"jnorm", name(paths.jnorm)},
            {"cables", name(paths.cables)},
            {"map", name(paths.map)}}}};
}

json write_run_artifacts(const RunOutput& run, const fs::path& out_dir, ArtifactPaths* paths_out) {
  fs::create_directories(out_dir);
  const std::string stem = run.scenario.id;
  ArtifactPaths p;
  p.trace = out_dir / (stem + "_trace.csv");
  p.truth = out_dir / (stem + "_truth.csv");
  p.frames = out_dir / (stem + "_frames.csv");
  p.report = out_dir / (stem + "_report.json");
  p.tip_path = out_dir / (stem + "_tip_path.csv");
  p.jnorm = out_dir / (stem + "_jnorm.csv");
  p.cables = out_dir / (stem + "_cables.csv");
  p.map = out_dir / (stem + "_map.json");

  std::ostringstream trace;
  write_trace_csv(trace, trace_metadata(run), run.trace);
  write_file(p.trace, trace.str());
  write_file(p.truth, truth_csv(run));
  std::ostringstream frames;
  write_frames_csv(frames, run.frames);
  write_file(p.frames, frames.str());
  write_file(p.tip_path, tip_path_csv(run.trace, run.start_tip, &run.truth));
  write_file(p.jnorm, jnorm_csv(run.trace));
  write_file(p.cables, cables_csv(run.trace));
  write_file(p.map, run.map.dump());
  const json report = report_json(run, p);
  write_file(p.report, report.dump(2) + "\n");
  if (paths_out) *paths_out = p;
  return report;
}

// ---------------------------------------------------------------- replay

ReplayOutput replay(const fs::path& trace_path, const std::optional<DetectorParams>& params) {
  std::ifstream in(trace_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + trace_path.string());
  ReplayOutput r;
  r.trace = read_trace_csv(in);
  if (params) {
    r.params = *params;
  } else {
    const std::string stored = r.trace.meta_value("detector");
    if (!stored.empty()) {
      try {
        r.params = detector_from_json(json::parse(stored));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kMalformedTrace, std::string("detector metadata: ") + e.what());
      } catch (const Error& e) {
        throw Error(ErrorCode::kMalformedTrace, std::string("detector metadata: ") + e.what());
      }
    }
  }
  r.params.validate();
  r.verdict = analyze(r.trace.records, r.params);
  if (r.verdict.state == ContactState::kContact) r.drop = sustained_drop(r.trace.records, r.verdict.onset, r.params);
  return r;
}

void write_replay_series(const ReplayOutput& r, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Point2 start = Point2::Zero();
  const std::string s = r.trace.meta_value("start_tip_mm");
  if (!s.empty()) {
    try {
      start = point_from(json::parse(s), "start_tip_mm");
    } catch (const json::exception&) {
      throw Error(ErrorCode::kMalformedTrace, "start_tip_mm metadata is not a point");
    }
  }
  write_file(out_dir / "replay_tip_path.csv", tip_path_csv(r.trace.records, start, nullptr));
  write_file(out_dir / "replay_jnorm.csv", jnorm_csv(r.trace.records));
  write_file(out_dir / "replay_cables.csv", cables_csv(r.trace.records));
  write_file(out_dir / "replay_verdict.json", verdict_json(r.verdict, r.drop).dump(2) + "\n");
}

// ---------------------------------------------------------------- sweep

std::vector<SweepCase> sweep_cases(int runs_per_class, std::uint64_t base_seed) {
  std::vector<SweepCase> cases;
  const char* classes[] = {"free_p1", "free_p2", "free_p3", "soft", "hard"};
  for (const char* cls : classes) {
    for (int i = 0; i < runs_per_class; ++i) {
      SweepCase c;
      c.cls = cls;
      c.seed = base_seed + static_cast<std::uint64_t>(i);
      if (c.cls == "soft" || c.cls == "hard") {
        // Obstacle jittered around the default placement on the p3 path.
        Rng rng(c.seed * 7919 + (c.cls == "hard" ? 1 : 0));
        std::uniform_real_distribution<double> offset(-1.5, 1.5);
        Obstacle ob = default_obstacle(c.cls == "hard" ? ObstacleKind::kHard : ObstacleKind::kSoft);
        const double dx = offset(rng);
        const double dy = offset(rng);
        ob.center += Point2(dx, dy);
        c.obstacle = ob;
      }
      cases.push_back(c);
    }
  }
  return cases;
}

Scenario sweep_scenario(const SweepCase& c, const Scenario& base) {
  Scenario s = base;
  s.seed = c.seed;
  s.obstacles.clear();
  if (c.cls == "free_p1") {
    s.id = "free_p1";
    s.targets = {kTargetP1};
  } else if (c.cls == "free_p2") {
    s.id = "free_p2";
    s.targets = {kTargetP2};
  } else if (c.cls == "free_p3") {
    s.id = "free_p3";
    s.targets = {kTargetP3};
  } else {
    s.id = c.cls + "_p3";
    s.targets = {kTargetP3};
    if (c.obstacle) s.obstacles = {*c.obstacle};
  }
  return s;
}

std::vector<SweepResult> run_sweep(const std::vector<SweepCase>& cases, const CalibrationMap& map, int threads,
                                   const Scenario& base) {
  std::vector<SweepResult> results(cases.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cases.size(); i = next++) {
      SweepResult& r = results[i];
      r.c = cases[i];
      try {
        const RunOutput run = execute(sweep_scenario(cases[i], base), map);
        r.verdict = run.verdict;
        r.drop = run.drop;
        r.truth_first_contact = run.truth_first_contact;
        r.truth_contact_records = run.truth_contact_records;
        r.final_true_error = run.legs.back().true_error();
        r.final_measured_error = run.legs.back().measured_error();
        r.iterations = static_cast<int>(run.trace.size());
        r.trace = run.trace;
        r.run_verdict = run.legs.back().verdict;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const int n = std::max(1, threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

SweepSummary summarize_sweep(const std::vector<SweepResult>& results, int onset_tolerance) {
  SweepSummary s;
  for (const auto& r : results) {
    if (!r.error.empty()) {
      ++s.errors;
      continue;
    }
    const bool contact = r.verdict.state == ContactState::kContact;
    if (!r.c.obstacle) {
      ++s.free_runs;
      if (contact) ++s.false_positives;
      continue;
    }
    if (r.truth_contact_records < 20) continue;
    ++s.contact_runs;
    if (!contact) continue;
    ++s.detected;
    ++s.classified;
    const Hardness truth = r.c.obstacle->kind == ObstacleKind::kHard ? Hardness::kHard : Hardness::kSoft;
    if (r.verdict.hardness == truth) ++s.correct_class;
    ++s.onset_checked;
    if (std::abs(r.verdict.onset - r.truth_first_contact) <= onset_tolerance) ++s.onset_within;
  }
  return s;
}

std::vector<SweepResult> reanalyze(std::vector<SweepResult> results, const DetectorParams& params) {
  for (auto& r : results) {
    if (!r.error.empty()) continue;
    r.verdict = analyze(r.trace, params);
    r.drop.reset();
    if (r.verdict.state == ContactState::kContact) r.drop = sustained_drop(r.trace, r.verdict.onset, params);
  }
  return results;
}

DetectorCalibration calibrate_detector(const std::vector<SweepResult>& results, const DetectorParams& base,
                                       const std::vector<double>& soft_grid, const std::vector<double>& hard_grid) {
  DetectorCalibration cal;
  cal.params = base;
  // Onset threshold: the configured value if it meets the detection targets,
  // else the most sensitive grid value that does.
  auto onset_ok = [](const SweepSummary& sum) {
    return sum.false_positives == 0 && sum.recall() >= 0.95 && sum.onset_within == sum.onset_checked;
  };
  auto onset_summary = [&](double soft) {
    DetectorParams p = base;
    p.drop_threshold_soft = soft;
    p.drop_threshold_hard = std::max(base.drop_threshold_hard, soft + 1e-6);
    return summarize_sweep(reanalyze(results, p));
  };
  std::optional<double> chosen;
  for (double soft : soft_grid) {
    const SweepSummary sum = onset_summary(soft);
    cal.onset_rows.push_back({soft, sum});
    if (onset_ok(sum) && !chosen) chosen = soft;
  }
  if (onset_ok(onset_summary(base.drop_threshold_soft))) chosen = base.drop_threshold_soft;
  if (!chosen) throw Error(ErrorCode::kInvalidArgument, "no onset threshold meets the detection targets");
  cal.params.drop_threshold_soft = *chosen;

  // Hardness threshold: grid accuracy, then the midpoint of the gap between
  // the largest soft drop and the smallest hard drop when the classes separate.
  const auto analyzed = reanalyze(results, cal.params);
  double soft_max = -1e300, hard_min = 1e300;
  for (const auto& r : analyzed) {
    if (!r.error.empty() || !r.c.obstacle || !r.drop || r.truth_contact_records < 20) continue;
    if (r.c.obstacle->kind == ObstacleKind::kHard) {
      hard_min = std::min(hard_min, std::abs(*r.drop));
    } else {
      soft_max = std::max(soft_max, std::abs(*r.drop));
    }
  }
  cal.soft_drop_max = soft_max;
  cal.hard_drop_min = hard_min;
  double best_acc = -1.0, best_hard = base.drop_threshold_hard;
  for (double hard : hard_grid) {
    if (hard <= cal.params.drop_threshold_soft) continue;
    DetectorParams p = cal.params;
    p.drop_threshold_hard = hard;
    const SweepSummary sum = summarize_sweep(reanalyze(analyzed, p));
    cal.hardness_rows.push_back({hard, sum});
    if (sum.accuracy() > best_acc) {
      best_acc = sum.accuracy();
      best_hard = hard;
    }
  }
  cal.params.drop_threshold_hard =
      soft_max < hard_min ? std::round(50.0 * (soft_max + hard_min)) / 100.0 : best_hard;
  cal.summary = summarize_sweep(reanalyze(analyzed, cal.params));
  return cal;
}

std::string calibration_report(const DetectorCalibration& cal, int runs_per_class, std::uint64_t base_seed) {
  char buf[256];
  std::string md = "# Contact detector calibration\n\n";
  std::snprintf(buf, sizeof buf,
                "Corpus: %d seeded runs per class (free_p1, free_p2, free_p3, soft, hard), seeds %llu..%llu.\n",
                runs_per_class, static_cast<unsigned long long>(base_seed),
                static_cast<unsigned long long>(base_seed + static_cast<std::uint64_t>(runs_per_class) - 1));
  md += buf;
  md += "Obstacle runs place a radius 5 mm circle at the default center jittered by up to 1.5 mm per axis.\n";
  md += "Only obstacle runs with at least 20 records of simulated contact count toward recall, accuracy and onset.\n";
  md += "Regenerate with `cdmlab sweep --report <file>`.\n\n";
  md += "## Onset threshold (relative norm deviation)\n\n";
  md += "| threshold | false positives | recall | onset within 15 |\n|---|---|---|---|\n";
  for (const auto& [t, s] : cal.onset_rows) {
    std::snprintf(buf, sizeof buf, "| %.2f | %d / %d | %.3f | %d / %d |\n", t, s.false_positives, s.free_runs,
                  s.recall(), s.onset_within, s.onset_checked);
    md += buf;
  }
  md += "\nChosen: the configured threshold when it has no false positives, recall >= 0.95 and every onset\n"
        "within 15, else the smallest grid value that does.\n\n";
  md += "## Hardness threshold (sustained drop)\n\n";
  std::snprintf(buf, sizeof buf, "Largest soft drop %.3f, smallest hard drop %.3f.\n\n", cal.soft_drop_max,
                cal.hard_drop_min);
  md += buf;
  md += "| threshold | accuracy |\n|---|---|\n";
  for (const auto& [t, s] : cal.hardness_rows) {
    std::snprintf(buf, sizeof buf, "| %.2f | %.3f |\n", t, s.accuracy());
    md += buf;
  }
  md += "\nChosen: the middle of the gap between the classes, to two decimals, when they separate, else the\n"
        "most accurate grid value.\n\n";
  md += "## Result\n\n";
  std::snprintf(buf, sizeof buf,
                "drop_threshold_soft = %.3f, drop_threshold_hard = %.3f\n\n"
                "false positives %d / %d, recall %.3f, accuracy %.3f, onset within 15: %d / %d\n",
                cal.params.drop_threshold_soft, cal.params.drop_threshold_hard, cal.summary.false_positives,
                cal.summary.free_runs, cal.summary.recall(), cal.summary.accuracy(), cal.summary.onset_within,
                cal.summary.onset_checked);
  md += buf;
  return md;
}

void write_sweep_artifacts(const std::vector<SweepResult>& results, const SweepSummary& summary,
                           const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::string csv =
      "class,seed,obstacle_lat,obstacle_ax,obstacle_radius,state,onset,hardness,wrapped,sustained_drop,"
      "truth_first_contact,truth_contact_records,iterations,final_true_error,final_measured_error,error\n";
  for (const auto& r : results) {
    csv += r.c.cls + "," + std::to_string(r.c.seed) + ",";
    if (r.c.obstacle) {
      csv += format_double(r.c.obstacle->center(0)) + "," + format_double(r.c.obstacle->center(1)) + "," +
             format_double(r.c.obstacle->radius) + ",";
    } else {
      csv += ",,,";
    }
    csv += std::string(to_string(r.verdict.state)) + "," + std::to_string(r.verdict.onset) + "," +
           to_string(r.verdict.hardness) + "," + (r.verdict.wrapped ? "1" : "0") + "," +
           (r.drop ? format_double(*r.drop) : "") + "," + std::to_string(r.truth_first_contact) + "," +
           std::to_string(r.truth_contact_records) + "," + std::to_string(r.iterations) + "," +
           format_double(r.final_true_error) + "," + format_double(r.final_measured_error) + ",";
    std::string err = r.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    csv += err + "\n";
  }
  write_file(out_dir / "sweep_runs.csv", csv);
  const json j = {{"free_runs", summary.free_runs},
                  {"false_positives", summary.false_positives},
                  {"contact_runs", summary.contact_runs},
                  {"detected", summary.detected},
                  {"recall", summary.recall()},
                  {"classified", summary.classified},
                  {"correct_class", summary.correct_class},
                  {"accuracy", summary.accuracy()},
                  {"onset_checked", summary.onset_checked},
                  {"onset_within_15", summary.onset_within},
                  {"errors", summary.errors}};
  write_file(out_dir / "sweep_summary.json", j.dump(2) + "\n");
}

}  // namespace cdm
