// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <fstream>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cdm/harness.hpp"
#include "cdm/qp_core.hpp"
#include "support.hpp"

using namespace cdm;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(int n, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", n, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Timed {
  RunOutput run;
  double wall = 0.0;
  ArtifactPaths paths;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// Least-squares slope of j_norm over records [a, b).
double slope(const std::vector<StepRecord>& t, int a, int b) {
  double mk = 0, mj = 0;
  for (int i = a; i < b; ++i) {
    mk += i;
    mj += t[static_cast<std::size_t>(i)].j_norm;
  }
  mk /= (b - a);
  mj /= (b - a);
  double skk = 0, skj = 0;
  for (int i = a; i < b; ++i) {
    skk += (i - mk) * (i - mk);
    skj += (i - mk) * (t[static_cast<std::size_t>(i)].j_norm - mj);
  }
  return skj / skk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_runs";
  int runs_per_class = 50;
  int only = 0;
  app.add_option("--work-dir", work, "directory for persisted run artifacts");
  app.add_option("--runs", runs_per_class, "detector corpus runs per class");
  app.add_option("--only", only, "check a single criterion")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (only) work += "_" + std::to_string(only);
  fs::remove_all(work);
  fs::create_directories(work);
  auto want = [&](int n) { return only == 0 || only == n; };

  // Default scenario suite, persisted; only run when a criterion needs it.
  std::map<std::string, Timed> runs;
  double suite_wall = 0.0;
  if (want(1) || want(5) || want(6) || want(7) || want(10)) {
    const auto suite_t0 = std::chrono::steady_clock::now();
    for (const auto& id : builtin_scenario_ids()) {
      if (id == "custom") continue;
      Timed t;
      const auto t0 = std::chrono::steady_clock::now();
      t.run = execute(builtin_scenario(id, 1));
      t.wall = seconds_since(t0);
      write_run_artifacts(t.run, fs::path(work) / "a", &t.paths);
      runs[id] = std::move(t);
    }
    suite_wall = seconds_since(suite_t0);
  }

  if (want(1)) {  // 1
    bool ok = suite_wall < 60.0;
    std::string d;
    for (const char* id : {"free_p1", "free_p2", "free_p3"}) {
      const auto& t = runs.at(id);
      const auto& leg = t.run.legs.at(0);
      ok = ok && leg.verdict == RunVerdict::kConverged && leg.measured_error() < 0.05 && leg.true_error() < 0.25 &&
           leg.iterations < 2000 && t.wall < 10.0;
      d += fmt("%s: %d it, |dx_des| %.4f, true %.4f mm, %.2f s; ", id, leg.iterations, leg.measured_error(),
               leg.true_error(), t.wall);
    }
    d += fmt("suite %.1f s", suite_wall);
    verdict(1, ok, "free-space convergence", d);
  }

  if (want(2)) {  // 2
    const std::array<double, 3> aa{8.0, 18.0, 28.0};
    double worst = 0.0;
    for (double rho : {0.0, 100.0, 60.0, 40.0, 20.0}) {
      const double k = rho == 0.0 ? 0.0 : 1e3 / rho;
      const Point2 tip = integrate_shape(interpolate_curvature({k, k, k}, aa, 10, 34.0)).back();
      worst = std::max(worst, (tip - oracle::arc_endpoint(k, 34.0)).norm());
    }
    const std::array<double, 3> prof{10.0, 70.0, 130.0};
    const Point2 ref = oracle::profile_endpoint(prof, aa, 34.0);
    std::vector<double> err;
    for (int n : {5, 10, 20, 40}) err.push_back((integrate_shape(interpolate_curvature(prof, aa, n, 34.0)).back() - ref).norm());
    bool order_ok = true;
    std::string orders;
    for (std::size_t i = 1; i < err.size(); ++i) {
      const double o = std::log2(err[i - 1] / err[i]);
      order_ok = order_ok && err[i] < err[i - 1] && o > 1.8 && o < 2.2;
      orders += fmt("%.2f ", o);
    }
    verdict(2, worst < 0.05 && order_ok, "shape reconstruction against arc oracle",
            fmt("worst arc error %.2e mm; observed order on a varying profile %s", worst, orders.c_str()));
  }

  if (want(3)) {  // 3
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    double eq = 0, sec = 0;
    for (int t = 0; t < 1000; ++t) {
      JacobianEstimate J;
      J.J << N(rng), N(rng), N(rng), N(rng);
      Pull dl(N(rng), N(rng));
      while (dl.norm() < 1e-3) dl = Pull(N(rng), N(rng));
      const Point2 dx(N(rng), N(rng));
      const auto u = update_jacobian(J, dl, dx, 1e-4);
      eq = std::max(eq, (u.J - broyden_closed_form(J.J, dl, dx)).norm());
      sec = std::max(sec, (dx - u.J * dl).norm());
    }
    verdict(3, eq < 1e-10 && sec < 1e-9, "Jacobian update equivalence",
            fmt("max Frobenius gap %.2e, max secant residual %.2e over 1000", eq, sec));
  }

  if (want(4)) {  // 4
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> nd(1, 6), md(0, 12);
    double gap = 0, kkt = 0;
    int missing = 0;
    for (int t = 0; t < 1000; ++t) {
      const int n = nd(rng);
      const int p = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);
      const auto pr = oracle::random_qp(rng, n, p, md(rng));
      const auto sol = qp::solve(pr);
      const auto ref = oracle::brute_force_qp(pr);
      if (!ref) {
        ++missing;
        continue;
      }
      gap = std::max(gap, (sol.x - *ref).cwiseAbs().maxCoeff());
      kkt = std::max(kkt, qp::stationarity_residual(pr, sol));
    }
    verdict(4, gap < 1e-7 && kkt < 1e-8 && missing == 0, "QP against enumeration oracle",
            fmt("max gap %.2e, max KKT residual %.2e over 1000", gap, kkt));
  }

  if (want(5)) {  // 5: from the persisted trace and truth files
    const ControlConstraints cons;
    double worst = -1e9, step = 0, coupling = 0, pull = 0;
    std::size_t records = 0;
    bool parsed = true;
    for (const auto& [id, t] : runs) {
      std::ifstream in(t.paths.trace);
      const TraceFile tf = read_trace_csv(in);
      const auto truth = read_csv(t.paths.truth);
      if (truth.size() != tf.records.size()) parsed = false;
      Pull p = Pull::Zero();
      for (std::size_t i = 0; i < tf.records.size(); ++i) {
        const Pull dl = tf.records[i].dl;
        worst = std::max(worst, (cons.A() * dl - cons.b(p)).maxCoeff());
        step = std::max(step, dl.cwiseAbs().maxCoeff());
        coupling = std::max(coupling, std::abs(dl.sum()));
        // Drive position after the step as the controller saw it.
        p = Pull(std::stod(truth[i][1]), std::stod(truth[i][2]));
        pull = std::max(pull, p.maxCoeff());
        ++records;
      }
    }
    verdict(5, parsed && worst <= 1e-9 && step <= 1.0 + 1e-9 && coupling <= 0.1 + 1e-9 && pull <= 7.0 + 1e-9,
            "constraint compliance on persisted traces",
            fmt("%zu records, max A dl - b %.2e, max |dl_i| %.3f, max |dl1+dl2| %.4f, max pull %.3f mm", records,
                worst, step, coupling, pull));
  }

  if (want(6)) {  // 6
    const auto& r = runs.at("repeatability").run;
    const auto& legs = r.legs;
    bool ok = legs.size() == 4;
    std::string d;
    if (ok) {
      auto cables = [&](int first_leg) {
        std::vector<Pull> c;
        Pull p = Pull::Zero();
        for (std::size_t i = 0; i < r.trace.size(); ++i) {
          p += r.trace[i].dl;
          const int leg = i < static_cast<std::size_t>(legs[1].first_record)   ? 0
                          : i < static_cast<std::size_t>(legs[2].first_record) ? 1
                          : i < static_cast<std::size_t>(legs[3].first_record) ? 2
                                                                               : 3;
          if (leg / 2 == first_leg / 2) c.push_back(p);
        }
        return c;
      };
      const auto c1 = cables(0), c2 = cables(2);
      double range = 0, dev = 0;
      for (const auto& p : c1) range = std::max(range, p.cwiseAbs().maxCoeff());
      const std::size_t n = std::max(c1.size(), c2.size());
      for (std::size_t i = 0; i < n; ++i) {
        const Pull a = c1[std::min(i, c1.size() - 1)], b = c2[std::min(i, c2.size() - 1)];
        dev = std::max(dev, (a - b).cwiseAbs().maxCoeff());
      }
      const double rel = dev / (2.0 * range);
      std::array<double, 4> s{};
      for (int l = 0; l < 4; ++l) {
        const int a = legs[static_cast<std::size_t>(l)].first_record;
        const int b = l < 3 ? legs[static_cast<std::size_t>(l + 1)].first_record : static_cast<int>(r.trace.size());
        s[static_cast<std::size_t>(l)] = slope(r.trace, a, b);
      }
      ok = rel < 0.01 && s[0] > 0 && s[1] < 0 && s[2] > 0 && s[3] < 0;
      d = fmt("cycle deviation %.2f%% of cable range, leg norm slopes %+.4f %+.4f %+.4f %+.4f", 100 * rel, s[0], s[1],
              s[2], s[3]);
    }
    verdict(6, ok, "repeatability", d);
  }

  if (want(7)) {  // 7
    const auto& hard = runs.at("hard_p3").run;
    const auto& soft = runs.at("soft_p3").run;
    const auto& freer = runs.at("free_p3").run;
    const double eh = hard.legs.back().true_error(), es = soft.legs.back().true_error(),
                 ef = freer.legs.back().true_error();
    const double mh = hard.legs.back().measured_error(), ms = soft.legs.back().measured_error(),
                 mf = freer.legs.back().measured_error();
    const double dh = hard.drop.value_or(-1), ds = soft.drop.value_or(-1);
    verdict(7, eh > es && es > ef && mh > ms && ms > mf && hard.drop && soft.drop && dh > ds,
            "obstacle ordering",
            fmt("true error hard %.3f > soft %.3f > free %.3f mm (measured %.3f, %.3f, %.3f); drop hard %.3f > soft %.3f",
                eh, es, ef, mh, ms, mf, dh, ds));
  }

  if (want(8)) {  // 8
    const Scenario base = builtin_scenario("custom");
    const std::uint64_t seed = 1000;
    const auto map = calibrate_scenario(base.fbg, base.jigs, base.calibration_frames_per_jig, seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_sweep(sweep_cases(runs_per_class, seed), map, 1, base);
    const auto s = summarize_sweep(results);
    verdict(8,
            s.errors == 0 && s.free_runs >= 3 * runs_per_class && s.false_positives == 0 && s.recall() >= 0.95 &&
                s.accuracy() >= 0.90 && s.onset_within == s.onset_checked,
            "detector on seeded corpus",
            fmt("%d runs per class; false positives %d/%d, recall %.3f (%d/%d), accuracy %.3f, onset within 15 %d/%d, "
                "%.0f s",
                runs_per_class, s.false_positives, s.free_runs, s.recall(), s.detected, s.contact_runs, s.accuracy(),
                s.onset_within, s.onset_checked, seconds_since(t0)));
  }

  if (want(9)) {  // 9
    FbgLayout quiet;
    quiet.noise_sigma = 0.0;
    CalibrationJigSet jigs;
    const auto map = calibrate(jigs, jig_frames(quiet, jigs, 1, 1));
    double rt = 0;
    for (double k : jigs.curvatures) {
      ChannelValues kv;
      kv.fill(k);
      for (double v : curvatures(shifts_from_curvature(quiet, kv, 0), map)) rt = std::max(rt, std::abs(v - k));
    }
    const auto cfg = CdmConfig::defaults();
    const auto state = equilibrium(cfg, Pull(3.0, -3.0), {});
    FbgLayout noisy;
    noisy.noise_sigma = 0.001;
    const auto nmap = calibrate_scenario(noisy, jigs, 200, 9);
    FbgStream st(noisy, 9);
    const ChannelValues k = sensed_curvatures(cfg, state, noisy);
    std::vector<std::array<Point2, 3>> pts;
    for (int i = 0; i < 1000; ++i) {
      const auto r = reconstruct(st.next(k), nmap, noisy, cfg.active_length);
      pts.push_back({r.tip, r.fibers[0].back(), r.fibers[1].back()});
    }
    std::array<double, 3> var{};
    for (int j = 0; j < 3; ++j) {
      Point2 m = Point2::Zero();
      for (const auto& p : pts) m += p[static_cast<std::size_t>(j)];
      m /= 1000.0;
      for (const auto& p : pts) var[static_cast<std::size_t>(j)] += (p[static_cast<std::size_t>(j)] - m).squaredNorm();
      var[static_cast<std::size_t>(j)] /= 999.0;
    }
    verdict(9, rt < 1e-6 && std::sqrt(var[0]) < 0.1 && var[0] < var[1] && var[0] < var[2], "calibration round trip",
            fmt("round-trip error %.2e 1/m; tip std %.4f mm; fused variance %.2e < fiber variances %.2e, %.2e mm^2", rt,
                std::sqrt(var[0]), var[0], var[1], var[2]));
  }

  if (want(10)) {  // 10
    bool same = true;
    std::string diff;
    for (const auto& [id, t] : runs) {
      const auto again = execute(builtin_scenario(id, 1));
      ArtifactPaths p;
      write_run_artifacts(again, fs::path(work) / "b", &p);
      auto rel = [&](const fs::path& x) { return read_file(x); };
      const bool trace_same = rel(p.trace) == rel(t.paths.trace);
      // Reports name their own artifact paths; compare with the directory swapped.
      std::string rep_b = rel(p.report);
      const std::string from = (fs::path(work) / "b").string(), to = (fs::path(work) / "a").string();
      for (std::size_t pos = rep_b.find(from); pos != std::string::npos; pos = rep_b.find(from, pos + to.size()))
        rep_b.replace(pos, from.size(), to);
      const bool rep_same = rep_b == rel(t.paths.report);
      if (!trace_same || !rep_same) {
        same = false;
        diff += id + " ";
      }
    }
    verdict(10, same, "determinism",
            same ? fmt("%zu scenarios re-run: traces and reports byte-identical", runs.size()) : "differs: " + diff);
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
