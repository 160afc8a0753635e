#include "cdm/collision.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdm/errors.hpp"

namespace cdm {
namespace {

struct Line {
  double a = 0.0;  // value at k = 0
  double b = 0.0;  // slope per record
  double at(double k) const { return a + b * k; }
};

// Least-squares line through j_norm at the given record indices.
Line fit_trend(const std::vector<StepRecord>& t, const int* idx, int n) {
  double mk = 0.0, mj = 0.0;
  for (int i = 0; i < n; ++i) {
    mk += idx[i];
    mj += t[static_cast<std::size_t>(idx[i])].j_norm;
  }
  mk /= n;
  mj /= n;
  double skk = 0.0, skj = 0.0;
  for (int i = 0; i < n; ++i) {
    skk += (idx[i] - mk) * (idx[i] - mk);
    skj += (idx[i] - mk) * (t[static_cast<std::size_t>(idx[i])].j_norm - mj);
  }
  Line l;
  l.b = skk > 0 ? skj / skk : 0.0;
  l.a = mj - l.b * mk;
  return l;
}

Line fit_trend(const std::vector<StepRecord>& t, int first, int last) {
  std::vector<int> idx(static_cast<std::size_t>(last - first));
  for (int i = first; i < last; ++i) idx[static_cast<std::size_t>(i - first)] = i;
  return fit_trend(t, idx.data(), last - first);
}

double relative(double value, double ref) { return (value - ref) / std::max(std::abs(ref), 1e-12); }

}  // namespace

void DetectorParams::validate() const {
  auto bad = [](const std::string& w) { throw Error(ErrorCode::kInvalidArgument, "DetectorParams: " + w); };
  if (!(drop_threshold_soft > 0 && drop_threshold_soft < drop_threshold_hard && drop_threshold_hard < 1)) {
    bad("need 0 < drop_threshold_soft < drop_threshold_hard < 1");
  }
  if (baseline_window < 2 || stall_window < 2) bad("windows must be >= 2");
  if (persistence < 1) bad("persistence must be >= 1");
  if (!(stall_progress_ratio > 0)) bad("stall_progress_ratio must be > 0");
  if (!(epsilon > 0)) bad("epsilon must be > 0");
}

const char* to_string(ContactState s) { return s == ContactState::kFree ? "Free" : "Contact"; }

const char* to_string(Hardness h) {
  switch (h) {
    case Hardness::kSoft: return "Soft";
    case Hardness::kHard: return "Hard";
    default: return "Unknown";
  }
}

namespace {

struct Scan {
  ContactVerdict verdict;
  Line reference;  // trend in force when the excursion that became contact began
};

Scan scan(const std::vector<StepRecord>& trace, const DetectorParams& params) {
  const int n = static_cast<int>(trace.size());
  const int w = params.baseline_window;
  Scan out;
  Line ref;
  int run = 0;
  int run_start = -1;
  // Records that stayed on the trend; excursions that die out are left out
  // of later reference fits so a short blip cannot tilt the trend.
  std::vector<int> clean;
  for (int k = 0; k < w; ++k) clean.push_back(k);
  for (int k = w; k < n; ++k) {
    // The reference follows the trailing window only while no excursion is open.
    if (run == 0) ref = fit_trend(trace, clean.data() + clean.size() - w, w);
    const double dev = relative(trace[static_cast<std::size_t>(k)].j_norm, ref.at(k));
    if (std::abs(dev) > params.drop_threshold_soft) {
      if (run == 0) run_start = k;
      if (++run >= params.persistence) {
        out.verdict.state = ContactState::kContact;
        out.verdict.onset = run_start;
        out.reference = ref;
        return out;
      }
    } else {
      run = 0;
      clean.push_back(k);
    }
  }
  return out;
}

void check_length(const std::vector<StepRecord>& trace, const DetectorParams& params) {
  const int n = static_cast<int>(trace.size());
  if (n <= params.baseline_window) {
    throw Error(ErrorCode::kTraceTooShort, "trace has " + std::to_string(n) + " records, needs more than " +
                                               std::to_string(params.baseline_window));
  }
}

}  // namespace

ContactVerdict detect(const std::vector<StepRecord>& trace, const DetectorParams& params) {
  params.validate();
  check_length(trace, params);
  return scan(trace, params).verdict;
}

double sustained_drop(const std::vector<StepRecord>& trace, int onset, const DetectorParams& params) {
  const int n = static_cast<int>(trace.size());
  const int w = params.baseline_window;
  if (onset < w || onset >= n) throw Error(ErrorCode::kInvalidArgument, "onset outside the trace");
  // Same reference the detector held at onset when the onset is its own;
  // otherwise the plain trailing window.
  const Scan sc = scan(trace, params);
  const double ref =
      (sc.verdict.onset == onset ? sc.reference : fit_trend(trace, onset - w, onset)).at(onset);
  std::vector<double> drops;
  for (int k = onset; k < n; ++k) drops.push_back(-relative(trace[static_cast<std::size_t>(k)].j_norm, ref));
  const auto mid = drops.begin() + static_cast<std::ptrdiff_t>(drops.size() / 2);
  std::nth_element(drops.begin(), mid, drops.end());
  double med = *mid;
  if (drops.size() % 2 == 0) {
    const double lower = *std::max_element(drops.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return med;
}

Hardness classify(const std::vector<StepRecord>& trace, const ContactVerdict& verdict, const DetectorParams& params) {
  if (verdict.state != ContactState::kContact) throw Error(ErrorCode::kNotInContact, "no contact to classify");
  const double drop = sustained_drop(trace, verdict.onset, params);
  return std::abs(drop) > params.drop_threshold_hard ? Hardness::kHard : Hardness::kSoft;
}

bool detect_wrap(const std::vector<StepRecord>& trace, const DetectorParams& params) {
  params.validate();
  const int n = static_cast<int>(trace.size());
  const int w = params.stall_window;
  if (n <= w) return false;
  for (int end = w; end < n; ++end) {
    if (trace[static_cast<std::size_t>(end)].dx_des.norm() <= params.epsilon) continue;
    // Net tip travel over the window against total cable travel, so sensor
    // noise averages out and back-and-forth drive counts as no progress.
    double cable = 0.0;
    for (int i = end - w + 1; i <= end; ++i) cable += trace[static_cast<std::size_t>(i)].dl.norm();
    if (cable <= 0.0) continue;
    const double travel = (trace[static_cast<std::size_t>(end)].x - trace[static_cast<std::size_t>(end - w)].x).norm();
    if (travel / cable < params.stall_progress_ratio) return true;
  }
  return false;
}

ContactVerdict analyze(const std::vector<StepRecord>& trace, const DetectorParams& params) {
  if (static_cast<int>(trace.size()) <= params.baseline_window) return {};
  ContactVerdict v = detect(trace, params);
  if (v.state == ContactState::kContact) {
    v.hardness = classify(trace, v, params);
    v.wrapped = detect_wrap(trace, params);
  }
  return v;
}

}  // namespace cdm
