#pragma once

// Contact inference from the controller trace: a change detector on the
// Jacobian norm against its own recent free-space trend, hardness from the
// size of the sustained drop, and a stall test for wrapping.

#include <vector>

#include "cdm/controller.hpp"

namespace cdm {

struct DetectorParams {
  int baseline_window = 30;
  double drop_threshold_soft = 0.10;
  double drop_threshold_hard = 0.75;  // calibrated, see docs/detector_calibration.md
  double stall_progress_ratio = 0.05;  // mm tip per mm cable
  int stall_window = 20;
  int persistence = 10;
  double epsilon = 0.05;  // mm, progress test only applies while farther than this

  void validate() const;
};

enum class ContactState { kFree, kContact };
enum class Hardness { kUnknown, kSoft, kHard };

struct ContactVerdict {
  ContactState state = ContactState::kFree;
  int onset = -1;  // record index of the first deviating iteration
  Hardness hardness = Hardness::kUnknown;
  bool wrapped = false;
};

const char* to_string(ContactState s);
const char* to_string(Hardness h);

// Throws TraceTooShort unless the trace is longer than baseline_window.
ContactVerdict detect(const std::vector<StepRecord>& trace, const DetectorParams& params);

// Median relative drop of the norm after onset, against the reference held
// at onset. Positive means the norm fell.
double sustained_drop(const std::vector<StepRecord>& trace, int onset, const DetectorParams& params);

// Throws NotInContact if verdict.state is Free.
Hardness classify(const std::vector<StepRecord>& trace, const ContactVerdict& verdict, const DetectorParams& params);

bool detect_wrap(const std::vector<StepRecord>& trace, const DetectorParams& params);

// detect, then classify and detect_wrap when in contact. Short traces are Free.
ContactVerdict analyze(const std::vector<StepRecord>& trace, const DetectorParams& params);

}  // namespace cdm
