#pragma once

// Trace CSV: '#'-prefixed "key: value" metadata lines, then the header
// k,dl1,dl2,x_lat,x_ax,dxdes_lat,dxdes_ax,Jnorm,active_set,timestamp
// with active-set row indices joined by ';', and a closing "# end: <records>"
// line so truncation is detectable.

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cdm/controller.hpp"

namespace cdm {

using TraceMeta = std::vector<std::pair<std::string, std::string>>;

struct TraceFile {
  TraceMeta meta;
  std::vector<StepRecord> records;

  // Value of a metadata key, or empty.
  std::string meta_value(const std::string& key) const;
};

std::string trace_csv_header();

// Shortest text that reads back to the same double.
std::string format_double(double v);

void write_trace_csv(std::ostream& out, const TraceMeta& meta, const std::vector<StepRecord>& records);

// Throws MalformedTrace naming the line (and column where relevant).
TraceFile read_trace_csv(std::istream& in);

}  // namespace cdm
