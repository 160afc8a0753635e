#include "cdm/trace_io.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "cdm/errors.hpp"

namespace cdm {

std::string TraceFile::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return {};
}

std::string trace_csv_header() { return "k,dl1,dl2,x_lat,x_ax,dxdes_lat,dxdes_ax,Jnorm,active_set,timestamp"; }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(std::ostream& out, const TraceMeta& meta, const std::vector<StepRecord>& records) {
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << '\n';
  out << trace_csv_header() << '\n';
  for (const auto& r : records) {
    std::string active;
    for (std::size_t i = 0; i < r.active_set.size(); ++i) {
      if (i) active += ';';
      active += std::to_string(r.active_set[i]);
    }
    out << r.k << ',' << format_double(r.dl(0)) << ',' << format_double(r.dl(1)) << ',' << format_double(r.x(0))
        << ',' << format_double(r.x(1)) << ',' << format_double(r.dx_des(0)) << ',' << format_double(r.dx_des(1))
        << ',' << format_double(r.j_norm) << ',' << active << ',' << format_double(r.timestamp) << '\n';
  }
  out << "# end: " << records.size() << '\n';
}

namespace {

[[noreturn]] void malformed(int line, int column, const std::string& what) {
  std::string where = "trace line " + std::to_string(line);
  if (column > 0) where += ", column " + std::to_string(column);
  throw Error(ErrorCode::kMalformedTrace, where + ": " + what);
}

double parse_double(const std::string& s, int line, int column) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    malformed(line, column, "'" + s + "' is not a number");
  }
  return v;
}

int parse_int(const std::string& s, int line, int column) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    malformed(line, column, "'" + s + "' is not an integer");
  }
  return v;
}

}  // namespace

TraceFile read_trace_csv(std::istream& in) {
  TraceFile tf;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  int end_count = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (end_count >= 0) malformed(lineno, 0, "content after the end marker");
    if (line[0] == '#') {
      if (header_seen) {
        if (line.rfind("# end:", 0) != 0) malformed(lineno, 0, "metadata after the header");
        std::string count = line.substr(6);
        count.erase(0, count.find_first_not_of(' '));
        end_count = parse_int(count, lineno, 0);
        if (end_count != static_cast<int>(tf.records.size())) {
          malformed(lineno, 0, "end marker says " + count + " records, found " + std::to_string(tf.records.size()));
        }
        continue;
      }
      const auto colon = line.find(':');
      if (colon == std::string::npos) malformed(lineno, 0, "metadata line without ':'");
      std::string key = line.substr(1, colon - 1);
      std::string value = line.substr(colon + 1);
      auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
      };
      trim(key);
      trim(value);
      tf.meta.emplace_back(key, value);
      continue;
    }
    if (!header_seen) {
      if (line != trace_csv_header()) malformed(lineno, 0, "expected header '" + trace_csv_header() + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 10) {
      malformed(lineno, 0, "expected 10 columns, found " + std::to_string(cells.size()));
    }
    StepRecord r;
    r.k = parse_int(cells[0], lineno, 1);
    r.dl = Pull(parse_double(cells[1], lineno, 2), parse_double(cells[2], lineno, 3));
    r.x = Point2(parse_double(cells[3], lineno, 4), parse_double(cells[4], lineno, 5));
    r.dx_des = Point2(parse_double(cells[5], lineno, 6), parse_double(cells[6], lineno, 7));
    r.j_norm = parse_double(cells[7], lineno, 8);
    if (!cells[8].empty()) {
      std::stringstream as(cells[8]);
      std::string idx;
      while (std::getline(as, idx, ';')) {
        const int row = parse_int(idx, lineno, 9);
        if (row < 0 || row >= kConstraintRows) malformed(lineno, 9, "active-set row out of range");
        r.active_set.push_back(row);
      }
    }
    r.timestamp = parse_double(cells[9], lineno, 10);
    if (!tf.records.empty() && r.k != tf.records.back().k + 1) malformed(lineno, 1, "k is not consecutive");
    tf.records.push_back(std::move(r));
  }
  if (!header_seen) malformed(lineno, 0, "missing header (truncated file?)");
  if (end_count < 0) malformed(lineno, 0, "missing end marker (truncated file?)");
  return tf;
}

}  // namespace cdm
