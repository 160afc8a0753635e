#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cdm/errors.hpp"
#include "cdm/trace_io.hpp"

using namespace cdm;

namespace {

std::vector<StepRecord> sample_records(int n) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N;
  std::vector<StepRecord> out;
  for (int k = 0; k < n; ++k) {
    StepRecord r;
    r.k = 4 + k;
    r.dl = Pull(N(rng), N(rng)) * 0.1;
    r.x = Point2(N(rng), 34 + N(rng));
    r.dx_des = Point2(N(rng), N(rng));
    r.j_norm = std::abs(N(rng)) + 1.0 / 3.0;
    if (k % 3 == 0) r.active_set = {1, 4};
    r.timestamp = 0.01 * (k + 1) + 1e-17;
    out.push_back(r);
  }
  return out;
}

std::string written(int n) {
  std::ostringstream os;
  write_trace_csv(os, {{"scenario", "free_p1"}, {"seed", "3"}}, sample_records(n));
  return os.str();
}

std::string error_text(const std::string& text) {
  std::istringstream is(text);
  try {
    read_trace_csv(is);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedTrace);
    return e.what();
  }
  ADD_FAILURE() << "accepted malformed trace";
  return {};
}

}  // namespace

TEST(TraceIo, HeaderMatchesColumns) {
  EXPECT_EQ(trace_csv_header(), "k,dl1,dl2,x_lat,x_ax,dxdes_lat,dxdes_ax,Jnorm,active_set,timestamp");
}

TEST(TraceIo, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1e3, 1e3);
  for (int i = 0; i < 2000; ++i) {
    const double v = U(rng) * std::pow(10.0, static_cast<int>(U(rng)) % 8);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(TraceIo, RoundTripIsExact) {
  const auto recs = sample_records(25);
  std::istringstream is(written(25));
  const auto tf = read_trace_csv(is);
  EXPECT_EQ(tf.meta_value("scenario"), "free_p1");
  EXPECT_EQ(tf.meta_value("seed"), "3");
  EXPECT_EQ(tf.meta_value("absent"), "");
  ASSERT_EQ(tf.records.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(tf.records[i].k, recs[i].k);
    EXPECT_EQ(tf.records[i].dl, recs[i].dl);
    EXPECT_EQ(tf.records[i].x, recs[i].x);
    EXPECT_EQ(tf.records[i].dx_des, recs[i].dx_des);
    EXPECT_EQ(tf.records[i].j_norm, recs[i].j_norm);
    EXPECT_EQ(tf.records[i].active_set, recs[i].active_set);
    EXPECT_EQ(tf.records[i].timestamp, recs[i].timestamp);
  }
  std::ostringstream again;
  write_trace_csv(again, tf.meta, tf.records);
  EXPECT_EQ(again.str(), written(25));
}

TEST(TraceIo, TruncationNamesTheLine) {
  const std::string full = written(10);
  // Drop the end marker and cut the last record in half.
  const auto end_pos = full.rfind("# end");
  std::string cut = full.substr(0, end_pos);
  cut = cut.substr(0, cut.size() - 20);
  const std::string msg = error_text(cut);
  int lines = 0;
  for (char c : cut) lines += c == '\n';
  EXPECT_NE(msg.find("line " + std::to_string(lines + 1)), std::string::npos) << msg;

  EXPECT_NE(error_text(full.substr(0, end_pos)).find("end marker"), std::string::npos);
  EXPECT_NE(error_text("# scenario: x\n").find("header"), std::string::npos);
}

TEST(TraceIo, BadCellNamesColumn) {
  std::string text = written(3);
  const auto pos = text.find('\n', text.find("timestamp\n") + 10);
  // Corrupt dl2 of the second record.
  const auto line_start = pos + 1;
  const auto c1 = text.find(',', line_start);
  const auto c2 = text.find(',', c1 + 1);
  text.replace(c1 + 1, c2 - c1 - 1, "abc");
  const std::string msg = error_text(text);
  EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
}

TEST(TraceIo, OtherMalformations) {
  const std::string full = written(3);
  std::string extra = full + "0,0,0,0,0,0,0,0,,0\n";
  EXPECT_NE(error_text(extra).find("after the end marker"), std::string::npos);
  std::string wrong_count = full;
  wrong_count.replace(wrong_count.rfind("3"), 1, "4");
  EXPECT_NE(error_text(wrong_count).find("end marker says"), std::string::npos);
  std::string bad_row = full;
  bad_row.replace(bad_row.find("1;4"), 3, "1;9");
  EXPECT_NE(error_text(bad_row).find("out of range"), std::string::npos);
  std::string short_row = full;
  const auto nl = short_row.find('\n', short_row.find("timestamp\n") + 10);
  short_row.insert(nl, ",7");
  EXPECT_NE(error_text(short_row).find("columns"), std::string::npos);
}
