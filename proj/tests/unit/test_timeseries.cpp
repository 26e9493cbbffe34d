#include <gtest/gtest.h>

#include "nanogrid/timeseries.hpp"

using namespace nanogrid;

TEST(Iso8601, RoundTrip) {
  const Seconds t = parse_iso8601("2019-10-01T06:30:00Z");
  EXPECT_EQ(t, 1569911400);
  EXPECT_EQ(format_iso8601(t), "2019-10-01T06:30:00Z");
  EXPECT_EQ(parse_iso8601("2019-10-01T06:30:00"), t);
  EXPECT_THROW(parse_iso8601("2019-10-01 06:30"), InvalidInput);
  EXPECT_THROW(parse_iso8601("2019-10-01T06:30:00+02:00"), InvalidInput);
}

TEST(TimeSeriesCsv, Parse) {
  const TimeSeries ts = parse_timeseries_csv(
      "timestamp,value\n2019-10-01T00:00:00Z,0\n2019-10-01T00:01:00Z, 12.5\n\n2019-10-01T00:02:00Z,-3e1\n", "g.csv");
  ASSERT_EQ(ts.samples().size(), 3u);
  EXPECT_DOUBLE_EQ(ts.samples()[1].value, 12.5);
  EXPECT_DOUBLE_EQ(ts.samples()[2].value, -30.0);
}

TEST(TimeSeriesCsv, ZeroOrderHold) {
  const TimeSeries ts = parse_timeseries_csv("timestamp,value\n2019-10-01T00:00:00Z,1\n2019-10-01T00:01:00Z,2\n", "x");
  const double t0 = static_cast<double>(ts.first());
  EXPECT_EQ(ts.at(t0), 1.0);
  EXPECT_EQ(ts.at(t0 + 59.9), 1.0);
  EXPECT_EQ(ts.at(t0 + 60.0), 2.0);
  EXPECT_EQ(ts.at(t0 + 1e6), 2.0);
  EXPECT_THROW(ts.at(t0 - 1.0), InvalidInput);
}

TEST(TimeSeriesCsv, Errors) {
  auto line_of = [](const std::string& text) {
    try {
      parse_timeseries_csv(text, "bad.csv");
    } catch (const ParseError& e) {
      EXPECT_EQ(e.source(), "bad.csv");
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("time,value\n"), 1);
  EXPECT_EQ(line_of(""), 0);
  EXPECT_EQ(line_of("timestamp,value\n2019-10-01T00:00:00Z,1\n2019-10-01T00:00:00Z,2\n"), 3);
  EXPECT_EQ(line_of("timestamp,value\n2019-10-01T00:01:00Z,1\n2019-10-01T00:00:00Z,2\n"), 3);
  EXPECT_EQ(line_of("timestamp,value\n2019-10-01T00:00:00Z,abc\n"), 2);
  EXPECT_EQ(line_of("timestamp,value\n2019-13-01T00:00:00Z,1\n"), 2);
  EXPECT_EQ(line_of("timestamp,value\n2019-10-01T00:00:00Z\n"), 2);
}

TEST(TimeSeriesCsv, SerializeRoundTrip) {
  const std::string text = "timestamp,value\n2019-10-01T00:00:00Z,0.125\n2019-10-01T00:05:00Z,980\n";
  EXPECT_EQ(serialize_timeseries_csv(parse_timeseries_csv(text, "x")), text);
}

TEST(TimeSeries, WindowChecks) {
  const Seconds t0 = parse_iso8601("2019-10-01T00:00:00Z");
  const TimeSeries ts({{t0, 1.0}, {t0 + 60, 2.0}, {t0 + 120, 3.0}});
  EXPECT_NO_THROW(ts.check_window(t0, t0 + 180, 1.0, "g"));
  EXPECT_NO_THROW(ts.check_window(t0, t0 + 180, 30.0, "g"));
  EXPECT_THROW(ts.check_window(t0, t0 + 180, 45.0, "g"), InvalidInput);
  EXPECT_THROW(ts.check_window(t0 - 60, t0 + 60, 1.0, "g"), InvalidInput);
  EXPECT_THROW(ts.check_window(t0, t0 + 600, 1.0, "g"), InvalidInput);
  EXPECT_THROW(TimeSeries({{t0, 1.0}, {t0, 2.0}}), InvalidInput);
}
