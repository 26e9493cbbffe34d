#pragma once

// Timestamped scalar series ("timestamp,value" CSV, ISO-8601 UTC) with
// zero-order-hold lookup.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nanogrid/error.hpp"

namespace nanogrid {

using Seconds = std::int64_t;  // UTC epoch seconds

/// Parses "YYYY-MM-DDTHH:MM:SS" with an optional trailing 'Z' (UTC).
inline Seconds parse_iso8601(std::string_view text) {
  std::string s(text);
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.pop_back();
  std::tm tm{};
  std::istringstream in(s);
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (in.fail() || in.peek() != std::char_traits<char>::eof())
    throw InvalidInput("bad ISO-8601 UTC timestamp '" + std::string(text) + "'");
  return static_cast<Seconds>(timegm(&tm));
}

inline std::string format_iso8601(Seconds t) {
  const std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class TimeSeries {
 public:
  struct Sample {
    Seconds t;
    double value;
  };

  TimeSeries() = default;
  explicit TimeSeries(std::vector<Sample> samples) : samples_(std::move(samples)) {
    for (std::size_t k = 1; k < samples_.size(); ++k)
      if (samples_[k].t <= samples_[k - 1].t) throw InvalidInput("time series: timestamps must increase");
  }

  const std::vector<Sample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  Seconds first() const { return samples_.front().t; }
  Seconds last() const { return samples_.back().t; }

  /// Value of the latest sample at or before t.
  double at(double t) const {
    if (samples_.empty() || t < static_cast<double>(samples_.front().t))
      throw InvalidInput("time series: no sample at or before t = " + std::to_string(t));
    auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double x, const Sample& s) { return x < static_cast<double>(s.t); });
    return std::prev(it)->value;
  }

  /// Throws unless the series covers [start, end] and every sample offset
  /// from start is a whole number of steps.
  void check_window(Seconds start, Seconds end, double dt, const std::string& name) const {
    if (samples_.empty()) throw InvalidInput(name + ": series is empty");
    if (first() > start) throw InvalidInput(name + ": series starts after the simulation window");
    const Seconds tail = samples_.size() > 1 ? last() - samples_[samples_.size() - 2].t : 0;
    if (last() + tail < end) throw InvalidInput(name + ": series ends before the simulation window");
    for (const auto& s : samples_) {
      const double steps = static_cast<double>(s.t - start) / dt;
      if (std::abs(steps - std::round(steps)) > 1e-9)
        throw InvalidInput(name + ": step does not divide the series cadence at " + format_iso8601(s.t));
    }
  }

 private:
  std::vector<Sample> samples_;
};

/// Reads the "timestamp,value" CSV format. Rejects duplicate or decreasing
/// timestamps; errors carry the source name and line.
inline TimeSeries parse_timeseries_csv(std::string_view text, const std::string& source) {
  std::vector<TimeSeries::Sample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header) {
      std::string h;
      for (char c : line)
        if (c != ' ' && c != '\t') h += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (h != "timestamp,value") throw ParseError(source, line_no, "expected header 'timestamp,value'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(source, line_no, "expected 'timestamp,value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    TimeSeries::Sample s{};
    try {
      s.t = parse_iso8601(trim(line.substr(0, comma)));
    } catch (const InvalidInput& e) {
      throw ParseError(source, line_no, e.what());
    }
    const std::string v = trim(line.substr(comma + 1));
    std::size_t used = 0;
    try {
      s.value = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (v.empty() || used != v.size() || !std::isfinite(s.value))
      throw ParseError(source, line_no, "value '" + v + "' is not a decimal number");
    if (!out.empty() && s.t == out.back().t) throw ParseError(source, line_no, "duplicate timestamp");
    if (!out.empty() && s.t < out.back().t) throw ParseError(source, line_no, "timestamps must be nondecreasing");
    out.push_back(s);
  }
  if (!header) throw ParseError(source, 0, "missing header 'timestamp,value'");
  return TimeSeries(std::move(out));
}

inline std::string serialize_timeseries_csv(const TimeSeries& ts) {
  std::ostringstream out;
  out << "timestamp,value\n";
  out << std::setprecision(10);
  for (const auto& s : ts.samples()) out << format_iso8601(s.t) << ',' << s.value << '\n';
  return out.str();
}

}  // namespace nanogrid
