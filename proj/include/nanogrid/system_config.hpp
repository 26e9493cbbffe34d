#pragma once

// Off-grid sizing, resistive load banks and their minute schedules, PV
// reference-cell irradiance and AC-to-DC consumption conversion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nanogrid/error.hpp"

namespace nanogrid::config {

struct SizingInput {
  double daily_dc_load = 0.0;  // kWh
  double charge_discharge_eff = 0.86;
  double hsp_min = 0.0;  // kWh/m2/day
  double max_depth_of_discharge = 0.8;
  double safety_factor = 1.25;
  double bank_voltage = 24.0;  // V
  double min_autonomy_days = 1.0;

  void validate() const {
    auto frac = [](double x) { return x > 0.0 && x <= 1.0; };
    if (!(daily_dc_load > 0.0)) throw InvalidInput("sizing: daily load must be positive");
    if (!(hsp_min > 0.0)) throw InvalidInput("sizing: minimum sun hours must be positive");
    if (!(safety_factor > 0.0)) throw InvalidInput("sizing: safety factor must be positive");
    if (!(bank_voltage > 0.0)) throw InvalidInput("sizing: bank voltage must be positive");
    if (!frac(charge_discharge_eff)) throw InvalidInput("sizing: efficiency must lie in (0, 1]");
    if (!frac(max_depth_of_discharge)) throw InvalidInput("sizing: depth of discharge must lie in (0, 1]");
  }
};

struct SizingResult {
  double corrected_load = 0.0;  // kWh
  double autonomy_days = 0.0;
  bool autonomy_clamped = false;
  double bank_capacity_wh = 0.0;
  double bank_capacity_ah = 0.0;
  double pv_rated_wp = 0.0;
};

/// Autonomy days from the lowest monthly sun hours (empirical linear law).
inline double autonomy_days(double hsp_min) { return -0.48 * hsp_min + 4.58; }

inline SizingResult size_system(const SizingInput& in) {
  in.validate();
  SizingResult r;
  r.corrected_load = in.daily_dc_load / in.charge_discharge_eff;
  r.autonomy_days = autonomy_days(in.hsp_min);
  if (r.autonomy_days < in.min_autonomy_days) {
    r.autonomy_days = in.min_autonomy_days;
    r.autonomy_clamped = true;
  }
  r.bank_capacity_wh = r.corrected_load * 1000.0 * r.autonomy_days / in.max_depth_of_discharge;
  r.bank_capacity_ah = r.bank_capacity_wh / in.bank_voltage;
  r.pv_rated_wp = r.corrected_load * 1000.0 / in.hsp_min * in.safety_factor;
  return r;
}

inline double lamp_resistance(double v_nom, double p_nom) {
  if (!(p_nom > 0.0)) throw InvalidInput("load: lamp rated power must be positive");
  return v_nom * v_nom / p_nom;
}

inline constexpr double kFanResistance = 62.24;  // ohm

struct LoadBankSpec {
  int lamps = 0;
  double lamp_v = 24.0;
  double lamp_w = 40.0;
  int fans = 0;
  double fan_r = kFanResistance;
  std::vector<int> columns;  // schedule column per device, lamps first

  int device_count() const { return lamps + fans; }

  void validate() const {
    if (lamps < 0 || fans < 0) throw InvalidInput("load bank: device counts must be >= 0");
    if (lamps > 0 && !(lamp_w > 0.0 && lamp_v > 0.0)) throw InvalidInput("load bank: lamp rating must be positive");
    if (fans > 0 && !(fan_r > 0.0)) throw InvalidInput("load bank: fan resistance must be positive");
    if (!columns.empty() && static_cast<int>(columns.size()) != device_count())
      throw InvalidInput("load bank: relay map needs one column per device");
    for (int c : columns)
      if (c < 0) throw InvalidInput("load bank: schedule columns must be >= 0");
  }

  double device_resistance(int k) const { return k < lamps ? lamp_resistance(lamp_v, lamp_w) : fan_r; }
};

/// Parallel resistance of the active devices; nullopt when all are off.
inline std::optional<double> bank_equivalent_resistance(const LoadBankSpec& spec, const std::vector<bool>& on) {
  if (static_cast<int>(on.size()) != spec.device_count())
    throw InvalidInput("load bank: mask length does not match device count");
  double g = 0.0;
  for (int k = 0; k < spec.device_count(); ++k)
    if (on[static_cast<std::size_t>(k)]) g += 1.0 / spec.device_resistance(k);
  if (g == 0.0) return std::nullopt;
  return 1.0 / g;
}

inline std::vector<bool> all_on(const LoadBankSpec& spec) {
  return std::vector<bool>(static_cast<std::size_t>(spec.device_count()), true);
}

inline constexpr int kMinutesPerDay = 1440;

/// One row per minute of the day; nonzero entries switch a device on.
struct LoadSchedule {
  std::vector<std::vector<std::int64_t>> rows;

  std::size_t columns() const { return rows.empty() ? 0 : rows.front().size(); }
  bool on(int minute, int column) const {
    return rows.at(static_cast<std::size_t>(minute)).at(static_cast<std::size_t>(column)) != 0;
  }
};

/// Whitespace- or comma-separated integers, exactly 1440 rows. Blank lines and
/// lines starting with '#' are skipped.
inline LoadSchedule parse_load_schedule(std::string_view text, const std::string& source = "schedule") {
  LoadSchedule s;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<std::int64_t> row;
    std::string tok;
    int col = 0;
    while (ss >> tok) {
      if (row.empty() && tok[0] == '#') break;
      ++col;
      std::size_t used = 0;
      std::int64_t v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        throw ParseError(source, line_no, "column " + std::to_string(col) + ": '" + tok + "' is not an integer");
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (!s.rows.empty() && row.size() != s.rows.front().size())
      throw ParseError(source, line_no,
                       "row " + std::to_string(s.rows.size() + 1) + " has " + std::to_string(row.size()) +
                           " columns, expected " + std::to_string(s.rows.front().size()));
    s.rows.push_back(std::move(row));
    if (end == text.size()) break;
  }
  if (s.rows.size() != static_cast<std::size_t>(kMinutesPerDay)) {
    const long deficit = static_cast<long>(kMinutesPerDay) - static_cast<long>(s.rows.size());
    throw ParseError(source, 0,
                     "expected 1440 rows, found " + std::to_string(s.rows.size()) +
                         (deficit > 0 ? " (" + std::to_string(deficit) + " missing)"
                                      : " (" + std::to_string(-deficit) + " extra)"));
  }
  return s;
}

inline std::string serialize_load_schedule(const LoadSchedule& s) {
  std::string out;
  for (const auto& row : s.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ' ';
      out += std::to_string(row[c]);
    }
    out += '\n';
  }
  return out;
}

/// Device on/off mask of a bank for one minute of the day.
inline std::vector<bool> bank_mask(const LoadBankSpec& spec, const LoadSchedule& s, int minute) {
  std::vector<bool> on(static_cast<std::size_t>(spec.device_count()), false);
  for (int k = 0; k < spec.device_count(); ++k) {
    const int col = spec.columns.empty() ? k : spec.columns[static_cast<std::size_t>(k)];
    if (static_cast<std::size_t>(col) >= s.columns())
      throw InvalidInput("load bank: schedule has no column " + std::to_string(col));
    on[static_cast<std::size_t>(k)] = s.on(minute, col);
  }
  return on;
}

/// Irradiance from a reference module's short-circuit current.
inline double irradiance_from_isc(double i_sc_measured, double i_sc_stc_ref) {
  if (!(i_sc_stc_ref > 0.0)) throw InvalidInput("irradiance: reference short-circuit current must be positive");
  return 1000.0 * i_sc_measured / i_sc_stc_ref;
}

enum class ApplianceKind { electronic, motor, inverter_ac };

struct ConversionEfficiencies {
  double rectifier = 0.812;
  double dcdc = 0.98;
  double inverter = 0.98;
};

/// Energy a DC supply must deliver for an appliance metered on AC.
inline double dc_equivalent_consumption(double e_ac, ApplianceKind kind, const ConversionEfficiencies& eta = {}) {
  if (!(e_ac >= 0.0)) throw InvalidInput("consumption must be >= 0");
  switch (kind) {
    case ApplianceKind::electronic:
    case ApplianceKind::inverter_ac: return e_ac * eta.dcdc * eta.rectifier;
    case ApplianceKind::motor: return e_ac / eta.inverter;
  }
  return e_ac;
}

}  // namespace nanogrid::config
