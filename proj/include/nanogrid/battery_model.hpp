#pragma once

// Dynamic lead-acid battery bank: region-dependent terminal voltage (charge,
// overcharge/saturation, charge-discharge transition, discharge down to
// exhaustion), coulomb-counted state of charge and level of energy, charge
// efficiency, state-of-health ageing and self-discharge.
//
// The voltage equations are written for a 2 V cell and a single string; a bank
// is n_cells_series cells per string and n_strings_parallel identical strings
// sharing the terminal current equally. Currents are positive when charging.

#include <algorithm>
#include <cmath>
#include <string_view>

#include "nanogrid/error.hpp"

namespace nanogrid::battery {

/// Generic empirical constants for a 2 V lead-acid cell.
struct LeadAcidConstants {
  double c_t_coef = 1.67;
  double alpha_c = 0.005;  // 1/degC
  double beta_c = 0.0;     // 1/degC^2
  double a_cap = 0.67;
  double b_cap = 0.9;
  // discharge
  double v_bodc = 2.085;  // V
  double k_bodc = 0.12;   // V
  double p1_dc = 4.0;     // V Ah
  double p2_dc = 1.3;
  double p3_dc = 0.27;  // V h
  double p4_dc = 1.5;
  double p5_dc = 0.02;  // V h
  // charge efficiency
  double a_cmt = 20.73;
  double b_cmt = 0.55;
  // charge
  double v_boc = 2.0;   // V
  double k_boc = 0.16;  // V
  double p1_c = 6.0;    // V Ah
  double p2_c = 0.86;
  double p3_c = 0.48;  // V h
  double p4_c = 1.2;
  double p5_c = 0.036;  // V h
  // gassing / saturation
  double a_gas = 2.24;   // V
  double b_gas = 1.97;   // V h
  double alpha_gas = 0.002;
  double a_fonsc = 2.45;   // V
  double b_fonsc = 2.011;  // V h
  double alpha_fc = 0.002;
  double alpha_rdc = 0.007;
  double alpha_rc = 0.025;
  double a_tau_sc = 17.3;  // h
  double b_tau_sc = 852.0;  // h
  double c_tau_sc = 1.67;
};

struct AgingConstants {
  double alpha_t = 0.0;  // 1/(h degC)
  double beta_t = 0.0;   // 1/h
  double t_ref = 10.0;   // degC
  double eta_wz_extreme = 5.5e-6;  // saturation and exhaustion, per hour
  double eta_wz_over = 5.5e-7;     // overcharge and over-discharge, per hour
  double eta_wz_normal = 2.7e-7;   // charge, transition and discharge, per hour
};

enum class Region { saturation, overcharge, charge, transition, discharge, overdischarge, exhaustion };

constexpr std::string_view to_string(Region r) {
  switch (r) {
    case Region::saturation: return "saturation";
    case Region::overcharge: return "overcharge";
    case Region::charge: return "charge";
    case Region::transition: return "transition";
    case Region::discharge: return "discharge";
    case Region::overdischarge: return "overdischarge";
    case Region::exhaustion: return "exhaustion";
  }
  return "?";
}

constexpr bool is_gassing(Region r) { return r == Region::overcharge || r == Region::saturation; }

struct BatteryParams {
  double c_nominal = 66.0;  // Ah per string at the n-hour rate
  double n_rate_hours = 20.0;
  double c10 = 0.0;       // Ah per string at the 10 h rate
  double v_n_cell = 2.0;  // V
  int n_cells_series = 12;
  int n_strings_parallel = 1;
  LeadAcidConstants k;
  AgingConstants aging;
  double i_delta = 0.05;  // A, half-width of the transition band (bank current)

  void validate() const {
    if (!(c_nominal > 0.0)) throw InvalidInput("battery: c_nominal must be positive");
    if (!(c10 > 0.0)) throw InvalidInput("battery: c10 must be positive");
    if (!(n_rate_hours > 0.0)) throw InvalidInput("battery: n_rate_hours must be positive");
    if (!(i_delta > 0.0)) throw InvalidInput("battery: i_delta must be positive");
    if (n_cells_series < 1 || n_strings_parallel < 1)
      throw InvalidInput("battery: cell and string counts must be >= 1");
    if (!(k.c_t_coef > 0.0 && k.a_cap > 0.0 && k.b_cap > 0.0))
      throw InvalidInput("battery: capacity constants must be positive");
  }

  double bank_nominal_capacity() const { return c_nominal * n_strings_parallel; }
  double bank_c10() const { return c10 * n_strings_parallel; }
  double nominal_current() const { return bank_nominal_capacity() / n_rate_hours; }
  double i10() const { return bank_c10() / 10.0; }
  double bank_nominal_voltage() const { return v_n_cell * n_cells_series; }
  /// Maximum capacity: open circuit at the 25 degC reference, full health.
  double max_capacity() const { return bank_nominal_capacity() * k.c_t_coef; }
};

/// Solves C10 = C(I = C10/10) at 25 degC for a battery rated c_nominal at n hours.
inline double c10_from_nominal(double c_nominal, double n_rate_hours, const LeadAcidConstants& k = {}) {
  const double i_nom = c_nominal / n_rate_hours;
  double x = c_nominal;
  for (int it = 0; it < 200; ++it) {
    const double next = c_nominal * k.c_t_coef / (1.0 + k.a_cap * std::pow((x / 10.0) / i_nom, k.b_cap));
    const double relaxed = 0.5 * (x + next);
    if (std::abs(relaxed - x) < 1e-12 * c_nominal) return relaxed;
    x = relaxed;
  }
  throw ConvergenceError("battery: c10 fixed point did not converge", 200, x);
}

/// The 24 V, 2 x 66 Ah (C20) bank of the reference nanogrid.
inline BatteryParams dcdn_bank() {
  BatteryParams p;
  p.c_nominal = 66.0;
  p.n_rate_hours = 20.0;
  p.n_cells_series = 12;
  p.n_strings_parallel = 2;
  p.c10 = c10_from_nominal(p.c_nominal, p.n_rate_hours, p.k);
  return p;
}

struct BatteryState {
  double soc = 1.0;
  double loe = 1.0;
  double soh = 1.0;
  double temp = 25.0;          // degC
  double last_current = 0.0;   // A
  Region region = Region::transition;
  double soc_vg = 1.0;          // SoC when gassing began
  double stored_charge = 0.0;  // Ah, loe * C_n

  /// State with stored charge consistent with the given level of energy.
  static BatteryState make(const BatteryParams& p, double soc, double loe, double soh, double temp = 25.0) {
    if (!(soc >= 0.0 && soc <= 1.0 && loe >= 0.0 && loe <= 1.0 && soh >= 0.0 && soh <= 1.0))
      throw InvalidInput("battery: soc, loe and soh must lie in [0, 1]");
    BatteryState s;
    s.soc = soc;
    s.loe = loe;
    s.soh = soh;
    s.temp = temp;
    s.soc_vg = soc;
    s.stored_charge = loe * p.max_capacity();
    return s;
  }
};

inline double capacity_derating(double soh) { return 0.75 * soh + 0.25; }

/// Bank capacity in Ah at the given current, temperature and health.
inline double capacity(const BatteryParams& p, double i_bat, double temp, double soh) {
  const double dt = temp - 25.0;
  const double ratio = std::abs(i_bat) / p.nominal_current();
  return p.bank_nominal_capacity() * p.k.c_t_coef * capacity_derating(soh) /
         (1.0 + p.k.a_cap * std::pow(ratio, p.k.b_cap)) * (1.0 + p.k.alpha_c * dt + p.k.beta_c * dt * dt);
}

/// Fraction of a charging current that is stored.
inline double charge_efficiency(const BatteryParams& p, double i_bat, double soc) {
  if (!(i_bat > 0.0)) throw InvalidInput("battery: charge efficiency needs a charging current");
  const double e = std::exp(p.k.a_cmt / (i_bat / p.i10() + p.k.b_cmt) * (soc - 1.0));
  return std::clamp(1.0 - e, 0.0, 1.0);
}

namespace detail {

inline constexpr double kSocFloor = 1e-4;
inline constexpr double kSocCeiling = 1.0 - 1e-9;

// Per-cell voltages; `i` is a string current magnitude.
inline double v_discharge_cell(const BatteryParams& p, double i, double soc, double dt) {
  const auto& k = p.k;
  const double s = std::max(soc, kSocFloor);
  return (k.v_bodc - k.k_bodc * (1.0 - s)) -
         i / p.c10 * (k.p1_dc / (1.0 + std::pow(i, k.p2_dc)) + k.p3_dc / std::pow(s, k.p4_dc) + k.p5_dc) *
             (1.0 - k.alpha_rdc * dt);
}

inline double v_charge_cell(const BatteryParams& p, double i, double soc, double dt) {
  const auto& k = p.k;
  const double s = std::min(soc, kSocCeiling);
  return (k.v_boc + k.k_boc * s) +
         i / p.c10 * (k.p1_c / (1.0 + std::pow(i, k.p2_c)) + k.p3_c / std::pow(1.0 - s, k.p4_c) + k.p5_c) *
             (1.0 - k.alpha_rc * dt);
}

inline double v_gassing_cell(const BatteryParams& p, double i, double dt) {
  return (p.k.a_gas + p.k.b_gas * std::log1p(i / p.c10)) * (1.0 - p.k.alpha_gas * dt);
}

inline double v_saturation_cell(const BatteryParams& p, double i, double dt) {
  return (p.k.a_fonsc + p.k.b_fonsc * std::log1p(i / p.c10)) * (1.0 - p.k.alpha_fc * dt);
}

inline double overcharge_tau(const BatteryParams& p, double i) {
  return p.k.a_tau_sc / (1.0 + p.k.b_tau_sc * std::pow(i / p.c10, p.k.c_tau_sc));
}

}  // namespace detail

struct TerminalVoltage {
  double volts = 0.0;
  Region region = Region::transition;
  bool soc_floored = false;  // discharge equation evaluated at the SoC floor
};

/// Gassing-onset voltage of the bank at charging current i_bat.
inline double gassing_voltage(const BatteryParams& p, double i_bat, double temp) {
  return detail::v_gassing_cell(p, std::abs(i_bat) / p.n_strings_parallel, temp - 25.0) * p.n_cells_series;
}

/// Saturation (end-of-charge) voltage of the bank at charging current i_bat.
inline double saturation_voltage(const BatteryParams& p, double i_bat, double temp) {
  return detail::v_saturation_cell(p, std::abs(i_bat) / p.n_strings_parallel, temp - 25.0) * p.n_cells_series;
}

/// Overcharge voltage: rises from V_g toward V_ec as charge accumulates past
/// gassing onset, bounded to [V_g, V_ec].
inline double overcharge_voltage(const BatteryParams& p, const BatteryState& s, double i_bat) {
  const double dt = s.temp - 25.0;
  const double i_str = i_bat / p.n_strings_parallel;
  const double vg = detail::v_gassing_cell(p, i_str, dt);
  const double vec = detail::v_saturation_cell(p, i_str, dt);
  const double c = capacity(p, i_bat, s.temp, s.soh);
  const double excess = s.loe * p.max_capacity() - s.soc_vg * c;  // Ah past gassing onset
  const double tau = detail::overcharge_tau(p, i_str);
  const double rise = std::clamp(1.0 - std::exp(-excess / (i_bat * tau)), 0.0, 1.0);
  return (vg + (vec - vg) * rise) * p.n_cells_series;
}

/// Charge-side terminal voltage (i_bat > 0): charge equation below V_g,
/// overcharge/saturation expression at or above it.
inline TerminalVoltage charging_voltage(const BatteryParams& p, const BatteryState& s, double i_bat) {
  const double dt = s.temp - 25.0;
  const double i_str = i_bat / p.n_strings_parallel;
  const double vc = detail::v_charge_cell(p, i_str, s.soc, dt);
  const double vg = detail::v_gassing_cell(p, i_str, dt);
  if (vc < vg) return {vc * p.n_cells_series, Region::charge, false};
  const double v = overcharge_voltage(p, s, i_bat);
  const double vec = saturation_voltage(p, i_bat, s.temp);
  const double vgb = vg * p.n_cells_series;
  const bool saturated = (vec - v) <= 1e-3 * (vec - vgb);
  return {v, saturated ? Region::saturation : Region::overcharge, false};
}

/// Discharge-side terminal voltage (i_bat < 0).
inline TerminalVoltage discharging_voltage(const BatteryParams& p, const BatteryState& s, double i_bat) {
  const double i_str = std::abs(i_bat) / p.n_strings_parallel;
  const double cell = detail::v_discharge_cell(p, i_str, s.soc, s.temp - 25.0);
  const bool floored = s.soc < detail::kSocFloor;
  Region r = Region::discharge;
  if (floored || cell < 0.7 * p.v_n_cell) r = Region::exhaustion;
  else if (cell <= 0.9 * p.v_n_cell) r = Region::overdischarge;
  return {cell * p.n_cells_series, r, floored};
}

/// Linear interpolation between the charge-side value at +I_delta and the
/// discharge-side value at -I_delta.
inline double transition_voltage(const BatteryParams& p, const BatteryState& s, double i_bat) {
  const double d = p.i_delta;
  const double vc = charging_voltage(p, s, d).volts;
  const double vdc = discharging_voltage(p, s, -d).volts;
  return (vc - vdc) / (2.0 * d) * i_bat + (vc + vdc) / 2.0;
}

inline TerminalVoltage terminal_voltage(const BatteryParams& p, const BatteryState& s, double i_bat) {
  if (std::abs(i_bat) < p.i_delta) {
    const bool floored = s.soc < detail::kSocFloor;
    return {transition_voltage(p, s, i_bat), Region::transition, floored};
  }
  return i_bat > 0.0 ? charging_voltage(p, s, i_bat) : discharging_voltage(p, s, i_bat);
}

inline double working_zone_factor(const AgingConstants& a, Region r) {
  switch (r) {
    case Region::saturation:
    case Region::exhaustion: return a.eta_wz_extreme;
    case Region::overcharge:
    case Region::overdischarge: return a.eta_wz_over;
    default: return a.eta_wz_normal;
  }
}

/// Advances the bank by dt seconds at constant terminal current i_bat.
inline BatteryState step_state(const BatteryParams& p, const BatteryState& s, double i_bat, double temp,
                               double dt) {
  if (!(dt > 0.0)) throw InvalidInput("battery: dt must be positive");
  BatteryState n = s;
  n.temp = temp;
  const TerminalVoltage tv = terminal_voltage(p, n, i_bat);

  const double hours = dt / 3600.0;
  const double eta = i_bat > 0.0 ? charge_efficiency(p, i_bat, s.soc) : 1.0;
  const double c = capacity(p, i_bat, temp, s.soh);
  const double cn = p.max_capacity();
  const double dq = eta * i_bat * hours;

  n.soc = std::clamp(s.soc + dq / c, 0.0, 1.0);
  n.loe = std::clamp(s.loe + dq / cn, 0.0, 1.0);
  n.stored_charge = n.loe * cn;

  const double eta_t = p.aging.alpha_t * std::abs(temp - p.aging.t_ref) + p.aging.beta_t;
  n.soh = std::clamp(s.soh - (eta_t + working_zone_factor(p.aging, tv.region)) * hours, 0.0, 1.0);

  if (is_gassing(tv.region) && !is_gassing(s.region)) n.soc_vg = s.soc;
  n.region = tv.region;
  n.last_current = i_bat;
  return n;
}

/// Self-discharge coefficient: fraction of stored charge lost per day.
inline double self_discharge_coefficient(double soh) { return 0.01 - 0.009 * soh; }

/// Self-discharge current in A.
inline double self_discharge_current(const BatteryState& s) {
  return self_discharge_coefficient(s.soh) * s.stored_charge / 24.0;
}

/// Removes dt seconds of self-discharge from the stored charge.
inline BatteryState apply_self_discharge(const BatteryParams& p, const BatteryState& s, double dt) {
  if (!(dt > 0.0)) throw InvalidInput("battery: dt must be positive");
  const double i_adc = self_discharge_current(s);
  if (i_adc <= 0.0) return s;
  BatteryState n = s;
  const double dq = i_adc * dt / 3600.0;
  n.soc = std::clamp(s.soc - dq / capacity(p, i_adc, s.temp, s.soh), 0.0, 1.0);
  n.loe = std::clamp(s.loe - dq / p.max_capacity(), 0.0, 1.0);
  n.stored_charge = n.loe * p.max_capacity();
  return n;
}

/// Terminal current in [i_lo, i_hi] whose voltage equals v_target, by
/// bisection (voltage is nondecreasing in current). Clamps to the bracket
/// ends when the target lies outside.
inline double current_for_voltage(const BatteryParams& p, const BatteryState& s, double v_target, double i_lo,
                                  double i_hi, double tolerance = 1e-3) {
  auto v = [&](double i) { return terminal_voltage(p, s, i).volts; };
  if (v(i_lo) >= v_target) return i_lo;
  if (v(i_hi) <= v_target) return i_hi;
  while (i_hi - i_lo > tolerance) {
    const double mid = 0.5 * (i_lo + i_hi);
    if (v(mid) < v_target) i_lo = mid; else i_hi = mid;
  }
  return 0.5 * (i_lo + i_hi);
}

}  // namespace nanogrid::battery
