#pragma once

// Single-diode five-parameter photovoltaic model: cell temperature, implicit
// I-V solution, maximum power point, series/parallel resistance extraction
// and the usual model-versus-measurement deviation figures.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nanogrid/error.hpp"

namespace nanogrid::pv {

inline constexpr double kBoltzmann = 1.38e-23;       // J/K
inline constexpr double kElementaryCharge = 1.6e-19;  // C
inline constexpr double kKelvinOffset = 273.15;

inline constexpr double kIrradianceStc = 1000.0;  // W/m2
inline constexpr double kCellTempStc = 25.0;      // degC
inline constexpr double kIrradianceNoct = 800.0;  // W/m2
inline constexpr double kAmbientNoct = 20.0;      // degC

struct PvModuleParams {
  double p_mp_stc = 0.0;  // W
  double v_mp_stc = 0.0;  // V
  double i_mp_stc = 0.0;  // A
  double v_oc_stc = 0.0;  // V
  double i_sc_stc = 0.0;  // A
  double noct = 46.0;     // degC
  double alpha_sc = 0.0;  // A/degC
  double beta_mp = 0.0;   // 1/degC (fraction, e.g. -0.0045)
  int n_cells_series = 60;
  double ideality = 1.3;
  double r_s = 0.0;  // ohm
  double r_p = std::numeric_limits<double>::infinity();  // ohm
  double bandgap_ev = 1.11;

  /// Checks the datasheet fields only (resistances may still be unknown).
  void validate_datasheet() const {
    if (!(p_mp_stc > 0.0)) throw InvalidInput("pv module: p_mp_stc must be positive");
    if (!(v_mp_stc > 0.0 && v_mp_stc < v_oc_stc))
      throw InvalidInput("pv module: need 0 < v_mp_stc < v_oc_stc");
    if (!(i_mp_stc > 0.0 && i_mp_stc < i_sc_stc))
      throw InvalidInput("pv module: need 0 < i_mp_stc < i_sc_stc");
    if (n_cells_series < 1) throw InvalidInput("pv module: n_cells_series must be >= 1");
    if (!(ideality >= 1.0 && ideality <= 2.0))
      throw InvalidInput("pv module: ideality must lie in [1, 2]");
  }

  void validate() const {
    validate_datasheet();
    if (!(r_s >= 0.0)) throw InvalidInput("pv module: r_s must be >= 0");
    if (!(r_p > 0.0)) throw InvalidInput("pv module: r_p must be > 0");
  }
};

/// Yingli YL245P-29b flash-test values; resistances still to be extracted.
inline PvModuleParams yl245p_29b_datasheet() {
  PvModuleParams m;
  m.p_mp_stc = 238.25;
  m.v_mp_stc = 29.22;
  m.i_mp_stc = 8.15;
  m.v_oc_stc = 37.21;
  m.i_sc_stc = 8.76;
  m.noct = 46.0;
  m.alpha_sc = 0.0006 * 8.76;  // 0.06 %/degC of I_sc
  m.beta_mp = -0.0045;
  m.n_cells_series = 60;
  m.ideality = 1.3;
  m.bandgap_ev = 1.11;
  return m;
}

struct PvArrayConfig {
  PvModuleParams module;
  int n_modules_series = 1;

  void validate() const {
    module.validate();
    if (n_modules_series < 1) throw InvalidInput("pv array: n_modules_series must be >= 1");
  }
  double p_mp_stc() const { return module.p_mp_stc * n_modules_series; }
};

struct OperatingEnvironment {
  double irradiance = 0.0;    // W/m2
  double ambient_temp = 25.0;  // degC
};

/// Irradiance together with an already known cell temperature.
struct CellConditions {
  double irradiance = kIrradianceStc;  // W/m2
  double cell_temp = kCellTempStc;     // degC

  static CellConditions stc() { return {}; }
};

/// NOCT correlation with the thermal-loss ratio taken as one.
inline double cell_temperature(const OperatingEnvironment& env, double noct) {
  return env.ambient_temp + (env.irradiance / kIrradianceNoct) * (noct - kAmbientNoct);
}

inline CellConditions to_cell_conditions(const OperatingEnvironment& env, const PvModuleParams& m) {
  if (env.irradiance < 0.0) throw InvalidInput("irradiance must be >= 0");
  return {env.irradiance, cell_temperature(env, m.noct)};
}

/// Per-cell thermal voltage A_n k T / q at the given cell temperature.
inline double cell_thermal_voltage(const PvModuleParams& m, double cell_temp_c) {
  return m.ideality * kBoltzmann * (cell_temp_c + kKelvinOffset) / kElementaryCharge;
}

inline double photo_current(const PvModuleParams& m, const CellConditions& c) {
  return c.irradiance / kIrradianceStc * m.i_sc_stc + m.alpha_sc * (c.cell_temp - kCellTempStc);
}

inline double saturation_current_stc(const PvModuleParams& m) {
  const double vt = m.n_cells_series * cell_thermal_voltage(m, kCellTempStc);
  return m.i_sc_stc / std::expm1(m.v_oc_stc / vt);
}

inline double saturation_current(const PvModuleParams& m, const CellConditions& c) {
  const double t_stc = kCellTempStc + kKelvinOffset;
  const double t = c.cell_temp + kKelvinOffset;
  const double eg_over_k = m.bandgap_ev * kElementaryCharge / kBoltzmann;  // K
  return saturation_current_stc(m) * std::pow(t / t_stc, 3) *
         std::exp(eg_over_k * (1.0 / t_stc - 1.0 / t));
}

/// Module I-V curve frozen at one operating condition. Voltages and currents
/// are for the whole series string of modules.
class PvCurve {
 public:
  static constexpr double kCurrentTolerance = 1e-9;  // A
  static constexpr int kMaxIterations = 100;

  PvCurve(const PvArrayConfig& array, const CellConditions& c)
      : n_series_(array.n_modules_series),
        i_ph_(pv::photo_current(array.module, c)),
        i_s_(pv::saturation_current(array.module, c)),
        v_t_(array.module.n_cells_series * cell_thermal_voltage(array.module, c.cell_temp)),
        r_s_(array.module.r_s),
        r_p_(array.module.r_p) {}

  double photo_current() const { return i_ph_; }
  double saturation_current() const { return i_s_; }

  /// Residual of the implicit module equation at module voltage v.
  double residual(double v_module, double i) const {
    const double vd = v_module + i * r_s_;
    return i_ph_ - i_s_ * std::expm1(vd / v_t_) - vd / r_p_ - i;
  }

  /// Current delivered at array voltage v (v >= 0). Damped Newton with a
  /// bisection safeguard; the residual is strictly decreasing in i.
  double current(double v) const {
    if (!(v >= 0.0)) throw InvalidInput("pv: reverse bias (v < 0) is not modelled");
    const double vm = v / n_series_;
    if (r_s_ == 0.0) return i_ph_ - i_s_ * std::expm1(vm / v_t_) - vm / r_p_;

    double hi = std::max(i_ph_, 0.0);
    double lo = std::min(-vm / r_s_, i_ph_) - 1.0;
    double i = hi;
    double f = residual(vm, i);
    for (int it = 0; it < kMaxIterations; ++it) {
      if (std::abs(f) < kCurrentTolerance) return i;
      if (f > 0.0) lo = i; else hi = i;
      const double e = std::exp((vm + i * r_s_) / v_t_);
      const double df = -i_s_ * e * r_s_ / v_t_ - r_s_ / r_p_ - 1.0;
      double next = i - f / df;
      if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
      i = next;
      f = residual(vm, i);
    }
    if (std::abs(f) < kCurrentTolerance) return i;
    throw ConvergenceError("pv: I-V solve did not converge", kMaxIterations, f);
  }

  /// Array open-circuit voltage at these conditions (0 when there is no photocurrent).
  double open_circuit_voltage() const {
    if (i_ph_ <= 0.0) return 0.0;
    auto g = [&](double vm) { return i_ph_ - i_s_ * std::expm1(vm / v_t_) - vm / r_p_; };
    double lo = 0.0;
    double hi = v_t_ * std::log1p(i_ph_ / i_s_);
    double vm = hi;
    for (int it = 0; it < 200; ++it) {
      const double f = g(vm);
      if (std::abs(f) < 1e-12) break;
      if (f > 0.0) lo = vm; else hi = vm;
      const double df = -i_s_ / v_t_ * std::exp(vm / v_t_) - 1.0 / r_p_;
      double next = vm - f / df;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - vm) < 1e-13 * std::max(1.0, vm)) { vm = next; break; }
      vm = next;
    }
    return vm * n_series_;
  }

 private:
  int n_series_;
  double i_ph_;
  double i_s_;
  double v_t_;  // N_s A_n k T / q for one module
  double r_s_;
  double r_p_;
};

inline double iv_current(const PvArrayConfig& array, double v, const OperatingEnvironment& env) {
  return PvCurve(array, to_cell_conditions(env, array.module)).current(v);
}

inline double open_circuit_voltage(const PvArrayConfig& array, const CellConditions& c) {
  return PvCurve(array, c).open_circuit_voltage();
}

struct MppPoint {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

/// Golden-section maximisation of V*I over [0, V_oc].
inline MppPoint mpp(const PvCurve& curve) {
  const double voc = curve.open_circuit_voltage();
  if (voc <= 0.0) return {};
  constexpr double kInvPhi = 0.6180339887498949;
  double a = 0.0, b = voc;
  double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
  double fc = c * curve.current(c), fd = d * curve.current(d);
  while (b - a > 1e-9 * voc) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - kInvPhi * (b - a);
      fc = c * curve.current(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + kInvPhi * (b - a);
      fd = d * curve.current(d);
    }
  }
  const double v = 0.5 * (a + b);
  const double i = curve.current(v);
  return {v, i, v * i};
}

inline MppPoint mpp(const PvArrayConfig& array, const CellConditions& c) {
  if (!(c.irradiance > 0.0)) throw InvalidInput("pv: mpp requires irradiance > 0");
  return mpp(PvCurve(array, c));
}

inline MppPoint mpp(const PvArrayConfig& array, const OperatingEnvironment& env) {
  return mpp(array, to_cell_conditions(env, array.module));
}

/// Closed-form MPP voltage used by the ideal MPPT: thermal derating plus the
/// logarithmic irradiance term (N_s applied once, per-cell thermal voltage).
inline double mpp_voltage_estimate(const PvArrayConfig& array, const CellConditions& c) {
  if (!(c.irradiance > 0.0)) throw InvalidInput("pv: mpp estimate requires irradiance > 0");
  const PvModuleParams& m = array.module;
  const double dt = c.cell_temp - kCellTempStc;
  const double v_module = m.v_mp_stc * (1.0 + m.beta_mp * dt) +
                          m.n_cells_series * cell_thermal_voltage(m, c.cell_temp) *
                              std::log(c.irradiance / kIrradianceStc);
  return v_module * array.n_modules_series;
}

inline double mpp_voltage_estimate(const PvArrayConfig& array, const OperatingEnvironment& env) {
  return mpp_voltage_estimate(array, to_cell_conditions(env, array.module));
}

struct Resistances {
  double r_s = 0.0;
  double r_p = 0.0;
  int steps = 0;
};

/// Finds (R_s, R_p) so the model's maximum power at STC matches the datasheet.
/// R_s is swept upward from zero, R_p follows from the MPP power equation, and
/// the first sign change of the power error is refined by bisection.
inline Resistances extract_resistances(const PvModuleParams& datasheet,
                                       double power_tolerance = 0.01,
                                       double rs_step = 1e-3,
                                       int max_steps = 10000) {
  datasheet.validate_datasheet();
  const double vmp = datasheet.v_mp_stc;
  const double imp = datasheet.i_mp_stc;
  const double pe = datasheet.p_mp_stc;
  const double iph = datasheet.i_sc_stc;
  const double is = saturation_current_stc(datasheet);
  const double vt = datasheet.n_cells_series * cell_thermal_voltage(datasheet, kCellTempStc);

  auto rp_for = [&](double rs) {
    const double vd = vmp + imp * rs;
    const double den = vmp * iph - vmp * is * std::exp(vd / vt) + vmp * is - pe;
    return vmp * vd / den;
  };
  auto power_error = [&](double rs, double rp) {
    PvArrayConfig a{datasheet, 1};
    a.module.r_s = rs;
    a.module.r_p = rp;
    return mpp(PvCurve(a, CellConditions::stc())).p - pe;
  };
  auto valid_rp = [](double rp) { return std::isfinite(rp) && rp > 0.0; };

  double rs = 0.0;
  double rp = rp_for(rs);
  if (!valid_rp(rp))
    throw InvalidInput("pv extraction: negative r_p at r_s = 0 (datasheet MPP above the ideal curve)");
  double err = power_error(rs, rp);
  const bool start_high = err > 0.0;

  for (int step = 0; step < max_steps; ++step) {
    if (std::abs(err) < power_tolerance) return {rs, rp, step};
    const double next_rs = rs + rs_step;
    const double next_rp = rp_for(next_rs);
    const double next_err = valid_rp(next_rp) ? power_error(next_rs, next_rp) : 0.0;
    const bool crossed = !valid_rp(next_rp) || ((next_err > 0.0) != start_high) ||
                         std::abs(next_err) < power_tolerance;
    if (!crossed) {
      rs = next_rs; rp = next_rp; err = next_err;
      continue;
    }
    if (valid_rp(next_rp) && std::abs(next_err) < power_tolerance) return {next_rs, next_rp, step + 1};
    // Bisect on [rs, next_rs]; an invalid r_p counts as overshoot.
    double lo = rs, hi = next_rs;
    for (int b = 0; b < 200; ++b) {
      const double mid = 0.5 * (lo + hi);
      const double mid_rp = rp_for(mid);
      if (!valid_rp(mid_rp)) { hi = mid; continue; }
      const double mid_err = power_error(mid, mid_rp);
      if (std::abs(mid_err) < power_tolerance) return {mid, mid_rp, step + 1};
      if ((mid_err > 0.0) == start_high) lo = mid; else hi = mid;
    }
    throw ConvergenceError("pv extraction: bisection did not reach the power tolerance", step, err);
  }
  throw ConvergenceError("pv extraction: iteration cap reached (inconsistent datasheet?)", max_steps, err);
}

/// Datasheet module with resistances filled in by extract_resistances.
inline PvModuleParams with_extracted_resistances(PvModuleParams m) {
  const Resistances r = extract_resistances(m);
  m.r_s = r.r_s;
  m.r_p = r.r_p;
  return m;
}

struct CurvePoints {
  double v_oc = 0.0;
  double i_sc = 0.0;
  double v_mp = 0.0;
  double p_mp = 0.0;
};

struct Deviations {
  double d_oc = 0.0;
  double d_sc = 0.0;
  double d_mp = 0.0;
};

inline Deviations deviation_metrics(const CurvePoints& model, const CurvePoints& measured) {
  if (measured.v_oc == 0.0 || measured.i_sc == 0.0 || measured.v_mp == 0.0 || measured.p_mp == 0.0)
    throw InvalidInput("deviation metrics: measured values must be nonzero");
  const double dp = model.p_mp / measured.p_mp - 1.0;
  const double dv = model.v_mp / measured.v_mp - 1.0;
  return {std::abs(model.v_oc / measured.v_oc - 1.0), std::abs(model.i_sc / measured.i_sc - 1.0),
          std::sqrt(dp * dp + dv * dv)};
}

/// Characteristic points of the model curve at the given conditions.
inline CurvePoints characteristic_points(const PvArrayConfig& array, const CellConditions& c) {
  const PvCurve curve(array, c);
  const MppPoint m = mpp(curve);
  return {curve.open_circuit_voltage(), curve.current(0.0), m.v, m.p};
}

}  // namespace nanogrid::pv
