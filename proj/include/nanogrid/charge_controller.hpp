#pragma once

// MPPT charge controller: buck-converter losses, three-stage charging state
// machine and the load-terminal low-voltage disconnect.

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "nanogrid/error.hpp"

namespace nanogrid::controller {

struct LossConstants {
  double r_ds_on = 2.5e-3;  // ohm
  double r_l = 3e-3;        // ohm
  double t_dead = 5e-9;     // s
  double t_s = 10e-9;       // s
  double t_d = 10e-9;       // s
  double f_sw = 50e3;       // Hz
  double p_auto = 5.0;      // W

  static LossConstants lossless() { return {0, 0, 0, 0, 0, 0, 0}; }

  bool any_positive() const {
    return r_ds_on > 0 || r_l > 0 || (f_sw > 0 && (t_dead > 0 || t_s + t_d > 0)) || p_auto > 0;
  }
};

struct ControllerConfig {
  double v_abs = 28.8;
  double v_flt = 27.0;
  double absorb_duration = 7200.0;  // s
  double v_desc = 22.8;
  double v_rec = 24.8;
  double i_charge_max = 20.0;
  double i_load_max = 20.0;
  double v_pv_max_operating = 90.0;
  double v_pv_max_absolute = 100.0;
  LossConstants losses;

  void validate() const {
    if (!(v_desc < v_rec && v_rec < v_flt && v_flt <= v_abs))
      throw InvalidInput("controller: setpoints must satisfy v_desc < v_rec < v_flt <= v_abs");
    if (!(absorb_duration >= 0.0)) throw InvalidInput("controller: absorb_duration must be >= 0");
    if (!(i_charge_max > 0.0 && i_load_max > 0.0)) throw InvalidInput("controller: current limits must be positive");
    const auto& l = losses;
    if (l.r_ds_on < 0 || l.r_l < 0 || l.t_dead < 0 || l.t_s < 0 || l.t_d < 0 || l.f_sw < 0 || l.p_auto < 0)
      throw InvalidInput("controller: loss constants must be >= 0");
  }
};

/// Equipment defaults for a 24 V VRLA bank.
inline ControllerConfig vrla_24() { return {}; }

/// Setpoints as reconfigured on the reference nanogrid.
inline ControllerConfig gedae_configured() {
  ControllerConfig c;
  c.v_abs = 29.4;
  c.v_flt = 26.4;
  return c;
}

/// VRLA defaults with the lower 24.2 V reconnect threshold.
inline ControllerConfig vrla_24_low_reconnect() {
  ControllerConfig c;
  c.v_rec = 24.2;
  return c;
}

inline std::vector<std::string> preset_names() { return {"vrla-24", "vrla-24-low-reconnect", "gedae-configured"}; }

inline ControllerConfig preset(std::string_view name) {
  if (name == "vrla-24") return vrla_24();
  if (name == "vrla-24-low-reconnect") return vrla_24_low_reconnect();
  if (name == "gedae-configured") return gedae_configured();
  throw InvalidInput("controller: unknown preset '" + std::string(name) + "'");
}

struct LossBreakdown {
  double conduction = 0.0;  // MOSFET on-resistance
  double switching = 0.0;
  double dead_time = 0.0;
  double inductor = 0.0;
  double self_consumption = 0.0;

  double total() const { return conduction + switching + dead_time + inductor + self_consumption; }
};

/// Converter losses at PV voltage v_pv and inductor current i_l = I_pv / D.
inline LossBreakdown converter_losses_at(const LossConstants& k, double v_pv, double i_l) {
  LossBreakdown b;
  b.conduction = 2.0 * k.r_ds_on * i_l * i_l;
  b.switching = 0.5 * v_pv * i_l * k.f_sw * (k.t_s + k.t_d);
  b.dead_time = 2.0 * v_pv * i_l * k.t_dead * k.f_sw;
  b.inductor = k.r_l * i_l * i_l;
  b.self_consumption = k.p_auto;
  return b;
}

inline LossBreakdown converter_losses(const ControllerConfig& cfg, double v_pv, double i_pv, double duty) {
  if (!(duty > 0.0 && duty <= 1.0)) throw InvalidInput("controller: duty must lie in (0, 1]");
  return converter_losses_at(cfg.losses, v_pv, i_pv / duty);
}

/// Buck output current after losses, floored at zero.
inline double buck_output_current(const ControllerConfig& cfg, double v_pv, double i_pv, double v_o, double duty) {
  if (!(duty > 0.0 && duty <= 1.0)) throw InvalidInput("controller: duty must lie in (0, 1]");
  if (!(v_o > 0.0)) throw InvalidInput("controller: output voltage must be positive");
  const double i_l = i_pv / duty;
  return std::max(0.0, i_l - converter_losses_at(cfg.losses, v_pv, i_l).total() / v_o);
}

inline double conversion_efficiency(double v_pv, double i_pv, double v_o, double i_o) {
  const double p_in = v_pv * i_pv;
  if (!(p_in > 0.0)) throw InvalidInput("controller: efficiency undefined at zero input power");
  return std::clamp(v_o * i_o / p_in, 0.0, 1.0);
}

enum class Stage { bulk, absorption, float_, night };

constexpr std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::bulk: return "bulk";
    case Stage::absorption: return "absorption";
    case Stage::float_: return "float";
    case Stage::night: return "night";
  }
  return "?";
}

struct ControllerState {
  Stage stage = Stage::night;
  double absorb_elapsed = 0.0;  // s
  bool load_connected = true;
  double duty = 1.0;
};

/// Advances the charging-stage machine. `setpoint_held` is false when the
/// regulated stage could not hold its voltage with the available PV current.
inline ControllerState step_stage(const ControllerConfig& cfg, const ControllerState& s, double v_bat,
                                  bool pv_available, double dt, bool setpoint_held = true) {
  if (!(dt > 0.0)) throw InvalidInput("controller: dt must be positive");
  ControllerState n = s;
  if (!pv_available) {
    n.stage = Stage::night;
    return n;
  }
  switch (s.stage) {
    case Stage::night:
      n.stage = Stage::bulk;
      n.absorb_elapsed = 0.0;
      break;
    case Stage::bulk:
      // A bulk interlude after the absorption timer has run out resumes float.
      if (s.absorb_elapsed >= cfg.absorb_duration) {
        if (v_bat >= cfg.v_flt) n.stage = Stage::float_;
      } else if (v_bat >= cfg.v_abs) {
        n.stage = Stage::absorption;
      }
      break;
    case Stage::absorption:
      if (!setpoint_held) {
        n.stage = Stage::bulk;
        break;
      }
      n.absorb_elapsed = std::min(s.absorb_elapsed + dt, cfg.absorb_duration);
      if (n.absorb_elapsed >= cfg.absorb_duration) n.stage = Stage::float_;
      break;
    case Stage::float_:
      if (!setpoint_held) n.stage = Stage::bulk;
      break;
  }
  return n;
}

inline ControllerState lvd_hysteresis(const ControllerConfig& cfg, const ControllerState& s, double v_bat) {
  ControllerState n = s;
  if (v_bat <= cfg.v_desc) n.load_connected = false;
  else if (v_bat >= cfg.v_rec) n.load_connected = true;
  return n;
}

/// Regulation voltage of the current stage, or 0 when unregulated.
inline double stage_setpoint(const ControllerConfig& cfg, Stage s) {
  if (s == Stage::absorption) return cfg.v_abs;
  if (s == Stage::float_) return cfg.v_flt;
  return 0.0;
}

}  // namespace nanogrid::controller
