#pragma once

// Generation-and-storage system: PV generator, optional battery bank and the
// charge controller joining them, seen from the controller's load terminal.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "nanogrid/battery_model.hpp"
#include "nanogrid/charge_controller.hpp"
#include "nanogrid/pv_model.hpp"

namespace nanogrid {

struct GssSpec {
  std::string id;
  std::string bus;
  pv::PvArrayConfig pv;
  std::optional<battery::BatteryParams> battery;
  controller::ControllerConfig controller;
};

struct GssState {
  controller::ControllerState ctrl;
  std::optional<battery::BatteryState> battery;
  double v_terminal = 0.0;  // last solved terminal voltage
};

struct GssOperatingPoint {
  double v_terminal = 0.0;  // battery / load-terminal voltage
  double i_out = 0.0;       // into the grid
  double i_bat = 0.0;       // positive charging
  double i_o = 0.0;         // converter output, >= 0
  double v_pv = 0.0;
  double i_pv = 0.0;
  double p_pv = 0.0;
  double duty = 1.0;
  controller::LossBreakdown losses;
  battery::Region region = battery::Region::transition;
  bool setpoint_held = true;
  bool curtailed = false;
  bool pv_disconnected = false;

  double p_bat() const { return v_terminal * i_bat; }
  double p_out() const { return v_terminal * i_out; }
};

namespace detail {

/// Root of an increasing function on [lo, hi] by Illinois false position.
/// Returns the bracket end when f does not change sign.
template <class F>
double increasing_root(F&& f, double lo, double hi, double tol) {
  double flo = f(lo), fhi = f(hi);
  if (flo >= 0.0) return lo;
  if (fhi <= 0.0) return hi;
  int side = 0;
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    double x = (lo * fhi - hi * flo) / (fhi - flo);
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (fx < 0.0) {
      lo = x; flo = fx;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = x; fhi = fx;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// One GSS frozen at the start of a time step: battery state, controller
/// stage and PV conditions are fixed, the grid current is the free variable.
class GssStep {
 public:
  static constexpr double kMinIrradiance = 1.0;  // W/m2

  GssStep(const GssSpec& spec, const GssState& state, const pv::OperatingEnvironment& env)
      : spec_(spec), state_(state), env_(env), curve_(spec.pv, pv::to_cell_conditions(env, spec.pv.module)) {
    const auto& cfg = spec.controller;
    v_ref_ = state.v_terminal;
    if (state.battery && v_ref_ <= 0.0)
      v_ref_ = battery::terminal_voltage(*spec.battery, *state.battery, 0.0).volts;
    if (env.irradiance > kMinIrradiance) {
      v_oc_ = curve_.open_circuit_voltage();
      if (v_oc_ > v_ref_) {
        const double v_est = pv::mpp_voltage_estimate(spec.pv, env);
        if (v_oc_ > cfg.v_pv_max_absolute || v_est > cfg.v_pv_max_operating) {
          pv_disconnected_ = true;
        } else {
          v_mp_ = std::clamp(v_est, v_ref_, v_oc_);
          i_mp_ = std::max(0.0, curve_.current(v_mp_));
          pv_usable_ = v_mp_ * i_mp_ > 0.0;
        }
      }
    }
    pv_available_ = pv_usable_;
    restage(state.ctrl);
  }

  /// Replaces the controller state (stage, load relay) used by this step.
  void restage(const controller::ControllerState& ctrl) {
    const auto& cfg = spec_.controller;
    state_.ctrl = ctrl;
    setpoint_ = controller::stage_setpoint(cfg, ctrl.stage);
    i_hold_ = 0.0;
    if (state_.battery && setpoint_ > 0.0 && pv_usable_) {
      const double i_hi = cfg.i_charge_max;
      const double i_lo = -(cfg.i_load_max + cfg.i_charge_max);
      i_hold_ = battery::current_for_voltage(*spec_.battery, *state_.battery, setpoint_, i_lo, i_hi);
    }
  }

  const controller::ControllerState& controller_state() const { return state_.ctrl; }

  bool has_battery() const { return state_.battery.has_value(); }
  bool pv_available() const { return pv_available_; }
  bool pv_disconnected() const { return pv_disconnected_; }
  double reference_voltage() const { return v_ref_; }
  const GssSpec& spec() const { return spec_; }

  /// Battery-backed terminal: operating point when the grid draws i_out.
  /// With resolve_pv the off-MPP PV voltage is located for reporting.
  GssOperatingPoint evaluate(double i_out, bool resolve_pv = true) const {
    if (!has_battery()) throw InvalidInput("gss " + spec_.id + ": evaluate needs a battery");
    const auto& cfg = spec_.controller;
    const double p_auto = cfg.losses.p_auto;

    if (pv_usable_ && setpoint_ > 0.0) {
      const double target = i_hold_ + i_out;
      if (target > net_limit(setpoint_, i_out)) {
        GssOperatingPoint op = bulk(i_out, resolve_pv);
        op.setpoint_held = false;
        return op;
      }
      if (target >= -p_auto / setpoint_) {
        GssOperatingPoint op = finish(setpoint_, i_out, target, resolve_pv);
        op.region = battery::terminal_voltage(*spec_.battery, *state_.battery, op.i_bat).region;
        return op;
      }
      return idle(i_out);
    }
    if (pv_usable_) return bulk(i_out, resolve_pv);
    return idle(i_out);
  }

  /// Battery-absent terminal: converted PV power injected at node voltage v_node.
  GssOperatingPoint inject(double v_node, bool resolve_pv = true) const {
    GssOperatingPoint op;
    op.v_terminal = v_node;
    op.pv_disconnected = pv_disconnected_;
    if (!pv_usable_ || !(v_node > 0.0) || v_node >= v_oc_) return op;
    const double mpp_net = net_output(v_mp_, v_mp_ * i_mp_, v_node);
    if (mpp_net <= 0.0) return op;
    const double i_net = std::min(mpp_net, spec_.controller.i_charge_max);
    op = finish(v_node, i_net, i_net, resolve_pv);
    op.i_bat = 0.0;
    return op;
  }

  /// Terminal voltage seen by the grid at current i_out (battery-backed only).
  double terminal_voltage(double i_out) const { return evaluate(i_out, false).v_terminal; }

 private:
  // Converter net output current at PV point (v_pv, p_pv) and output voltage v;
  // negative when the PV power does not cover the losses.
  double net_output(double v_pv, double p_pv, double v) const {
    return (p_pv - controller::converter_losses_at(spec_.controller.losses, v_pv, p_pv / v).total()) / v;
  }

  double net_limit(double v, double i_out) const {
    return std::min(net_output(v_mp_, v_mp_ * i_mp_, v), spec_.controller.i_charge_max + i_out);
  }

  double battery_voltage(double i_bat) const {
    return battery::terminal_voltage(*spec_.battery, *state_.battery, i_bat).volts;
  }

  // Solves V = V_bat(i_net(V) - i_out) for a net-output law decreasing in V.
  template <class Net>
  double solve_terminal(double i_out, Net&& i_net) const {
    auto h = [&](double v) { return v - battery_voltage(i_net(v) - i_out); };
    const double v_n = spec_.battery->bank_nominal_voltage();
    return detail::increasing_root(h, 0.25 * v_n, 2.0 * v_n, 1e-10);
  }

  GssOperatingPoint bulk(double i_out, bool resolve_pv) const {
    const double v = solve_terminal(i_out, [&](double vv) { return net_limit(vv, i_out); });
    const double i_net = net_limit(v, i_out);
    if (i_net < -spec_.controller.losses.p_auto / v) return idle(i_out);
    GssOperatingPoint op = finish(v, i_out, i_net, resolve_pv);
    op.region = battery::terminal_voltage(*spec_.battery, *state_.battery, op.i_bat).region;
    return op;
  }

  GssOperatingPoint idle(double i_out) const {
    const double p_auto = spec_.controller.losses.p_auto;
    const double v = solve_terminal(i_out, [&](double vv) { return -p_auto / vv; });
    GssOperatingPoint op;
    op.v_terminal = v;
    op.i_out = i_out;
    op.i_bat = -p_auto / v - i_out;
    op.losses.self_consumption = p_auto;
    op.pv_disconnected = pv_disconnected_;
    op.region = battery::terminal_voltage(*spec_.battery, *state_.battery, op.i_bat).region;
    return op;
  }

  // Fills the PV side for net converter output i_net at terminal voltage v.
  GssOperatingPoint finish(double v, double i_out, double i_net, bool resolve_pv) const {
    const auto& cfg = spec_.controller;
    GssOperatingPoint op;
    op.v_terminal = v;
    op.i_out = i_out;
    op.i_bat = i_net - i_out;
    op.i_o = std::max(0.0, i_net);
    op.pv_disconnected = pv_disconnected_;
    const double p_mp = v_mp_ * i_mp_;
    const double mpp_net = net_output(v_mp_, p_mp, v);
    double v_pv = v_mp_;
    double p_pv = p_mp;
    if (i_net < mpp_net - 1e-12) {
      op.curtailed = true;
      if (resolve_pv) {
        // Move toward open circuit until the converter output matches.
        auto g = [&](double vp) { return i_net - net_output(vp, vp * std::max(0.0, curve_.current(vp)), v); };
        v_pv = detail::increasing_root(g, v_mp_, v_oc_, 1e-12 * v_oc_);
        p_pv = v_pv * std::max(0.0, curve_.current(v_pv));
      }
    }
    op.v_pv = v_pv;
    op.p_pv = p_pv;
    op.i_pv = v_pv > 0.0 ? p_pv / v_pv : 0.0;
    op.duty = v_pv > 0.0 ? std::min(1.0, v / v_pv) : 1.0;
    op.losses = controller::converter_losses_at(cfg.losses, v_pv, p_pv / v);
    return op;
  }

  GssSpec spec_;
  GssState state_;
  pv::OperatingEnvironment env_;
  pv::PvCurve curve_;
  double v_ref_ = 0.0;
  double v_oc_ = 0.0;
  double v_mp_ = 0.0;
  double i_mp_ = 0.0;
  double setpoint_ = 0.0;
  double i_hold_ = 0.0;
  bool pv_usable_ = false;
  bool pv_available_ = false;
  bool pv_disconnected_ = false;
};

}  // namespace nanogrid
