#pragma once

// Fixed-step time-domain engine: each step first settles device logic
// (controller stages, LVD relays, PV operating limits) from the previous
// step, then solves the network with the GSS terminals as current-dependent
// sources, then advances batteries and timers. Energies are accumulated by
// trapezoidal integration into a per-day ledger.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nanogrid/battery_model.hpp"
#include "nanogrid/charge_controller.hpp"
#include "nanogrid/gss.hpp"
#include "nanogrid/network.hpp"
#include "nanogrid/powerflow.hpp"
#include "nanogrid/pv_model.hpp"
#include "nanogrid/system_config.hpp"
#include "nanogrid/timeseries.hpp"

namespace nanogrid::sim {

struct GssSetup {
  GssSpec spec;
  double soc = 1.0;
  double loe = std::numeric_limits<double>::quiet_NaN();  // NaN: consistent with soc
  double soh = 1.0;
};

struct LoadBankInstance {
  std::string id;
  std::string bus;
  config::LoadBankSpec spec;
  std::shared_ptr<const config::LoadSchedule> schedule;  // null: always on
};

struct Scenario {
  network::Network network;
  std::vector<GssSetup> gss;
  std::vector<LoadBankInstance> loads;
  TimeSeries irradiance;  // W/m2
  TimeSeries ambient;     // degC
  double dt = 1.0;        // s
  Seconds start = 0;
  Seconds end = 0;
  double conductor_temp = 30.0;  // degC

  void validate() const {
    network.validate();
    if (!(dt > 0.0)) throw InvalidInput("scenario: dt must be positive");
    if (end < start) throw InvalidInput("scenario: window end precedes start");
    for (const auto& g : gss) {
      network.index_of(g.spec.bus);
      g.spec.pv.validate();
      g.spec.controller.validate();
      if (g.spec.battery) g.spec.battery->validate();
    }
    for (const auto& l : loads) {
      network.index_of(l.bus);
      l.spec.validate();
    }
    if (end > start) {
      irradiance.check_window(start, end, dt, "irradiance");
      ambient.check_window(start, end, dt, "ambient temperature");
    }
  }
};

/// Level of energy matching a state of charge at the nominal-rate capacity.
inline double consistent_loe(const battery::BatteryParams& p, double soc, double soh) {
  return std::clamp(soc * battery::capacity(p, p.nominal_current(), 25.0, soh) / p.max_capacity(), 0.0, 1.0);
}

struct GssTrace {
  double v_bat = 0.0;
  double i_bat = 0.0;
  double i_out = 0.0;
  double v_pv = 0.0;
  double i_pv = 0.0;
  double p_pv = 0.0;
  double p_bat = 0.0;
  double p_out = 0.0;
  double p_loss = 0.0;  // converter losses including self-consumption
  double soc = 0.0;
  double loe = 0.0;
  double soh = 0.0;
  controller::Stage stage = controller::Stage::night;
  bool load_connected = true;
  battery::Region region = battery::Region::transition;
};

struct LoadTrace {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

struct StepRecord {
  double t = 0.0;  // s from window start
  Seconds time = 0;  // UTC epoch seconds (floor)
  double irradiance = 0.0;
  double ambient = 0.0;
  std::vector<GssTrace> gss;
  std::vector<LoadTrace> loads;
  std::vector<double> branch_currents;
  double p_lines = 0.0;  // sum of I^2 R
  bool converged = true;
};

struct Event {
  Seconds time = 0;
  std::string device;
  std::string what;
};

struct EnergyLedger {
  double e_gfv = 0.0;    // kWh, PV generation
  double e_bc = 0.0;     // kWh, load consumption
  double e_bb = 0.0;     // kWh, net battery energy (positive charged)
  double e_losses = 0.0;  // kWh, E_GFV - E_BB - E_BC
  double e_losses_independent = 0.0;  // kWh, line I^2R plus converter losses
  std::vector<double> e_gfv_per_gss;
  std::vector<double> e_bb_per_gss;
  std::vector<double> yields;  // kWh/kWp per PV generator
  std::optional<double> eta_supply;  // percent
};

/// Residual losses and supply efficiency from the three measured energies.
inline EnergyLedger ledger_from_energies(double e_gfv, double e_bc, double e_bb) {
  EnergyLedger l;
  l.e_gfv = e_gfv;
  l.e_bc = e_bc;
  l.e_bb = e_bb;
  l.e_losses = e_gfv - e_bb - e_bc;
  if (e_bc != 0.0) l.eta_supply = (1.0 - l.e_losses / e_bc) * 100.0;
  return l;
}

/// PV yield in kWh/kWp.
inline double pv_yield(double e_gfv_kwh, double p_mp_stc_kwp) {
  if (!(p_mp_stc_kwp > 0.0)) throw InvalidInput("yield: rated power must be positive");
  return e_gfv_kwh / p_mp_stc_kwp;
}

/// Trapezoidal accumulation of step powers into energies.
class LedgerAccumulator {
 public:
  explicit LedgerAccumulator(std::vector<double> p_mp_stc_w) : p_mp_stc_(std::move(p_mp_stc_w)) {
    gfv_.assign(p_mp_stc_.size(), 0.0);
    bb_.assign(p_mp_stc_.size(), 0.0);
  }

  void add(const StepRecord& r) {
    if (prev_) {
      const double h = (r.t - prev_->t) / 3600.0 / 1000.0;  // W -> kWh
      for (std::size_t k = 0; k < gfv_.size(); ++k) {
        gfv_[k] += 0.5 * (prev_->gss[k].p_pv + r.gss[k].p_pv) * h;
        bb_[k] += 0.5 * (prev_->gss[k].p_bat + r.gss[k].p_bat) * h;
        loss_ += 0.5 * (prev_->gss[k].p_loss + r.gss[k].p_loss) * h;
      }
      for (std::size_t k = 0; k < r.loads.size(); ++k) bc_ += 0.5 * (prev_->loads[k].p + r.loads[k].p) * h;
      loss_ += 0.5 * (prev_->p_lines + r.p_lines) * h;
    }
    prev_ = r;
    prev_->branch_currents.clear();
  }

  EnergyLedger ledger() const {
    double gfv = 0.0, bb = 0.0;
    for (double x : gfv_) gfv += x;
    for (double x : bb_) bb += x;
    EnergyLedger l = ledger_from_energies(gfv, bc_, bb);
    l.e_losses_independent = loss_;
    l.e_gfv_per_gss = gfv_;
    l.e_bb_per_gss = bb_;
    for (std::size_t k = 0; k < gfv_.size(); ++k) l.yields.push_back(pv_yield(gfv_[k], p_mp_stc_[k] / 1000.0));
    return l;
  }

 private:
  std::vector<double> p_mp_stc_;
  std::vector<double> gfv_, bb_;
  double bc_ = 0.0;
  double loss_ = 0.0;
  std::optional<StepRecord> prev_;
};

/// Energy ledger of a recorded trace.
inline EnergyLedger energy_ledger(const std::vector<StepRecord>& traces, const std::vector<double>& p_mp_stc_w) {
  if (traces.empty()) throw InvalidInput("ledger: traces are empty");
  LedgerAccumulator acc(p_mp_stc_w);
  for (const auto& r : traces) acc.add(r);
  return acc.ledger();
}

struct DayLedger {
  Seconds day_start = 0;
  EnergyLedger ledger;
};

struct SimOptions {
  bool record_traces = true;
  int inner_max_iterations = 50;
  std::function<void(const StepRecord&)> on_step;  // streaming sink
};

struct SimResult {
  std::vector<std::string> gss_ids;
  std::vector<std::string> load_ids;
  std::vector<std::string> branch_labels;
  std::vector<StepRecord> steps;
  std::vector<DayLedger> days;
  EnergyLedger total;
  std::vector<Event> events;
  int steps_run = 0;
  int nonconverged_steps = 0;
  std::vector<double> v_bat_min, v_bat_max;
};

/// Mutable engine state between steps.
struct WorldState {
  std::vector<GssState> gss;
  std::vector<bool> held;         // setpoint held on the previous step
  std::vector<double> i_out;      // previous grid currents
  double t = 0.0;
};

inline WorldState initial_world(const Scenario& sc) {
  WorldState w;
  for (const auto& g : sc.gss) {
    GssState s;
    if (g.spec.battery) {
      const auto& p = *g.spec.battery;
      const double loe = std::isnan(g.loe) ? consistent_loe(p, g.soc, g.soh) : g.loe;
      s.battery = battery::BatteryState::make(p, g.soc, loe, g.soh);
      s.v_terminal = battery::terminal_voltage(p, *s.battery, 0.0).volts;
      s.ctrl.load_connected = s.v_terminal > g.spec.controller.v_desc;
    }
    w.gss.push_back(s);
    w.held.push_back(true);
    w.i_out.push_back(0.0);
  }
  return w;
}

/// Advances the world by one step starting at window offset w.t.
inline StepRecord step(const Scenario& sc, WorldState& w, std::vector<Event>* events = nullptr,
                       int inner_max_iterations = 50) {
  const double dt = sc.dt;
  const double t_abs = static_cast<double>(sc.start) + w.t;
  const Seconds now = static_cast<Seconds>(std::floor(t_abs));
  const pv::OperatingEnvironment env{std::max(0.0, sc.irradiance.at(t_abs)), sc.ambient.at(t_abs)};
  const std::size_t n_gss = sc.gss.size();
  auto log = [&](const std::string& dev, const std::string& what) {
    if (events) events->push_back({now, dev, what});
  };

  // Stage 1: device logic from the previous step.
  std::vector<GssStep> steps;
  steps.reserve(n_gss);
  for (std::size_t k = 0; k < n_gss; ++k) {
    const auto& spec = sc.gss[k].spec;
    auto& st = w.gss[k];
    GssStep gs(spec, st, env);
    const double v_prev = gs.reference_voltage();
    controller::ControllerState ctrl = controller::step_stage(spec.controller, st.ctrl, v_prev, gs.pv_available(), dt,
                                                              w.held[k]);
    if (st.battery) ctrl = controller::lvd_hysteresis(spec.controller, ctrl, v_prev);
    if (ctrl.stage != st.ctrl.stage) log(spec.id, std::string("stage ") + std::string(controller::to_string(ctrl.stage)));
    if (ctrl.load_connected != st.ctrl.load_connected)
      log(spec.id, ctrl.load_connected ? "load reconnected" : "low-voltage disconnect");
    gs.restage(ctrl);
    st.ctrl = ctrl;
    steps.push_back(std::move(gs));
  }

  // Stage 2: network solve.
  std::map<std::string, double> g_bus;
  const int minute = static_cast<int>((now % 86400 + 86400) % 86400 / 60);
  std::vector<std::optional<double>> r_load(sc.loads.size());
  for (std::size_t k = 0; k < sc.loads.size(); ++k) {
    const auto& lb = sc.loads[k];
    const auto mask = lb.schedule ? config::bank_mask(lb.spec, *lb.schedule, minute) : config::all_on(lb.spec);
    r_load[k] = config::bank_equivalent_resistance(lb.spec, mask);
    if (r_load[k]) g_bus[lb.bus] += 1.0 / *r_load[k];
  }
  std::map<std::string, flow::LoadSpec> loads;
  for (const auto& [bus, g] : g_bus) loads[bus] = flow::LoadSpec::resistance(1.0 / g);

  std::vector<bool> open(n_gss, false);
  flow::CoupledResult cr;
  std::vector<std::size_t> src_of, inj_of;
  for (int attempt = 0; attempt <= static_cast<int>(n_gss); ++attempt) {
    std::vector<flow::SourceModel> sources;
    std::vector<flow::InjectorModel> injectors;
    std::vector<double> guess;
    src_of.clear();
    inj_of.clear();
    for (std::size_t k = 0; k < n_gss; ++k) {
      const auto& spec = sc.gss[k].spec;
      if (!w.gss[k].ctrl.load_connected || open[k]) continue;
      const GssStep* gs = &steps[k];
      if (spec.battery) {
        sources.push_back({spec.bus, [gs](double i) { return gs->terminal_voltage(i); }});
        guess.push_back(w.i_out[k]);
        src_of.push_back(k);
      } else {
        injectors.push_back({spec.bus, [gs](double v) { return gs->inject(v, false).i_out; }});
        inj_of.push_back(k);
      }
    }
    flow::CoupledOptions opt;
    opt.max_iterations = inner_max_iterations;
    try {
      cr = flow::coupled_flow(sc.network, sources, injectors, loads, sc.conductor_temp, opt,
                              guess.size() == sources.size() && !guess.empty() ? &guess : nullptr);
    } catch (const Error& e) {
      throw Error("at " + format_iso8601(now) + ": " + e.what());
    }
    bool tripped = false;
    for (std::size_t a = 0; a < src_of.size(); ++a) {
      const std::size_t k = src_of[a];
      if (std::abs(cr.source_currents[a]) > sc.gss[k].spec.controller.i_load_max) {
        open[k] = true;
        tripped = true;
        log(sc.gss[k].spec.id, "load overcurrent, terminal opened");
      }
    }
    if (!tripped) break;
  }

  StepRecord rec;
  rec.t = w.t;
  rec.time = now;
  rec.irradiance = env.irradiance;
  rec.ambient = env.ambient_temp;
  rec.converged = cr.converged;
  std::vector<double> i_out(n_gss, 0.0);
  for (std::size_t a = 0; a < src_of.size(); ++a) i_out[src_of[a]] = cr.source_currents[a];

  // Stage 3: operating points, then advance states.
  rec.gss.resize(n_gss);
  for (std::size_t k = 0; k < n_gss; ++k) {
    const auto& spec = sc.gss[k].spec;
    auto& st = w.gss[k];
    GssOperatingPoint op;
    if (spec.battery) {
      op = steps[k].evaluate(i_out[k]);
    } else {
      const bool live = cr.energized && st.ctrl.load_connected && !open[k];
      op = steps[k].inject(live ? cr.flow.voltages.at(spec.bus) : 0.0);
    }
    GssTrace& tr = rec.gss[k];
    tr.v_bat = op.v_terminal;
    tr.i_bat = op.i_bat;
    tr.i_out = op.i_out;
    tr.v_pv = op.v_pv;
    tr.i_pv = op.i_pv;
    tr.p_pv = op.p_pv;
    tr.p_bat = op.p_bat();
    tr.p_out = op.p_out();
    tr.p_loss = op.losses.total();
    tr.stage = st.ctrl.stage;
    tr.load_connected = st.ctrl.load_connected && !open[k];
    tr.region = op.region;
    if (st.battery) {
      battery::BatteryState b = battery::step_state(*spec.battery, *st.battery, op.i_bat, env.ambient_temp, dt);
      b = battery::apply_self_discharge(*spec.battery, b, dt);
      st.battery = b;
      tr.soc = b.soc;
      tr.loe = b.loe;
      tr.soh = b.soh;
    }
    st.v_terminal = op.v_terminal;
    w.held[k] = op.setpoint_held;
    w.i_out[k] = i_out[k];
  }

  rec.loads.resize(sc.loads.size());
  for (std::size_t k = 0; k < sc.loads.size(); ++k) {
    const double v = cr.flow.voltages.count(sc.loads[k].bus) ? cr.flow.voltages.at(sc.loads[k].bus) : 0.0;
    if (r_load[k]) rec.loads[k] = {v, v / *r_load[k], v * v / *r_load[k]};
    else rec.loads[k] = {v, 0.0, 0.0};
  }
  rec.branch_currents = cr.flow.branch_currents;
  const auto res = network::branch_resistances(sc.network, sc.conductor_temp);
  for (std::size_t k = 0; k < res.size(); ++k) rec.p_lines += rec.branch_currents[k] * rec.branch_currents[k] * res[k];

  w.t += dt;
  return rec;
}

inline SimResult run(const Scenario& sc, const SimOptions& opt = {}) {
  sc.validate();
  SimResult out;
  std::vector<double> p_rated;
  for (const auto& g : sc.gss) {
    out.gss_ids.push_back(g.spec.id);
    p_rated.push_back(g.spec.pv.p_mp_stc());
  }
  for (const auto& l : sc.loads) out.load_ids.push_back(l.id);
  for (const auto& b : sc.network.branches()) out.branch_labels.push_back(b.a + "-" + b.b);
  out.v_bat_min.assign(sc.gss.size(), std::numeric_limits<double>::infinity());
  out.v_bat_max.assign(sc.gss.size(), -std::numeric_limits<double>::infinity());

  WorldState w = initial_world(sc);
  const auto n_steps = static_cast<long>(std::floor(static_cast<double>(sc.end - sc.start) / sc.dt + 1e-9));
  LedgerAccumulator total(p_rated);
  std::optional<LedgerAccumulator> day;
  Seconds day_start = 0;
  for (long s = 0; s < n_steps; ++s) {
    w.t = static_cast<double>(s) * sc.dt;
    StepRecord rec = step(sc, w, &out.events, opt.inner_max_iterations);
    ++out.steps_run;
    if (!rec.converged) ++out.nonconverged_steps;
    for (std::size_t k = 0; k < sc.gss.size(); ++k) {
      out.v_bat_min[k] = std::min(out.v_bat_min[k], rec.gss[k].v_bat);
      out.v_bat_max[k] = std::max(out.v_bat_max[k], rec.gss[k].v_bat);
    }
    const Seconds d = rec.time - ((rec.time % 86400) + 86400) % 86400;
    if (!day || d != day_start) {
      if (day) {
        day->add(rec);  // close the last interval of the previous day
        out.days.push_back({day_start, day->ledger()});
      }
      day.emplace(p_rated);
      day_start = d;
    }
    day->add(rec);
    total.add(rec);
    if (opt.on_step) opt.on_step(rec);
    if (opt.record_traces) out.steps.push_back(std::move(rec));
  }
  if (day) out.days.push_back({day_start, day->ledger()});
  out.total = total.ledger();
  return out;
}

}  // namespace nanogrid::sim
