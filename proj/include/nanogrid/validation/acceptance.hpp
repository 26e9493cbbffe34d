#pragma once

// Acceptance checks: one function per criterion, each returning a pass/fail
// verdict with a one-line detail and the oracle reports behind it.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "nanogrid/io/config_files.hpp"
#include "nanogrid/nanogrid.hpp"
#include "nanogrid/validation/oracles.hpp"

namespace nanogrid::validation {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  std::vector<OracleReport> reports;
};

struct AcceptanceOptions {
  std::filesystem::path data_dir = "data";
  bool dt_halving = true;
  std::uint64_t seed = 20181023;
  int random_networks = 200;
};

namespace detail {

inline std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

inline bool all_pass(const std::vector<OracleReport>& r) {
  for (const auto& x : r)
    if (!x.pass) return false;
  return !r.empty();
}

inline std::string first_failure(const std::vector<OracleReport>& r) {
  for (const auto& x : r)
    if (!x.pass) return x.case_id + ": got " + fmt("%.10g", x.computed) + ", want " + fmt("%.10g", x.reference);
  return "";
}

template <class F>
CriterionResult timed(int id, std::string title, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.id = id;
  r.title = std::move(title);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline TimeSeries constant_series(Seconds start, Seconds end, double value) {
  if (end == start) return TimeSeries({{start, value}});
  return TimeSeries({{start, value}, {end, value}});
}

inline GssSpec standard_gss(const std::string& id, const std::string& bus) {
  GssSpec g;
  g.id = id;
  g.bus = bus;
  g.pv = pv::PvArrayConfig{pv::with_extracted_resistances(pv::yl245p_29b_datasheet()), 2};
  g.battery = battery::dcdn_bank();
  g.controller = controller::vrla_24();
  return g;
}

}  // namespace detail

/// Conductor resistances of every branch against the published table.
inline CriterionResult criterion_conductor_table() {
  return detail::timed(1, "conductor table reproduction", [] {
    CriterionResult r;
    const network::Conductor c;
    r.reports = oracle_conductor_table([&](double len, double temp) { return network::branch_resistance(len, c, temp); });
    int ok = 0;
    for (const auto& x : r.reports) ok += x.pass;
    r.pass = detail::all_pass(r.reports) && r.reports.size() == 12;
    r.detail = std::to_string(ok) + "/" + std::to_string(r.reports.size()) +
               " rows within 1e-4 ohm at 30 degC (N8-N7 and N8-N9 paired by length)";
    if (!r.pass) r.detail += "; " + detail::first_failure(r.reports);
    return r;
  });
}

/// Model points at STC after resistance extraction, and the deviation-metric
/// arithmetic on the first generator's row.
inline CriterionResult criterion_pv_fidelity() {
  return detail::timed(2, "PV model fidelity", [] {
    CriterionResult r;
    const pv::PvArrayConfig a{pv::with_extracted_resistances(pv::yl245p_29b_datasheet()), 1};
    const pv::CurvePoints cp = pv::characteristic_points(a, pv::CellConditions::stc());
    r.reports.push_back(make_report("P_MP at STC", 238.25, "module flash test", cp.p_mp, 5e-3, false));
    r.reports.push_back(make_report("V_OC at STC", 37.21, "module flash test", cp.v_oc, 2e-3, false));
    r.reports.push_back(make_report("I_SC at STC", 8.76, "module flash test", cp.i_sc, 2e-3, false));

    // Endpoint ratios reconstructed from the PVG1 row (0.6173 %, 6.7539 %, 3.0819 %).
    const double d_oc = 0.006173, d_sc = 0.067539, d_mp = 0.030819;
    const double dp = 0.02, dv = -std::sqrt(d_mp * d_mp - dp * dp);
    const pv::CurvePoints measured{36.0, 8.0, 28.0, 200.0};
    const pv::CurvePoints model{36.0 * (1 + d_oc), 8.0 * (1 - d_sc), 28.0 * (1 + dv), 200.0 * (1 + dp)};
    const pv::Deviations d = pv::deviation_metrics(model, measured);
    r.reports.push_back(make_report("D_OC PVG1", d_oc, "real-sun deviation table, PVG1", d.d_oc, 1e-9, false));
    r.reports.push_back(make_report("D_SC PVG1", d_sc, "real-sun deviation table, PVG1", d.d_sc, 1e-9, false));
    r.reports.push_back(make_report("D_MP PVG1", d_mp, "real-sun deviation table, PVG1", d.d_mp, 1e-9, false));
    r.pass = detail::all_pass(r.reports);
    r.detail = "P_MP " + detail::fmt("%.3f W", cp.p_mp) + ", V_OC " + detail::fmt("%.4f V", cp.v_oc) + ", I_SC " +
               detail::fmt("%.4f A", cp.i_sc) + "; deviation metrics reproduce PVG1 row";
    if (!r.pass) r.detail += "; " + detail::first_failure(r.reports);
    return r;
  });
}

/// The reference system's sizing inputs.
inline config::SizingInput reference_sizing_input() {
  config::SizingInput in;
  in.daily_dc_load = 1.63;
  in.charge_discharge_eff = 0.86;
  in.hsp_min = 4.2;
  in.max_depth_of_discharge = 0.8;
  in.safety_factor = 1.25;
  in.bank_voltage = 24.0;
  return in;
}

inline CriterionResult criterion_sizing() {
  return detail::timed(3, "sizing reproduction", [] {
    CriterionResult r;
    const config::SizingResult s = config::size_system(reference_sizing_input());
    r.reports.push_back(make_report("N_D", 2.56, "sizing example", s.autonomy_days, 0.01, true));
    r.reports.push_back(make_report("bank capacity Ah", 256.0, "sizing example", s.bank_capacity_ah, 0.02, false));
    r.reports.push_back(make_report("PV power Wp", 570.0, "sizing example", s.pv_rated_wp, 0.02, false));
    r.pass = detail::all_pass(r.reports);
    r.detail = "N_D " + detail::fmt("%.3f", s.autonomy_days) + ", C " + detail::fmt("%.1f Ah", s.bank_capacity_ah) +
               ", P " + detail::fmt("%.1f Wp", s.pv_rated_wp);
    if (!r.pass) r.detail += "; " + detail::first_failure(r.reports);
    return r;
  });
}

/// Random connected network with 1-3 source buses; loads on some of the rest.
struct RandomCase {
  network::Network net;
  flow::FlowProblem resistive;
  flow::FlowProblem power;
};

inline RandomCase random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_bus(2, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomCase c;
  const int n = n_bus(rng);
  for (int i = 0; i < n; ++i) c.net.add_bus("B" + std::to_string(i), network::BusKind::junction);
  std::set<std::pair<int, int>> used;
  auto connect = [&](int a, int b) {
    if (a == b || used.count({std::min(a, b), std::max(a, b)})) return;
    used.insert({std::min(a, b), std::max(a, b)});
    c.net.add_branch("B" + std::to_string(a), "B" + std::to_string(b), 2.0 + 38.0 * u(rng));
  };
  for (int i = 1; i < n; ++i) connect(i, static_cast<int>(u(rng) * i));  // spanning tree
  const int extra = static_cast<int>(u(rng) * n);
  for (int k = 0; k < extra; ++k) connect(static_cast<int>(u(rng) * n), static_cast<int>(u(rng) * n));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_src = std::min(n - 1, 1 + static_cast<int>(u(rng) * 3));
  c.resistive.conductor_temp = c.power.conductor_temp = 20.0 + 20.0 * u(rng);
  for (int k = 0; k < n; ++k) {
    const std::string id = "B" + std::to_string(order[static_cast<std::size_t>(k)]);
    if (k < n_src) {
      const double v = 23.0 + 4.0 * u(rng);
      c.resistive.source_voltages[id] = v;
      c.power.source_voltages[id] = v;
    } else if (u(rng) < 0.7) {
      c.resistive.loads[id] = flow::LoadSpec::resistance(2.0 + 48.0 * u(rng));
      c.power.loads[id] = flow::LoadSpec::power(2.0 + 28.0 * u(rng));
    }
  }
  return c;
}

inline Circuit to_circuit(const network::Network& net, const flow::FlowProblem& p) {
  Circuit c;
  c.n_buses = static_cast<int>(net.size());
  const auto res = network::branch_resistances(net, p.conductor_temp);
  for (std::size_t k = 0; k < res.size(); ++k) {
    const auto& b = net.branches()[k];
    c.edges.push_back({static_cast<int>(net.index_of(b.a)), static_cast<int>(net.index_of(b.b)), res[k]});
  }
  for (const auto& [bus, v] : p.source_voltages) c.sources[static_cast<int>(net.index_of(bus))] = v;
  for (const auto& [bus, l] : p.loads) {
    const int i = static_cast<int>(net.index_of(bus));
    if (l.kind == flow::LoadSpec::Kind::constant_resistance) c.resistive[i] = l.value;
    else c.const_power[i] = l.value;
  }
  return c;
}

inline CriterionResult criterion_flow_oracle(std::uint64_t seed, int cases) {
  return detail::timed(4, "power-flow oracle equivalence", [&] {
    CriterionResult r;
    std::mt19937_64 rng(seed);
    double worst_v = 0.0, worst_kcl = 0.0, worst_jac = 0.0;
    for (int k = 0; k < cases; ++k) {
      const RandomCase rc = random_case(rng);
      const auto sol = flow::newton_raphson_flow(rc.resistive, rc.net);
      const auto ref = oracle_linear_circuit(to_circuit(rc.net, rc.resistive));
      for (std::size_t i = 0; i < rc.net.size(); ++i)
        worst_v = std::max(worst_v, std::abs(sol.voltages.at(rc.net.buses()[i].id) - ref[i]) / std::abs(ref[i]));

      const auto sp = flow::newton_raphson_flow(rc.power, rc.net);
      worst_kcl = std::max(worst_kcl, sp.max_kcl_residual);

      // Analytic Jacobian against central differences at a perturbed point.
      const Eigen::MatrixXd g = network::conductance_matrix(rc.net, rc.power.conductor_temp);
      std::vector<flow::NodeSpec> spec(rc.net.size());
      std::vector<Eigen::Index> unknown;
      for (const auto& [bus, v] : rc.power.source_voltages) {
        spec[rc.net.index_of(bus)].is_source = true;
        spec[rc.net.index_of(bus)].v_source = v;
      }
      for (const auto& [bus, l] : rc.power.loads) spec[rc.net.index_of(bus)].p_load = l.value;
      for (const auto& [bus, l] : rc.resistive.loads) spec[rc.net.index_of(bus)].g_load = 1.0 / l.value;
      Eigen::VectorXd v(static_cast<Eigen::Index>(rc.net.size()));
      std::uniform_real_distribution<double> uv(22.0, 26.0);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = uv(rng);
        if (!spec[static_cast<std::size_t>(i)].is_source) unknown.push_back(i);
      }
      if (unknown.empty()) continue;
      const Eigen::MatrixXd j = flow::mismatch_jacobian(g, spec, v, unknown);
      const double h = 1e-5;
      double scale = j.cwiseAbs().maxCoeff(), err = 0.0;
      for (std::size_t b = 0; b < unknown.size(); ++b) {
        Eigen::VectorXd vp = v, vm = v;
        vp(unknown[b]) += h;
        vm(unknown[b]) -= h;
        const Eigen::VectorXd d = (flow::power_mismatch(g, spec, vp) - flow::power_mismatch(g, spec, vm)) / (2.0 * h);
        for (std::size_t a = 0; a < unknown.size(); ++a)
          err = std::max(err, std::abs(d(unknown[a]) - j(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))));
      }
      worst_jac = std::max(worst_jac, err / scale);
    }
    r.reports.push_back(make_report("NR vs dense solve, worst relative voltage error", 0.0, "dense linear solve",
                                    worst_v, 1e-9, true));
    r.reports.push_back(make_report("constant-power KCL residual, worst (A)", 0.0, "Kirchhoff current law",
                                    worst_kcl, 1e-9, true));
    r.reports.push_back(make_report("Jacobian vs central differences, worst relative", 0.0, "finite differences",
                                    worst_jac, 1e-5, true));
    r.pass = detail::all_pass(r.reports);
    r.detail = std::to_string(cases) + " networks: voltage rel err " + detail::fmt("%.2e", worst_v) + ", KCL " +
               detail::fmt("%.2e A", worst_kcl) + ", Jacobian " + detail::fmt("%.2e", worst_jac);
    return r;
  });
}

inline CriterionResult criterion_battery() {
  return detail::timed(5, "battery property suite", [] {
    CriterionResult r;
    const battery::BatteryParams p = battery::dcdn_bank();

    // Continuity of the transition band at both edges.
    double worst_edge = 0.0;
    for (double soc : {0.05, 0.2, 0.5, 0.8, 0.95}) {
      for (double temp : {5.0, 25.0, 40.0}) {
        battery::BatteryState s = battery::BatteryState::make(p, soc, soc * 0.6, 1.0, temp);
        const double d = p.i_delta;
        const double vt_hi = battery::transition_voltage(p, s, d);
        const double vt_lo = battery::transition_voltage(p, s, -d);
        const double vc = battery::charging_voltage(p, s, d).volts;
        const double vd = battery::discharging_voltage(p, s, -d).volts;
        worst_edge = std::max({worst_edge, std::abs(vt_hi - vc) / vc, std::abs(vt_lo - vd) / vd});
      }
    }
    r.reports.push_back(make_report("transition continuity at +-I_delta", 0.0, "piecewise definition", worst_edge,
                                    1e-12, true));

    double lo = 1.0, hi = 0.0;
    for (int a = 0; a < 100; ++a) {
      const double i = 1e-3 * std::pow(10.0, 4.5 * a / 99.0);  // 1 mA .. 31.6 A
      for (int b = 0; b < 100; ++b) {
        const double eta = battery::charge_efficiency(p, i, b / 99.0);
        lo = std::min(lo, eta);
        hi = std::max(hi, eta);
      }
    }
    const bool eta_ok = lo >= 0.0 && hi <= 1.0;
    r.reports.push_back(make_report("charge efficiency grid, out-of-range points", 0.0, "efficiency bounds",
                                    eta_ok ? 0.0 : 1.0, 0.0, true));

    const double c_nom = battery::capacity(p, p.nominal_current(), 25.0, 1.0);
    r.reports.push_back(make_report("C(I_nominal, 25 degC, SoH 1)", p.bank_nominal_capacity(), "capacity identity",
                                    c_nom, 1e-12, false));
    const double ratio = battery::capacity(p, 3.0, 25.0, 0.0) / battery::capacity(p, 3.0, 25.0, 1.0);
    r.reports.push_back(make_report("C(SoH 0) / C(SoH 1)", 0.25, "capacity identity", ratio, 1e-15, false));

    // Square wave, coarse step against the fine-step oracle.
    const double coarse = 60.0;
    std::vector<CurrentSegment> profile;
    for (int k = 0; k < 4; ++k) {
      profile.push_back({10.0, 1800.0});
      profile.push_back({-10.0, 1800.0});
    }
    FineStepBattery fb;
    fb.c_nominal_bank = p.bank_nominal_capacity();
    fb.n_rate_hours = p.n_rate_hours;
    fb.c10_bank = p.bank_c10();
    const double soc0 = 0.5;
    battery::BatteryState s = battery::BatteryState::make(p, soc0, sim::consistent_loe(p, soc0, 1.0), 1.0, 25.0);
    for (const auto& seg : profile)
      for (double t = 0.0; t < seg.duration_s - 1e-9; t += coarse) s = battery::step_state(p, s, seg.current, 25.0, coarse);
    const double fine = oracle_battery_fine_step(fb, profile, soc0, 25.0, 1.0, coarse);
    r.reports.push_back(make_report("square-wave SoC, coarse vs fine", fine, "fine-step coulomb count", s.soc, 1e-3,
                                    false));
    r.pass = detail::all_pass(r.reports);
    r.detail = "edge mismatch " + detail::fmt("%.1e", worst_edge) + ", eta in [" + detail::fmt("%.4f", lo) + ", " +
               detail::fmt("%.4f", hi) + "], C(I_n) " + detail::fmt("%.12g Ah", c_nom) + ", SoH-0 ratio " +
               detail::fmt("%.15g", ratio) + ", coarse/fine SoC drift " +
               detail::fmt("%.2e", std::abs(s.soc - fine) / fine);
    if (!r.pass) r.detail += "; " + detail::first_failure(r.reports);
    return r;
  });
}

inline CriterionResult criterion_controller() {
  return detail::timed(6, "controller suite", [] {
    CriterionResult r;
    const battery::BatteryParams bp = battery::dcdn_bank();

    // Power balance at every operating point of a grid of conditions.
    double worst_balance = 0.0;
    int points = 0;
    for (double g : {50.0, 200.0, 500.0, 800.0, 1050.0})
      for (double soc : {0.3, 0.7, 0.97})
        for (auto stage : {controller::Stage::bulk, controller::Stage::absorption, controller::Stage::float_})
          for (double i_out = -12.0; i_out <= 18.0; i_out += 1.5) {
            GssSpec spec = detail::standard_gss("G", "N1");
            GssState st;
            st.battery = battery::BatteryState::make(bp, soc, sim::consistent_loe(bp, soc, 1.0), 1.0, 25.0);
            st.ctrl.stage = stage;
            GssStep step(spec, st, {g, 25.0});
            const GssOperatingPoint op = step.evaluate(i_out);
            const double in = op.p_pv - op.losses.total();
            const double out = op.v_terminal * (op.i_bat + op.i_out);
            const double scale = std::max(op.p_pv, op.losses.total());
            worst_balance = std::max(worst_balance, std::abs(in - out) / scale);
            ++points;
          }
    r.reports.push_back(make_report("converter power balance, worst relative", 0.0, "energy conservation",
                                    worst_balance, 1e-6, true));

    // LVD hysteresis over voltage cycles.
    const controller::ControllerConfig cfg = controller::vrla_24();
    int bad_cycles = 0;
    controller::ControllerState cs;
    for (int cycle = 0; cycle < 5; ++cycle) {
      int toggles = 0;
      for (int k = 0; k < 2000; ++k) {
        const double v = 24.0 + 2.0 * std::cos(2.0 * M_PI * k / 2000.0);  // 26 V -> 22 V -> 26 V
        const auto next = controller::lvd_hysteresis(cfg, cs, v);
        toggles += next.load_connected != cs.load_connected;
        cs = next;
      }
      bad_cycles += toggles != 2;
    }
    r.reports.push_back(make_report("voltage cycles without exactly two LVD toggles", 0.0, "hysteresis definition",
                                    bad_cycles, 0.0, true));

    // Absorption is bounded by the timer while the setpoint stays held.
    controller::ControllerState sm;
    double absorbed = 0.0;
    bool floated = false;
    for (int k = 0; k < 4 * 3600; ++k) {
      sm = controller::step_stage(cfg, sm, 29.0, true, 1.0, true);
      if (sm.stage == controller::Stage::absorption) absorbed += 1.0;
      if (sm.stage == controller::Stage::float_) floated = true;
    }
    r.reports.push_back(make_report("time spent in absorption (s)", cfg.absorb_duration, "absorption timer",
                                    absorbed, 1e-9, true));

    // Efficiency bounds, with each loss constant switched on alone.
    double eta_max = 0.0;
    bool each_lossy = true;
    for (int which = 0; which < 5; ++which) {
      controller::LossConstants k = controller::LossConstants::lossless();
      k.f_sw = 50e3;
      switch (which) {
        case 0: k.r_ds_on = 2.5e-3; break;
        case 1: k.r_l = 3e-3; break;
        case 2: k.t_dead = 5e-9; break;
        case 3: k.t_s = 10e-9; break;
        case 4: k.p_auto = 5.0; break;
      }
      for (double v_pv : {30.0, 50.0, 70.0})
        for (double i_pv : {0.5, 4.0, 8.0}) {
          controller::ControllerConfig c = cfg;
          c.losses = k;
          const double duty = 26.0 / v_pv;
          const double i_o = controller::buck_output_current(c, v_pv, i_pv, 26.0, duty);
          const double eta = controller::conversion_efficiency(v_pv, i_pv, 26.0, i_o);
          eta_max = std::max(eta_max, eta);
          if (!(eta < 1.0)) each_lossy = false;
        }
    }
    r.reports.push_back(make_report("efficiency < 1 under each positive loss constant", 1.0, "loss model",
                                    each_lossy && eta_max <= 1.0 ? 1.0 : 0.0, 0.0, true));
    r.pass = detail::all_pass(r.reports) && floated;
    r.detail = std::to_string(points) + " operating points, balance " + detail::fmt("%.1e", worst_balance) +
               "; LVD 2 toggles/cycle; absorption " + detail::fmt("%.0f s", absorbed) + " then float; max eta " +
               detail::fmt("%.6f", eta_max);
    if (!r.pass) r.detail += "; " + detail::first_failure(r.reports);
    return r;
  });
}

inline CriterionResult criterion_full_day(const AcceptanceOptions& opt) {
  return detail::timed(7, "full-day desk-scale run", [&] {
    CriterionResult r;
    const auto path = opt.data_dir / "dcdn-day.scenario";
    sim::SimOptions so;
    so.record_traces = false;

    const sim::Scenario sc = io::load_scenario(path);
    const auto t0 = std::chrono::steady_clock::now();
    const sim::SimResult base = sim::run(sc, so);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& l = base.total;
    r.reports.push_back(make_report("wall time, dt = 1 s (s)", 60.0, "runtime budget", secs, 0.0, true));
    r.reports.back().pass = secs < 60.0;
    r.reports.push_back(make_report("loss residual vs accumulated losses", l.e_losses_independent,
                                    "independent I^2R + converter accumulation", l.e_losses, 0.01, false));

    std::string shift_detail;
    if (opt.dt_halving) {
      io::ScenarioOverrides ov;
      ov.dt = sc.dt / 2.0;
      const sim::SimResult half = sim::run(io::load_scenario(path, ov), so);
      const auto& h = half.total;
      double worst = 0.0;
      for (auto [name, a, b] : {std::tuple{"E_GFV", l.e_gfv, h.e_gfv}, std::tuple{"E_BC", l.e_bc, h.e_bc},
                                std::tuple{"E_BB", l.e_bb, h.e_bb}, std::tuple{"E_loss", l.e_losses, h.e_losses}}) {
        r.reports.push_back(make_report(std::string(name) + " at dt/2", a, "run at dt", b, 5e-3, false));
        worst = std::max(worst, r.reports.back().rel_error);
      }
      shift_detail = ", dt/2 shift " + detail::fmt("%.2e", worst);
    }

    // Ledger arithmetic on the published day totals; the printed efficiency is truncated.
    const sim::EnergyLedger pub = sim::ledger_from_energies(6.98, 6.08, 0.74);
    r.reports.push_back(make_report("published-day E_loss (kWh)", 0.16, "measured-day energy balance", pub.e_losses,
                                    1e-12, true));
    const double eta = pub.eta_supply.value_or(0.0);
    r.reports.push_back(make_report("published-day supply efficiency, truncated (%)", 97.36,
                                    "measured-day energy balance", std::floor(eta * 100.0) / 100.0, 1e-9, true));
    r.pass = detail::all_pass(r.reports) && base.nonconverged_steps == 0;
    r.detail = std::to_string(base.steps_run) + " steps in " + detail::fmt("%.2f s", secs) + ", E_GFV " +
               detail::fmt("%.3f", l.e_gfv) + " E_BC " + detail::fmt("%.3f", l.e_bc) + " E_BB " +
               detail::fmt("%.3f", l.e_bb) + " E_loss " + detail::fmt("%.4f kWh", l.e_losses) + ", closure " +
               detail::fmt("%.2e", std::abs(l.e_losses - l.e_losses_independent) / l.e_losses_independent) +
               shift_detail + ", published-day eta " + detail::fmt("%.4f %%", eta);
    if (base.nonconverged_steps) r.detail += ", " + std::to_string(base.nonconverged_steps) + " unconverged steps";
    if (!r.pass) r.detail += "; " + detail::first_failure(r.reports);
    return r;
  });
}

/// Night-time 12-bus grid with all three banks feeding every load; GSS3's
/// controller disconnects at v_desc_3.
inline sim::Scenario lvd_trip_scenario(double v_desc_3) {
  sim::Scenario sc;
  sc.network = network::dcdn_12bus();
  sc.start = parse_iso8601("2019-10-01T20:00:00Z");
  sc.end = sc.start + 2 * 3600;
  sc.dt = 1.0;
  sc.irradiance = detail::constant_series(sc.start, sc.end, 0.0);
  sc.ambient = detail::constant_series(sc.start, sc.end, 25.0);
  const double socs[3] = {0.9, 0.85, 0.5};
  const char* buses[3] = {"N1", "N6", "N7"};
  for (int k = 0; k < 3; ++k) {
    sim::GssSetup g;
    g.spec = detail::standard_gss("GSS" + std::to_string(k + 1), buses[k]);
    g.soc = socs[k];
    sc.gss.push_back(g);
  }
  sc.gss[2].spec.controller.v_desc = v_desc_3;
  sc.gss[2].spec.controller.v_rec = v_desc_3 + 2.0;
  const char* lb[3] = {"N2", "N3", "N11"};
  for (int k = 0; k < 3; ++k) {
    sim::LoadBankInstance l;
    l.id = "LB" + std::to_string(k + 1);
    l.bus = lb[k];
    l.spec.lamps = 5;
    l.spec.fans = k < 2 ? 1 : 0;
    sc.loads.push_back(l);
  }
  return sc;
}

/// Two banks at unequal state of charge on an unloaded grid at night.
inline sim::Scenario reverse_flow_scenario() {
  sim::Scenario sc;
  sc.network = network::dcdn_12bus();
  sc.start = parse_iso8601("2019-10-01T22:00:00Z");
  sc.end = sc.start + 2 * 3600;
  sc.irradiance = detail::constant_series(sc.start, sc.end, 0.0);
  sc.ambient = detail::constant_series(sc.start, sc.end, 25.0);
  sim::GssSetup hi, lo;
  hi.spec = detail::standard_gss("GSS1", "N1");
  hi.soc = 0.95;
  lo.spec = detail::standard_gss("GSS3", "N7");
  lo.soc = 0.25;
  sc.gss = {hi, lo};
  return sc;
}

/// GSS1 without a battery, GSS2 and GSS3 energizing the grid, midday sun.
inline sim::Scenario battery_absent_scenario() {
  sim::Scenario sc = lvd_trip_scenario(22.8);
  sc.start = parse_iso8601("2019-10-01T11:00:00Z");
  sc.end = sc.start + 1800;
  sc.irradiance = detail::constant_series(sc.start, sc.end, 800.0);
  sc.ambient = detail::constant_series(sc.start, sc.end, 30.0);
  sc.gss[0].spec.battery.reset();
  sc.gss[1].soc = 0.6;
  sc.gss[2].soc = 0.6;
  return sc;
}

struct LvdSignature {
  bool tripped = false;
  std::size_t step = 0;
  double i_out_tripped = 0.0;       // after the trip
  double i_bat_tripped = 0.0;
  double self_consumption_current = 0.0;
  bool survivors_increase = false;
  bool tripped_voltage_rises = false;
};

inline LvdSignature lvd_signature(const sim::SimResult& res, const sim::Scenario& sc, std::size_t tripped) {
  LvdSignature s;
  for (std::size_t k = 1; k < res.steps.size(); ++k) {
    const auto& a = res.steps[k - 1];
    const auto& b = res.steps[k];
    if (!(a.gss[tripped].load_connected && !b.gss[tripped].load_connected)) continue;
    s.tripped = true;
    s.step = k;
    s.i_out_tripped = b.gss[tripped].i_out;
    s.i_bat_tripped = b.gss[tripped].i_bat;
    s.self_consumption_current = sc.gss[tripped].spec.controller.losses.p_auto / b.gss[tripped].v_bat;
    s.survivors_increase = true;
    for (std::size_t g = 0; g < b.gss.size(); ++g)
      if (g != tripped && !(b.gss[g].i_out > a.gss[g].i_out)) s.survivors_increase = false;
    s.tripped_voltage_rises = b.gss[tripped].v_bat > a.gss[tripped].v_bat;
    break;
  }
  return s;
}

inline CriterionResult criterion_behaviour() {
  return detail::timed(8, "behavioural reproductions", [] {
    CriterionResult r;
    std::string detail_text;

    // LVD trip: A/B/C signature.
    {
      const sim::Scenario sc = lvd_trip_scenario(23.2);
      const sim::SimResult res = sim::run(sc);
      const LvdSignature s = lvd_signature(res, sc, 2);
      const bool ok = s.tripped && s.i_out_tripped == 0.0 &&
                      std::abs(s.i_bat_tripped) <= s.self_consumption_current + 1e-9 && s.survivors_increase &&
                      s.tripped_voltage_rises;
      r.reports.push_back(make_report("LVD trip signature (1 = observed)", 1.0, "load cut-out event A/B/C",
                                      ok ? 1.0 : 0.0, 0.0, true));
      detail_text += s.tripped ? "LVD trip at " + std::to_string(s.step) + " s: tripped i_out " +
                                     detail::fmt("%.3g A", s.i_out_tripped) + ", survivors " +
                                     (s.survivors_increase ? "increase" : "do not increase")
                               : std::string("LVD never tripped");
    }

    // Reverse power flow between unequal banks.
    {
      const sim::Scenario sc = reverse_flow_scenario();
      const sim::SimResult res = sim::run(sc);
      double e_out_hi = 0.0, e_bat_lo = 0.0;
      for (const auto& st : res.steps) {
        e_out_hi += st.gss[0].p_out * sc.dt / 3600.0;
        e_bat_lo += st.gss[1].p_bat * sc.dt / 3600.0;
      }
      const double dsoc = res.steps.back().gss[1].soc - sc.gss[1].soc;
      const bool ok = e_out_hi > 0.0 && e_bat_lo > 0.0 && dsoc > 0.0;
      r.reports.push_back(make_report("reverse flow high -> low SoC (1 = observed)", 1.0, "reverse flow test",
                                      ok ? 1.0 : 0.0, 0.0, true));
      detail_text += "; reverse flow " + detail::fmt("%.1f Wh", e_bat_lo) + " into the low bank";
    }

    // Battery-absent GSS injects into the energized grid.
    {
      const sim::Scenario sc = battery_absent_scenario();
      const sim::SimResult res = sim::run(sc);
      double e_inj = 0.0;
      bool every_step = true;
      for (const auto& st : res.steps) {
        e_inj += st.gss[0].p_out * sc.dt / 3600.0;
        if (!(st.gss[0].i_out > 0.0)) every_step = false;
      }
      r.reports.push_back(make_report("battery-absent injection (1 = observed)", 1.0, "operation without storage",
                                      every_step && e_inj > 0.0 ? 1.0 : 0.0, 0.0, true));
      detail_text += "; battery-absent GSS injected " + detail::fmt("%.1f Wh", e_inj);
    }
    r.pass = detail::all_pass(r.reports);
    r.detail = detail_text;
    return r;
  });
}

inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt = {}) {
  return {criterion_conductor_table(), criterion_pv_fidelity(), criterion_sizing(),
          criterion_flow_oracle(opt.seed, opt.random_networks), criterion_battery(), criterion_controller(),
          criterion_full_day(opt), criterion_behaviour()};
}

inline std::string format_line(const CriterionResult& c) {
  char head[96];
  std::snprintf(head, sizeof head, "criterion %d %s  %s (%.2f s): ", c.id, c.pass ? "PASS" : "FAIL", c.title.c_str(),
                c.seconds);
  return head + c.detail;
}

inline nlohmann::json to_json(const std::vector<CriterionResult>& results) {
  nlohmann::json j;
  j["pass"] = true;
  for (const auto& c : results) {
    j["criteria"].push_back({{"id", c.id},
                             {"title", c.title},
                             {"pass", c.pass},
                             {"detail", c.detail},
                             {"seconds", c.seconds},
                             {"cases", to_json(c.reports)}});
    if (!c.pass) j["pass"] = false;
  }
  return j;
}

}  // namespace nanogrid::validation
