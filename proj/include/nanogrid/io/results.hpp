#pragma once

// Output writers: per-step trace CSV, text summary, columnar plot data and
// the JSON load-flow solution.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "nanogrid/network.hpp"
#include "nanogrid/powerflow.hpp"
#include "nanogrid/simulation.hpp"
#include "nanogrid/timeseries.hpp"

namespace nanogrid::io {

inline std::string num(double x, int digits = 9) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

/// Streams traces.csv. Columns: timing and weather, then per GSS, per load
/// bank and per branch blocks, then the solver flag. New columns are only
/// ever appended.
class TraceCsvWriter {
 public:
  TraceCsvWriter(std::ostream& out, std::vector<std::string> gss, std::vector<std::string> loads,
                 std::vector<std::string> branches)
      : out_(out), gss_(std::move(gss)), loads_(std::move(loads)), branches_(std::move(branches)) {}

  void header() {
    out_ << "time,t_s,irradiance_w_m2,ambient_c";
    for (const auto& g : gss_)
      for (const char* c : {"v_bat", "i_bat", "i_out", "v_pv", "i_pv", "p_pv", "p_loss", "soc", "loe", "soh", "stage",
                            "load_connected", "region"})
        out_ << ',' << g << '.' << c;
    for (const auto& l : loads_)
      for (const char* c : {"v", "i", "p"}) out_ << ',' << l << '.' << c;
    for (const auto& b : branches_) out_ << ",i_" << b;
    out_ << ",p_lines,converged\n";
  }

  void row(const sim::StepRecord& r) {
    out_ << format_iso8601(r.time) << ',' << num(r.t) << ',' << num(r.irradiance) << ',' << num(r.ambient);
    for (const auto& g : r.gss) {
      out_ << ',' << num(g.v_bat) << ',' << num(g.i_bat) << ',' << num(g.i_out) << ',' << num(g.v_pv) << ','
           << num(g.i_pv) << ',' << num(g.p_pv) << ',' << num(g.p_loss) << ',' << num(g.soc) << ',' << num(g.loe)
           << ',' << num(g.soh) << ',' << controller::to_string(g.stage) << ',' << (g.load_connected ? 1 : 0) << ','
           << battery::to_string(g.region);
    }
    for (const auto& l : r.loads) out_ << ',' << num(l.v) << ',' << num(l.i) << ',' << num(l.p);
    for (double i : r.branch_currents) out_ << ',' << num(i);
    out_ << ',' << num(r.p_lines) << ',' << (r.converged ? 1 : 0) << '\n';
  }

 private:
  std::ostream& out_;
  std::vector<std::string> gss_, loads_, branches_;
};

inline void write_ledger(std::ostream& out, const sim::EnergyLedger& l, const std::vector<std::string>& gss) {
  out << "  E_GFV (PV generation)      " << num(l.e_gfv, 6) << " kWh\n";
  out << "  E_BC  (load consumption)   " << num(l.e_bc, 6) << " kWh\n";
  out << "  E_BB  (net battery energy) " << num(l.e_bb, 6) << " kWh\n";
  out << "  E_loss (balance residual)  " << num(l.e_losses, 6) << " kWh\n";
  out << "  E_loss (lines + converters) " << num(l.e_losses_independent, 6) << " kWh\n";
  out << "  supply efficiency          " << (l.eta_supply ? num(*l.eta_supply, 6) + " %" : std::string("n/a")) << '\n';
  for (std::size_t k = 0; k < gss.size(); ++k)
    out << "  " << gss[k] << ": E_GFV " << num(l.e_gfv_per_gss[k], 6) << " kWh, E_BB " << num(l.e_bb_per_gss[k], 6)
        << " kWh, yield " << num(l.yields[k], 6) << " kWh/kWp\n";
}

inline void write_summary(std::ostream& out, const sim::SimResult& r, const sim::Scenario& sc) {
  out << "window " << format_iso8601(sc.start) << " .. " << format_iso8601(sc.end) << ", dt " << num(sc.dt) << " s, "
      << r.steps_run << " steps";
  if (r.nonconverged_steps) out << ", " << r.nonconverged_steps << " steps without inner-loop convergence";
  out << "\n\n";
  for (const auto& d : r.days) {
    out << "day " << format_iso8601(d.day_start).substr(0, 10) << '\n';
    write_ledger(out, d.ledger, r.gss_ids);
    out << '\n';
  }
  if (r.steps_run > 0) {
    out << "whole window\n";
    write_ledger(out, r.total, r.gss_ids);
    out << "\nbattery voltage range\n";
    for (std::size_t k = 0; k < r.gss_ids.size(); ++k)
      out << "  " << r.gss_ids[k] << ": " << num(r.v_bat_min[k], 6) << " .. " << num(r.v_bat_max[k], 6) << " V\n";
  }
  out << "\nevents\n";
  for (const auto& e : r.events) out << "  " << format_iso8601(e.time) << ' ' << e.device << ": " << e.what << '\n';
  if (r.events.empty()) out << "  none\n";
}

/// Columnar plot files, one per device plus the daily ledger.
class PlotDataWriter {
 public:
  PlotDataWriter(const std::filesystem::path& dir, const std::vector<std::string>& gss,
                 const std::vector<std::string>& loads) {
    std::filesystem::create_directories(dir);
    for (const auto& g : gss) {
      gss_.emplace_back(dir / (g + ".csv"));
      gss_.back() << "t_h,v_bat,i_bat,p_pv,p_bat,soc\n";
    }
    for (const auto& l : loads) {
      loads_.emplace_back(dir / (l + ".csv"));
      loads_.back() << "t_h,v,i,p\n";
    }
  }

  void row(const sim::StepRecord& r) {
    const std::string t = num(r.t / 3600.0);
    for (std::size_t k = 0; k < gss_.size(); ++k) {
      const auto& g = r.gss[k];
      gss_[k] << t << ',' << num(g.v_bat) << ',' << num(g.i_bat) << ',' << num(g.p_pv) << ',' << num(g.p_bat) << ','
              << num(g.soc) << '\n';
    }
    for (std::size_t k = 0; k < loads_.size(); ++k) {
      const auto& l = r.loads[k];
      loads_[k] << t << ',' << num(l.v) << ',' << num(l.i) << ',' << num(l.p) << '\n';
    }
  }

  static void write_ledger_csv(const std::filesystem::path& dir, const sim::SimResult& r) {
    std::ofstream out(dir / "ledger.csv");
    out << "day,e_gfv_kwh,e_bc_kwh,e_bb_kwh,e_losses_kwh,e_losses_independent_kwh,eta_supply_pct\n";
    for (const auto& d : r.days) {
      const auto& l = d.ledger;
      out << format_iso8601(d.day_start).substr(0, 10) << ',' << num(l.e_gfv) << ',' << num(l.e_bc) << ','
          << num(l.e_bb) << ',' << num(l.e_losses) << ',' << num(l.e_losses_independent) << ','
          << (l.eta_supply ? num(*l.eta_supply) : std::string()) << '\n';
    }
  }

 private:
  std::vector<std::ofstream> gss_, loads_;
};

inline nlohmann::json flow_solution_json(const network::Network& net, const flow::FlowSolution& s) {
  nlohmann::json j;
  j["converged"] = s.converged;
  j["iterations"] = s.iterations;
  j["max_mismatch_w"] = s.max_mismatch;
  j["max_kcl_residual_a"] = s.max_kcl_residual;
  for (const auto& b : net.buses()) {
    j["buses"].push_back({{"id", b.id},
                          {"kind", std::string(network::to_string(b.kind))},
                          {"voltage_v", s.voltages.at(b.id)},
                          {"injection_w", s.bus_injections.at(b.id)}});
  }
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const auto& br = net.branches()[k];
    j["branches"].push_back({{"from", br.a}, {"to", br.b}, {"length_m", br.length_m}, {"current_a", s.branch_currents[k]}});
  }
  for (const auto& [bus, i] : s.source_currents) j["sources"][bus] = i;
  return j;
}

}  // namespace nanogrid::io
