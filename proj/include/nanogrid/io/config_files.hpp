#pragma once

// YAML readers for network, flow-spec and scenario files. Paths inside a
// file are resolved relative to that file's directory.

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "nanogrid/battery_model.hpp"
#include "nanogrid/charge_controller.hpp"
#include "nanogrid/network.hpp"
#include "nanogrid/powerflow.hpp"
#include "nanogrid/pv_model.hpp"
#include "nanogrid/simulation.hpp"
#include "nanogrid/system_config.hpp"
#include "nanogrid/timeseries.hpp"

namespace nanogrid::io {

inline constexpr int kFormatVersion = 1;

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError(p.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    throw ParseError(source_, n.IsDefined() ? n.Mark().line + 1 : 0, msg);
  }

  YAML::Node load(const std::string& text) const {
    try {
      return YAML::Load(text);
    } catch (const YAML::Exception& e) {
      throw ParseError(source_, e.mark.line + 1, e.msg);
    }
  }

  void keys(const YAML::Node& n, std::initializer_list<const char*> allowed, const std::string& where) const {
    if (!n.IsMap()) fail(n, where + ": expected a mapping");
    for (const auto& kv : n) {
      const auto k = kv.first.as<std::string>();
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) fail(kv.first, where + ": unknown key '" + k + "'");
    }
  }

  template <class T>
  T get(const YAML::Node& n, const std::string& what) const {
    if (!n.IsDefined() || n.IsNull()) fail(n, "missing " + what);
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "bad value for " + what);
    }
  }

  template <class T>
  T get(const YAML::Node& parent, const char* key, T fallback) const {
    const YAML::Node n = parent[key];
    if (!n.IsDefined() || n.IsNull()) return fallback;
    return get<T>(n, key);
  }

  void version(const YAML::Node& root) const {
    if (!root.IsMap()) throw ParseError(source_, 1, "expected a mapping at top level");
    const YAML::Node v = root["version"];
    if (!v.IsDefined()) throw ParseError(source_, 1, "missing 'version' field");
    if (get<int>(v, "version") != kFormatVersion) fail(v, "unsupported version (expected 1)");
  }

 private:
  std::string source_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base_file, const std::string& rel) {
  const std::filesystem::path p(rel);
  return p.is_absolute() ? p : base_file.parent_path() / p;
}

}  // namespace detail

inline network::Network parse_network(const std::string& text, const std::string& source) {
  detail::Reader r(source);
  const YAML::Node root = r.load(text);
  r.version(root);
  r.keys(root, {"version", "name", "conductor", "buses", "branches", "attachments"}, "network");
  network::Network net;
  if (const YAML::Node c = root["conductor"]; c.IsDefined()) {
    r.keys(c, {"r_per_km", "alpha_r", "ref_temp"}, "conductor");
    net.conductor.r_per_km = r.get(c, "r_per_km", net.conductor.r_per_km);
    net.conductor.alpha_r = r.get(c, "alpha_r", net.conductor.alpha_r);
    net.conductor.ref_temp = r.get(c, "ref_temp", net.conductor.ref_temp);
  }
  const YAML::Node buses = root["buses"];
  if (!buses.IsSequence()) r.fail(root, "'buses' must be a list");
  for (const auto& b : buses) {
    r.keys(b, {"id", "kind"}, "bus");
    const auto kind = r.get<std::string>(b, "kind", "junction");
    network::BusKind k = network::BusKind::junction;
    if (kind == "source") k = network::BusKind::source;
    else if (kind == "load") k = network::BusKind::load;
    else if (kind != "junction") r.fail(b["kind"], "bus kind must be source, load or junction");
    try {
      net.add_bus(r.get<std::string>(b["id"], "bus id"), k);
    } catch (const InvalidInput& e) {
      r.fail(b, e.what());
    }
  }
  const YAML::Node branches = root["branches"];
  if (!branches.IsSequence()) r.fail(root, "'branches' must be a list");
  for (const auto& br : branches) {
    r.keys(br, {"from", "to", "length_m"}, "branch");
    try {
      net.add_branch(r.get<std::string>(br["from"], "from"), r.get<std::string>(br["to"], "to"),
                     r.get<double>(br["length_m"], "length_m"));
    } catch (const InvalidInput& e) {
      r.fail(br, e.what());
    }
  }
  if (const YAML::Node a = root["attachments"]; a.IsDefined()) {
    if (!a.IsMap()) r.fail(a, "'attachments' must be a mapping");
    for (const auto& kv : a) {
      try {
        net.attach(kv.first.as<std::string>(), kv.second.as<std::string>());
      } catch (const InvalidInput& e) {
        r.fail(kv.second, e.what());
      }
    }
  }
  const auto lost = net.unreachable_buses();
  if (!lost.empty()) throw ParseError(source, 0, "bus '" + lost.front() + "' is disconnected from the network");
  return net;
}

inline network::Network load_network(const std::filesystem::path& p) { return parse_network(read_text(p), p.string()); }

namespace detail {

// Load bank keys shared by flow specs and scenarios.
inline config::LoadBankSpec parse_bank(const Reader& r, const YAML::Node& n) {
  config::LoadBankSpec s;
  s.lamps = r.get(n, "lamps", 0);
  s.lamp_v = r.get(n, "lamp_v", s.lamp_v);
  s.lamp_w = r.get(n, "lamp_w", s.lamp_w);
  s.fans = r.get(n, "fans", 0);
  s.fan_r = r.get(n, "fan_ohm", s.fan_r);
  if (const YAML::Node c = n["columns"]; c.IsDefined()) s.columns = r.get<std::vector<int>>(c, "columns");
  try {
    s.validate();
  } catch (const InvalidInput& e) {
    r.fail(n, e.what());
  }
  return s;
}

}  // namespace detail

/// Flow spec: fixed source voltages and one load per bus, given as
/// power_w, resistance_ohm, or a lamp/fan bank (all devices on).
inline flow::FlowProblem parse_flow_spec(const std::string& text, const std::string& source) {
  detail::Reader r(source);
  const YAML::Node root = r.load(text);
  r.version(root);
  r.keys(root, {"version", "conductor_temp", "sources", "loads"}, "flow spec");
  flow::FlowProblem p;
  p.conductor_temp = r.get(root, "conductor_temp", p.conductor_temp);
  const YAML::Node src = root["sources"];
  if (!src.IsMap()) r.fail(root, "'sources' must map bus ids to volts");
  for (const auto& kv : src) p.source_voltages[kv.first.as<std::string>()] = r.get<double>(kv.second, "source voltage");
  if (const YAML::Node loads = root["loads"]; loads.IsDefined() && !loads.IsNull()) {
    if (!loads.IsMap()) r.fail(loads, "'loads' must map bus ids to load specs");
    for (const auto& kv : loads) {
      const auto bus = kv.first.as<std::string>();
      const YAML::Node n = kv.second;
      r.keys(n, {"power_w", "resistance_ohm", "lamps", "lamp_v", "lamp_w", "fans", "fan_ohm"}, "load " + bus);
      const int kinds = n["power_w"].IsDefined() + n["resistance_ohm"].IsDefined() +
                        (n["lamps"].IsDefined() || n["fans"].IsDefined());
      if (kinds != 1) r.fail(n, "load " + bus + ": give exactly one of power_w, resistance_ohm or lamps/fans");
      if (n["power_w"].IsDefined()) {
        p.loads[bus] = flow::LoadSpec::power(r.get<double>(n["power_w"], "power_w"));
      } else if (n["resistance_ohm"].IsDefined()) {
        p.loads[bus] = flow::LoadSpec::resistance(r.get<double>(n["resistance_ohm"], "resistance_ohm"));
      } else {
        const auto bank = detail::parse_bank(r, n);
        const auto req = config::bank_equivalent_resistance(bank, config::all_on(bank));
        if (req) p.loads[bus] = flow::LoadSpec::resistance(*req);
      }
    }
  }
  return p;
}

inline flow::FlowProblem load_flow_spec(const std::filesystem::path& p) {
  return parse_flow_spec(read_text(p), p.string());
}

inline TimeSeries load_timeseries(const std::filesystem::path& p) {
  return parse_timeseries_csv(read_text(p), p.string());
}

inline config::LoadSchedule load_schedule(const std::filesystem::path& p) {
  return config::parse_load_schedule(read_text(p), p.string());
}

namespace detail {

inline pv::PvModuleParams builtin_module(const Reader& r, const YAML::Node& n, const std::string& name) {
  if (name == "yl245p-29b") return pv::yl245p_29b_datasheet();
  r.fail(n, "unknown PV module '" + name + "'");
}

inline pv::PvArrayConfig parse_pv(const Reader& r, const YAML::Node& n) {
  r.keys(n, {"module", "modules_in_series", "p_mp_stc", "v_mp_stc", "i_mp_stc", "v_oc_stc", "i_sc_stc", "noct",
             "alpha_sc", "beta_mp", "n_cells_series", "ideality", "r_s", "r_p", "bandgap_ev"},
         "pv");
  pv::PvModuleParams m = builtin_module(r, n["module"], r.get<std::string>(n, "module", "yl245p-29b"));
  m.p_mp_stc = r.get(n, "p_mp_stc", m.p_mp_stc);
  m.v_mp_stc = r.get(n, "v_mp_stc", m.v_mp_stc);
  m.i_mp_stc = r.get(n, "i_mp_stc", m.i_mp_stc);
  m.v_oc_stc = r.get(n, "v_oc_stc", m.v_oc_stc);
  m.i_sc_stc = r.get(n, "i_sc_stc", m.i_sc_stc);
  m.noct = r.get(n, "noct", m.noct);
  m.alpha_sc = r.get(n, "alpha_sc", m.alpha_sc);
  m.beta_mp = r.get(n, "beta_mp", m.beta_mp);
  m.n_cells_series = r.get(n, "n_cells_series", m.n_cells_series);
  m.ideality = r.get(n, "ideality", m.ideality);
  m.bandgap_ev = r.get(n, "bandgap_ev", m.bandgap_ev);
  try {
    if (n["r_s"].IsDefined() != n["r_p"].IsDefined()) r.fail(n, "pv: give both r_s and r_p, or neither");
    if (n["r_s"].IsDefined()) {
      m.r_s = r.get<double>(n["r_s"], "r_s");
      m.r_p = r.get<double>(n["r_p"], "r_p");
    } else {
      m = pv::with_extracted_resistances(m);
    }
    pv::PvArrayConfig a{m, r.get(n, "modules_in_series", 1)};
    a.validate();
    return a;
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    r.fail(n, e.what());
  }
}

inline void parse_constants(const Reader& r, const YAML::Node& n, battery::LeadAcidConstants& k) {
  const std::map<std::string, double*> fields{
      {"c_t_coef", &k.c_t_coef}, {"alpha_c", &k.alpha_c},   {"beta_c", &k.beta_c},       {"a_cap", &k.a_cap},
      {"b_cap", &k.b_cap},       {"v_bodc", &k.v_bodc},     {"k_bodc", &k.k_bodc},       {"p1_dc", &k.p1_dc},
      {"p2_dc", &k.p2_dc},       {"p3_dc", &k.p3_dc},       {"p4_dc", &k.p4_dc},         {"p5_dc", &k.p5_dc},
      {"a_cmt", &k.a_cmt},       {"b_cmt", &k.b_cmt},       {"v_boc", &k.v_boc},         {"k_boc", &k.k_boc},
      {"p1_c", &k.p1_c},         {"p2_c", &k.p2_c},         {"p3_c", &k.p3_c},           {"p4_c", &k.p4_c},
      {"p5_c", &k.p5_c},         {"a_gas", &k.a_gas},       {"b_gas", &k.b_gas},         {"alpha_gas", &k.alpha_gas},
      {"a_fonsc", &k.a_fonsc},   {"b_fonsc", &k.b_fonsc},   {"alpha_fc", &k.alpha_fc},   {"alpha_rdc", &k.alpha_rdc},
      {"alpha_rc", &k.alpha_rc}, {"a_tau_sc", &k.a_tau_sc}, {"b_tau_sc", &k.b_tau_sc},   {"c_tau_sc", &k.c_tau_sc}};
  if (!n.IsMap()) r.fail(n, "battery constants: expected a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    auto it = fields.find(key);
    if (it == fields.end()) r.fail(kv.first, "battery constants: unknown key '" + key + "'");
    *it->second = r.get<double>(kv.second, key);
  }
}

inline void parse_battery(const Reader& r, const YAML::Node& n, sim::GssSetup& g) {
  r.keys(n, {"c_nominal_ah", "n_rate_hours", "c10_ah", "cells_series", "strings_parallel", "i_delta", "soc", "loe",
             "soh", "constants", "alpha_t", "beta_t"},
         "battery");
  battery::BatteryParams p;
  p.c_nominal = r.get(n, "c_nominal_ah", 66.0);
  p.n_rate_hours = r.get(n, "n_rate_hours", 20.0);
  p.n_cells_series = r.get(n, "cells_series", 12);
  p.n_strings_parallel = r.get(n, "strings_parallel", 1);
  p.i_delta = r.get(n, "i_delta", p.i_delta);
  p.aging.alpha_t = r.get(n, "alpha_t", 0.0);
  p.aging.beta_t = r.get(n, "beta_t", 0.0);
  if (const YAML::Node c = n["constants"]; c.IsDefined()) parse_constants(r, c, p.k);
  try {
    p.c10 = n["c10_ah"].IsDefined() ? r.get<double>(n["c10_ah"], "c10_ah")
                                    : battery::c10_from_nominal(p.c_nominal, p.n_rate_hours, p.k);
    p.validate();
  } catch (const Error& e) {
    r.fail(n, e.what());
  }
  g.spec.battery = p;
  g.soc = r.get(n, "soc", 1.0);
  g.soh = r.get(n, "soh", 1.0);
  if (n["loe"].IsDefined()) g.loe = r.get<double>(n["loe"], "loe");
  auto frac = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!frac(g.soc) || !frac(g.soh) || !(std::isnan(g.loe) || frac(g.loe)))
    r.fail(n, "battery: soc, loe and soh must lie in [0, 1]");
}

inline controller::ControllerConfig parse_controller(const Reader& r, const YAML::Node& n) {
  if (!n.IsDefined()) return {};
  r.keys(n, {"preset", "v_abs", "v_flt", "absorb_duration_s", "v_desc", "v_rec", "i_charge_max", "i_load_max",
             "v_pv_max_operating", "v_pv_max_absolute", "r_ds_on", "r_l", "t_dead", "t_s", "t_d", "f_sw", "p_auto",
             "lossless"},
         "controller");
  controller::ControllerConfig c;
  try {
    c = controller::preset(r.get<std::string>(n, "preset", "vrla-24"));
  } catch (const InvalidInput& e) {
    r.fail(n["preset"], e.what());
  }
  c.v_abs = r.get(n, "v_abs", c.v_abs);
  c.v_flt = r.get(n, "v_flt", c.v_flt);
  c.absorb_duration = r.get(n, "absorb_duration_s", c.absorb_duration);
  c.v_desc = r.get(n, "v_desc", c.v_desc);
  c.v_rec = r.get(n, "v_rec", c.v_rec);
  c.i_charge_max = r.get(n, "i_charge_max", c.i_charge_max);
  c.i_load_max = r.get(n, "i_load_max", c.i_load_max);
  c.v_pv_max_operating = r.get(n, "v_pv_max_operating", c.v_pv_max_operating);
  c.v_pv_max_absolute = r.get(n, "v_pv_max_absolute", c.v_pv_max_absolute);
  if (r.get(n, "lossless", false)) c.losses = controller::LossConstants::lossless();
  auto& l = c.losses;
  l.r_ds_on = r.get(n, "r_ds_on", l.r_ds_on);
  l.r_l = r.get(n, "r_l", l.r_l);
  l.t_dead = r.get(n, "t_dead", l.t_dead);
  l.t_s = r.get(n, "t_s", l.t_s);
  l.t_d = r.get(n, "t_d", l.t_d);
  l.f_sw = r.get(n, "f_sw", l.f_sw);
  l.p_auto = r.get(n, "p_auto", l.p_auto);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    r.fail(n, e.what());
  }
  return c;
}

}  // namespace detail

struct ScenarioOverrides {
  std::optional<double> dt;
  std::optional<Seconds> from;
  std::optional<Seconds> to;
};

/// Reads a scenario and every file it references.
inline sim::Scenario load_scenario(const std::filesystem::path& path, const ScenarioOverrides& ov = {}) {
  detail::Reader r(path.string());
  const YAML::Node root = r.load(read_text(path));
  r.version(root);
  r.keys(root, {"version", "name", "network", "window", "conductor_temp", "irradiance", "ambient_temp", "gss", "loads"},
         "scenario");
  sim::Scenario sc;
  sc.network = load_network(detail::resolve(path, r.get<std::string>(root["network"], "network")));

  const YAML::Node win = root["window"];
  r.keys(win, {"start", "end", "dt_s"}, "window");
  try {
    sc.start = parse_iso8601(r.get<std::string>(win["start"], "window start"));
    sc.end = parse_iso8601(r.get<std::string>(win["end"], "window end"));
  } catch (const InvalidInput& e) {
    r.fail(win, e.what());
  }
  sc.dt = r.get(win, "dt_s", 1.0);
  if (ov.dt) sc.dt = *ov.dt;
  if (ov.from) sc.start = *ov.from;
  if (ov.to) sc.end = *ov.to;
  if (!(sc.dt > 0.0)) r.fail(win, "dt must be positive");
  if (sc.end < sc.start) r.fail(win, "window end precedes start");
  sc.conductor_temp = r.get(root, "conductor_temp", sc.conductor_temp);

  sc.irradiance = load_timeseries(detail::resolve(path, r.get<std::string>(root["irradiance"], "irradiance")));
  sc.ambient = load_timeseries(detail::resolve(path, r.get<std::string>(root["ambient_temp"], "ambient_temp")));

  const YAML::Node gss = root["gss"];
  if (!gss.IsSequence()) r.fail(root, "'gss' must be a list");
  for (const auto& g : gss) {
    r.keys(g, {"id", "bus", "pv", "battery", "controller"}, "gss");
    sim::GssSetup s;
    s.spec.id = r.get<std::string>(g["id"], "gss id");
    s.spec.bus = g["bus"].IsDefined() ? r.get<std::string>(g["bus"], "bus") : "";
    if (s.spec.bus.empty()) {
      const auto& att = sc.network.attachment();
      auto it = att.find(s.spec.id);
      if (it == att.end()) r.fail(g, "gss " + s.spec.id + ": no bus given and no attachment in the network");
      s.spec.bus = it->second;
    }
    if (!sc.network.has_bus(s.spec.bus)) r.fail(g, "gss " + s.spec.id + ": unknown bus '" + s.spec.bus + "'");
    s.spec.pv = detail::parse_pv(r, g["pv"]);
    const YAML::Node b = g["battery"];
    if (b.IsDefined() && !(b.IsScalar() && b.as<std::string>() == "none")) detail::parse_battery(r, b, s);
    s.spec.controller = detail::parse_controller(r, g["controller"]);
    sc.gss.push_back(std::move(s));
  }

  std::map<std::string, std::shared_ptr<const config::LoadSchedule>> schedules;
  if (const YAML::Node loads = root["loads"]; loads.IsDefined()) {
    if (!loads.IsSequence()) r.fail(loads, "'loads' must be a list");
    for (const auto& l : loads) {
      r.keys(l, {"id", "bus", "lamps", "lamp_v", "lamp_w", "fans", "fan_ohm", "columns", "schedule"}, "load bank");
      sim::LoadBankInstance lb;
      lb.id = r.get<std::string>(l["id"], "load id");
      lb.bus = l["bus"].IsDefined() ? r.get<std::string>(l["bus"], "bus") : "";
      if (lb.bus.empty()) {
        auto it = sc.network.attachment().find(lb.id);
        if (it == sc.network.attachment().end()) r.fail(l, "load " + lb.id + ": no bus given and no attachment");
        lb.bus = it->second;
      }
      if (!sc.network.has_bus(lb.bus)) r.fail(l, "load " + lb.id + ": unknown bus '" + lb.bus + "'");
      lb.spec = detail::parse_bank(r, l);
      if (l["schedule"].IsDefined()) {
        const auto p = detail::resolve(path, r.get<std::string>(l["schedule"], "schedule")).lexically_normal();
        auto& slot = schedules[p.string()];
        if (!slot) slot = std::make_shared<const config::LoadSchedule>(load_schedule(p));
        lb.schedule = slot;
        for (int k = 0; k < lb.spec.device_count(); ++k) {
          const int col = lb.spec.columns.empty() ? k : lb.spec.columns[static_cast<std::size_t>(k)];
          if (static_cast<std::size_t>(col) >= slot->columns())
            r.fail(l, "load " + lb.id + ": schedule has no column " + std::to_string(col));
        }
      }
      sc.loads.push_back(std::move(lb));
    }
  }
  try {
    sc.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return sc;
}

}  // namespace nanogrid::io
