#pragma once

// Reference solvers used to cross-check the production models. They are
// written from the formulas directly and share no code with the library:
// a dense Gaussian-elimination circuit solver, a damped fixed-point solver
// for constant-power loads, a fine-step coulomb counter and a brute-force
// PV sweep.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace nanogrid::validation {

struct OracleReport {
  std::string case_id;
  double reference = 0.0;
  std::string provenance;  // where the reference value comes from
  double computed = 0.0;
  double rel_error = 0.0;
  double abs_error = 0.0;
  double tolerance = 0.0;
  bool absolute = false;  // tolerance applies to abs_error
  bool pass = false;
};

inline OracleReport make_report(std::string id, double reference, std::string provenance, double computed,
                                double tolerance, bool absolute) {
  if (provenance.empty()) throw std::invalid_argument("oracle report '" + id + "' lacks a provenance tag");
  OracleReport r{std::move(id), reference, std::move(provenance), computed, 0.0, 0.0, tolerance, absolute, false};
  r.abs_error = std::abs(computed - reference);
  r.rel_error = reference != 0.0 ? r.abs_error / std::abs(reference) : r.abs_error;
  r.pass = (absolute ? r.abs_error : r.rel_error) <= tolerance;
  return r;
}

inline nlohmann::json to_json(const std::vector<OracleReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports)
    j.push_back({{"case", r.case_id},
                 {"reference", r.reference},
                 {"provenance", r.provenance},
                 {"computed", r.computed},
                 {"rel_error", r.rel_error},
                 {"abs_error", r.abs_error},
                 {"tolerance", r.tolerance},
                 {"tolerance_kind", r.absolute ? "absolute" : "relative"},
                 {"pass", r.pass}});
  return j;
}

/// Resistive circuit description for the oracles.
struct Circuit {
  int n_buses = 0;
  struct Edge {
    int a, b;
    double r;
  };
  std::vector<Edge> edges;
  std::map<int, double> sources;       // bus -> volts
  std::map<int, double> resistive;     // bus -> ohms to ground
  std::map<int, double> const_power;   // bus -> watts drawn (negative injects)
};

namespace detail {

// Solves A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (std::abs(a[p][c]) < 1e-300) throw std::runtime_error("oracle: singular circuit");
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

// Node voltages with extra current drawn at each bus (amperes, to ground).
inline std::vector<double> linear_solve(const Circuit& c, const std::vector<double>& draw) {
  const int n = c.n_buses;
  std::vector<int> slot(static_cast<std::size_t>(n), -1);
  int m = 0;
  for (int i = 0; i < n; ++i)
    if (!c.sources.count(i)) slot[static_cast<std::size_t>(i)] = m++;
  std::vector<std::vector<double>> a(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m), 0.0));
  std::vector<double> b(static_cast<std::size_t>(m), 0.0);
  auto stamp = [&](int i, int j, double g) {
    // Conductance g between i and j; j < 0 is ground.
    const int si = slot[static_cast<std::size_t>(i)];
    if (si < 0) return;
    a[static_cast<std::size_t>(si)][static_cast<std::size_t>(si)] += g;
    if (j < 0) return;
    const int sj = slot[static_cast<std::size_t>(j)];
    if (sj >= 0) a[static_cast<std::size_t>(si)][static_cast<std::size_t>(sj)] -= g;
    else b[static_cast<std::size_t>(si)] += g * c.sources.at(j);
  };
  for (const auto& e : c.edges) {
    stamp(e.a, e.b, 1.0 / e.r);
    stamp(e.b, e.a, 1.0 / e.r);
  }
  for (const auto& [bus, r] : c.resistive) stamp(bus, -1, 1.0 / r);
  for (int i = 0; i < n; ++i)
    if (slot[static_cast<std::size_t>(i)] >= 0) b[static_cast<std::size_t>(slot[static_cast<std::size_t>(i)])] -= draw[static_cast<std::size_t>(i)];
  const auto x = m > 0 ? gauss_solve(a, b) : std::vector<double>{};
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    v[static_cast<std::size_t>(i)] = slot[static_cast<std::size_t>(i)] < 0 ? c.sources.at(i) : x[static_cast<std::size_t>(slot[static_cast<std::size_t>(i)])];
  return v;
}

}  // namespace detail

/// Direct nodal solve of a circuit with voltage sources and resistive loads.
inline std::vector<double> oracle_linear_circuit(const Circuit& c) {
  if (!c.const_power.empty()) throw std::invalid_argument("oracle: linear solve takes resistive loads only");
  return detail::linear_solve(c, std::vector<double>(static_cast<std::size_t>(c.n_buses), 0.0));
}

/// Constant-power loads by damped fixed point on I = P / V.
inline std::vector<double> oracle_constant_power(const Circuit& c, double damping = 0.5, int max_iter = 20000) {
  std::vector<double> draw(static_cast<std::size_t>(c.n_buses), 0.0);
  std::vector<double> v = detail::linear_solve(c, draw);
  for (int it = 0; it < max_iter; ++it) {
    for (const auto& [bus, p] : c.const_power) {
      const auto k = static_cast<std::size_t>(bus);
      draw[k] = (1.0 - damping) * draw[k] + damping * p / v[k];
    }
    const auto next = detail::linear_solve(c, draw);
    double change = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) change = std::max(change, std::abs(next[k] - v[k]));
    v = next;
    if (change < 1e-13) return v;
  }
  throw std::runtime_error("oracle: constant-power fixed point did not settle");
}

/// Conductor loop resistance, restated from the conductor table formula.
inline double oracle_loop_resistance(double length_m, double temp_c) {
  return 2.0 * (length_m * 0.8037e-3 + 0.00403 * (temp_c - 20.0));
}

struct TableRow {
  const char* branch;
  double length_m;
  double resistance;  // as printed
};

/// Published conductor table at 30 degC.
inline const std::vector<TableRow>& conductor_table() {
  static const std::vector<TableRow> rows{
      {"N1-N5", 6.00, 0.0902},   {"N5-N12", 11.35, 0.0988}, {"N5-N8", 11.25, 0.0987},  {"N12-N4", 11.35, 0.0988},
      {"N12-N6", 17.35, 0.1085}, {"N4-N2", 28.70, 0.1267},  {"N4-N10", 9.65, 0.0961},  {"N8-N7", 17.25, 0.0987},
      {"N8-N9", 11.25, 0.1083},  {"N10-N11", 38.35, 0.1422}, {"N9-N3", 28.50, 0.1264}, {"N9-N10", 9.65, 0.0961}};
  return rows;
}

/// Rows whose printed resistances belong to each other's lengths.
inline bool transposed_row(const std::string& branch) { return branch == "N8-N7" || branch == "N8-N9"; }

/// Checks a branch-resistance function against the published table. The
/// two transposed rows are compared with the value printed for the other
/// row of the pair, i.e. paired by length.
template <class ResistanceFn>
std::vector<OracleReport> oracle_conductor_table(ResistanceFn&& resistance) {
  std::vector<OracleReport> out;
  const auto& rows = conductor_table();
  auto find = [&](const std::string& b) {
    for (const auto& r : rows)
      if (b == r.branch) return r;
    throw std::logic_error("oracle: no row " + b);
  };
  for (const auto& row : rows) {
    const std::string b = row.branch;
    const TableRow ref = transposed_row(b) ? find(b == "N8-N7" ? "N8-N9" : "N8-N7") : row;
    std::string id = "conductor " + b;
    if (transposed_row(b)) id += " (paired by length)";
    out.push_back(make_report(id, ref.resistance, std::string("conductor table, row ") + ref.branch,
                              resistance(row.length_m, 30.0), 1e-4, true));
  }
  return out;
}

/// Battery constants needed by the coulomb-counting oracle.
struct FineStepBattery {
  double c_nominal_bank = 66.0;  // Ah
  double n_rate_hours = 20.0;
  double c10_bank = 53.8;        // Ah
  double c_t_coef = 1.67, a_cap = 0.67, b_cap = 0.9, alpha_c = 0.005, beta_c = 0.0;
  double a_cmt = 20.73, b_cmt = 0.55;
};

struct CurrentSegment {
  double current;     // A, positive charging
  double duration_s;
};

/// State of charge after a piecewise-constant current profile, integrated
/// with a step of coarse_dt / 100.
inline double oracle_battery_fine_step(const FineStepBattery& b, const std::vector<CurrentSegment>& profile,
                                       double soc0, double temp, double soh, double coarse_dt) {
  const double dt = coarse_dt / 100.0;
  const double i_nom = b.c_nominal_bank / b.n_rate_hours;
  const double i10 = b.c10_bank / 10.0;
  double soc = soc0;
  for (const auto& seg : profile) {
    const double i = seg.current;
    const double d_t = temp - 25.0;
    const double cap = b.c_nominal_bank * b.c_t_coef * (0.75 * soh + 0.25) /
                       (1.0 + b.a_cap * std::pow(std::abs(i) / i_nom, b.b_cap)) *
                       (1.0 + b.alpha_c * d_t + b.beta_c * d_t * d_t);
    double left = seg.duration_s;
    while (left > 1e-12) {
      const double h = std::min(dt, left);
      const double eta = i > 0.0 ? 1.0 - std::exp(b.a_cmt / (i / i10 + b.b_cmt) * (soc - 1.0)) : 1.0;
      soc = std::clamp(soc + eta * i * h / 3600.0 / cap, 0.0, 1.0);
      left -= h;
    }
  }
  return soc;
}

/// Single-diode module data for the sweep oracle.
struct SweepModule {
  double i_ph;   // A
  double i_0;    // A
  double v_t;    // N_s A_n k T / q, V
  double r_s;    // ohm
  double r_p;    // ohm
  int n_series;  // modules
};

/// Current at array voltage v by bisection on the implicit diode equation.
inline double oracle_pv_current(const SweepModule& m, double v) {
  const double vm = v / m.n_series;
  auto f = [&](double i) { return m.i_ph - m.i_0 * (std::exp((vm + i * m.r_s) / m.v_t) - 1.0) - (vm + i * m.r_s) / m.r_p - i; };
  double lo = -m.i_ph - 100.0, hi = m.i_ph + 1.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct SweepResult {
  double v = 0.0;
  double p = 0.0;
};

/// Maximum of V*I over an n-point uniform grid on [0, v_max].
inline SweepResult oracle_pv_sweep(const SweepModule& m, double v_max, int n = 10000) {
  SweepResult best;
  for (int k = 0; k <= n; ++k) {
    const double v = v_max * k / n;
    const double p = v * oracle_pv_current(m, v);
    if (p > best.p) best = {v, p};
  }
  return best;
}

}  // namespace nanogrid::validation
