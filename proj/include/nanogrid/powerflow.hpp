#pragma once

// Newton-Raphson DC load flow over the nodal conductance matrix, and the
// outer loop coupling current-dependent source voltages (battery banks,
// charge controllers) to the network solution.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "nanogrid/battery_model.hpp"
#include "nanogrid/error.hpp"
#include "nanogrid/network.hpp"

namespace nanogrid::flow {

/// Per-bus specification for the nodal solver. Non-source buses draw
/// p_load watts plus g_load * V^2; a negative p_load injects power.
struct NodeSpec {
  bool is_source = false;
  double v_source = 0.0;
  double p_load = 0.0;
  double g_load = 0.0;
};

struct NodalOptions {
  double tolerance_w = 1e-6;
  int max_iterations = 50;
  double kcl_tolerance_a = 1e-11;
  int max_polish_steps = 3;
};

struct NodalResult {
  Eigen::VectorXd v;
  int iterations = 0;
  bool converged = false;
  double max_mismatch = 0.0;  // W
};

/// Power mismatch V_r (G V)_r + P_r + g_r V_r^2 at every bus (zero at sources).
inline Eigen::VectorXd power_mismatch(const Eigen::MatrixXd& g, const std::vector<NodeSpec>& spec,
                                      const Eigen::VectorXd& v) {
  const Eigen::VectorXd gv = g * v;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(v.size());
  for (Eigen::Index r = 0; r < v.size(); ++r) {
    const auto& s = spec[static_cast<std::size_t>(r)];
    if (s.is_source) continue;
    f(r) = v(r) * gv(r) + s.p_load + s.g_load * v(r) * v(r);
  }
  return f;
}

/// Current mismatch (G V)_r + P_r / V_r + g_r V_r, the KCL residual in amperes.
inline Eigen::VectorXd current_mismatch(const Eigen::MatrixXd& g, const std::vector<NodeSpec>& spec,
                                        const Eigen::VectorXd& v) {
  const Eigen::VectorXd gv = g * v;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(v.size());
  for (Eigen::Index r = 0; r < v.size(); ++r) {
    const auto& s = spec[static_cast<std::size_t>(r)];
    if (s.is_source) continue;
    f(r) = gv(r) + s.g_load * v(r) + (s.p_load != 0.0 ? s.p_load / v(r) : 0.0);
  }
  return f;
}

/// Analytic Jacobian of the power mismatch with respect to the voltages of
/// the listed unknown buses.
inline Eigen::MatrixXd mismatch_jacobian(const Eigen::MatrixXd& g, const std::vector<NodeSpec>& spec,
                                         const Eigen::VectorXd& v, const std::vector<Eigen::Index>& unknown) {
  const Eigen::VectorXd gv = g * v;
  const auto m = static_cast<Eigen::Index>(unknown.size());
  Eigen::MatrixXd j(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index r = unknown[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < m; ++b) {
      const Eigen::Index s = unknown[static_cast<std::size_t>(b)];
      j(a, b) = v(r) * g(r, s);
    }
    j(a, a) = gv(r) + g(r, r) * v(r) + 2.0 * spec[static_cast<std::size_t>(r)].g_load * v(r);
  }
  return j;
}

namespace detail {

inline std::string bus_name(const std::vector<std::string>* names, Eigen::Index i) {
  if (names && static_cast<std::size_t>(i) < names->size()) return (*names)[static_cast<std::size_t>(i)];
  return "#" + std::to_string(i);
}

}  // namespace detail

/// Newton-Raphson solve of the nodal equations with source voltages fixed.
/// Flat start at the mean source voltage unless an initial guess is given.
/// Throws SingularSystem for buses with no path to a source; returns with
/// converged = false when the iteration cap is hit.
inline NodalResult solve_nodal(const Eigen::MatrixXd& g, const std::vector<NodeSpec>& spec,
                               const NodalOptions& opt = {}, const std::vector<std::string>* names = nullptr,
                               const Eigen::VectorXd* initial = nullptr) {
  const Eigen::Index n = g.rows();
  if (static_cast<std::size_t>(n) != spec.size()) throw InvalidInput("flow: spec size does not match matrix");
  std::vector<Eigen::Index> unknown;
  double v_mean = 0.0;
  int n_src = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = spec[static_cast<std::size_t>(i)];
    if (s.is_source) {
      if (!(s.v_source > 0.0)) throw InvalidInput("flow: source voltage at " + detail::bus_name(names, i) + " must be positive");
      v_mean += s.v_source;
      ++n_src;
    } else {
      unknown.push_back(i);
    }
  }
  if (n_src == 0) throw InvalidInput("flow: at least one source bus is required");
  v_mean /= n_src;

  // Every bus must reach a source through nonzero conductances.
  {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<Eigen::Index> q;
    for (Eigen::Index i = 0; i < n; ++i)
      if (spec[static_cast<std::size_t>(i)].is_source) { seen[static_cast<std::size_t>(i)] = true; q.push(i); }
    while (!q.empty()) {
      const Eigen::Index u = q.front();
      q.pop();
      for (Eigen::Index w = 0; w < n; ++w)
        if (w != u && g(u, w) != 0.0 && !seen[static_cast<std::size_t>(w)]) { seen[static_cast<std::size_t>(w)] = true; q.push(w); }
    }
    for (Eigen::Index i = 0; i < n; ++i)
      if (!seen[static_cast<std::size_t>(i)])
        throw SingularSystem("flow: bus '" + detail::bus_name(names, i) + "' has no path to a source");
  }

  NodalResult res;
  res.v = Eigen::VectorXd::Constant(n, v_mean);
  if (initial && initial->size() == n) res.v = *initial;
  for (Eigen::Index i = 0; i < n; ++i)
    if (spec[static_cast<std::size_t>(i)].is_source) res.v(i) = spec[static_cast<std::size_t>(i)].v_source;
  if (unknown.empty()) {
    res.converged = true;
    return res;
  }

  auto max_abs = [&](const Eigen::VectorXd& f) {
    double m = 0.0;
    for (Eigen::Index u : unknown) m = std::max(m, std::abs(f(u)));
    return m;
  };
  auto newton_step = [&](const Eigen::VectorXd& f) {
    const Eigen::MatrixXd j = mismatch_jacobian(g, spec, res.v, unknown);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(unknown.size()));
    for (std::size_t a = 0; a < unknown.size(); ++a) rhs(static_cast<Eigen::Index>(a)) = f(unknown[a]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(j);
    Eigen::VectorXd dx = lu.solve(rhs);
    if (!dx.allFinite()) throw SingularSystem("flow: singular Jacobian");
    return dx;
  };
  auto apply = [&](const Eigen::VectorXd& base, const Eigen::VectorXd& dx, double t) {
    Eigen::VectorXd v = base;
    for (std::size_t a = 0; a < unknown.size(); ++a) v(unknown[a]) -= t * dx(static_cast<Eigen::Index>(a));
    return v;
  };

  Eigen::VectorXd f = power_mismatch(g, spec, res.v);
  double m = max_abs(f);
  while (res.iterations < opt.max_iterations && !(m < opt.tolerance_w)) {
    const Eigen::VectorXd dx = newton_step(f);
    const Eigen::VectorXd base = res.v;
    double t = 1.0;
    Eigen::VectorXd trial = apply(base, dx, t);
    Eigen::VectorXd ft = power_mismatch(g, spec, trial);
    double mt = max_abs(ft);
    while (!(mt < m) && t > 1.0 / 1024.0) {
      t *= 0.5;
      trial = apply(base, dx, t);
      ft = power_mismatch(g, spec, trial);
      mt = max_abs(ft);
    }
    res.v = trial;
    f = ft;
    m = mt;
    ++res.iterations;
  }
  res.converged = m < opt.tolerance_w;
  if (res.converged) {
    // A few more full steps take the KCL residual to round-off.
    for (int k = 0; k < opt.max_polish_steps; ++k) {
      const double kcl = max_abs(current_mismatch(g, spec, res.v));
      if (kcl < opt.kcl_tolerance_a) break;
      const Eigen::VectorXd trial = apply(res.v, newton_step(f), 1.0);
      if (!(max_abs(current_mismatch(g, spec, trial)) < kcl)) break;
      res.v = trial;
      f = power_mismatch(g, spec, res.v);
    }
    m = max_abs(f);
  }
  res.max_mismatch = m;
  return res;
}

struct LoadSpec {
  enum class Kind { constant_power, constant_resistance };
  Kind kind = Kind::constant_power;
  double value = 0.0;  // W or ohm

  static LoadSpec power(double watts) { return {Kind::constant_power, watts}; }
  static LoadSpec resistance(double ohms) { return {Kind::constant_resistance, ohms}; }
};

struct FlowProblem {
  std::map<std::string, double> source_voltages;
  std::map<std::string, LoadSpec> loads;
  double conductor_temp = 30.0;
};

struct FlowSolution {
  std::map<std::string, double> voltages;
  std::vector<double> branch_currents;  // a -> b, in network branch order
  std::map<std::string, double> bus_injections;  // W leaving each bus into the lines
  std::map<std::string, double> source_currents;  // A delivered by each source bus
  int iterations = 0;
  bool converged = false;
  double max_mismatch = 0.0;  // W
  double max_kcl_residual = 0.0;  // A, over non-source buses
};

namespace detail {

inline void fill_load(NodeSpec& s, const LoadSpec& l, const std::string& bus) {
  if (l.kind == LoadSpec::Kind::constant_power) {
    s.p_load += l.value;
  } else {
    if (!(l.value > 0.0)) throw InvalidInput("flow: load resistance at '" + bus + "' must be positive");
    if (std::isfinite(l.value)) s.g_load += 1.0 / l.value;
  }
}

inline FlowSolution make_solution(const network::Network& net, const Eigen::MatrixXd& g,
                                  const std::vector<NodeSpec>& spec, const NodalResult& r, double temp,
                                  const std::vector<double>* injected = nullptr) {
  FlowSolution sol;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  sol.max_mismatch = r.max_mismatch;
  const auto n = static_cast<Eigen::Index>(net.size());
  const Eigen::VectorXd v = r.v.head(n);
  const Eigen::VectorXd gv = g.topLeftCorner(n, n) * v;
  const Eigen::VectorXd kcl = current_mismatch(g, spec, r.v);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& id = net.buses()[static_cast<std::size_t>(i)].id;
    sol.voltages[id] = v(i);
    sol.bus_injections[id] = v(i) * gv(i);
    if (spec[static_cast<std::size_t>(i)].is_source) sol.source_currents[id] = gv(i);
    else {
      const double extra = injected ? (*injected)[static_cast<std::size_t>(i)] : 0.0;
      sol.max_kcl_residual = std::max(sol.max_kcl_residual, std::abs(kcl(i) - extra));
    }
  }
  const auto res = network::branch_resistances(net, temp);
  for (std::size_t k = 0; k < res.size(); ++k) {
    const auto& br = net.branches()[k];
    sol.branch_currents.push_back((v(static_cast<Eigen::Index>(net.index_of(br.a))) -
                                   v(static_cast<Eigen::Index>(net.index_of(br.b)))) / res[k]);
  }
  return sol;
}

inline std::vector<std::string> bus_names(const network::Network& net) {
  std::vector<std::string> out;
  for (const auto& b : net.buses()) out.push_back(b.id);
  return out;
}

}  // namespace detail

/// Static load flow with fixed source voltages. Throws ConvergenceError when
/// the iteration cap is reached.
inline FlowSolution newton_raphson_flow(const FlowProblem& problem, const network::Network& net,
                                        const NodalOptions& opt = {}) {
  const Eigen::MatrixXd g = network::conductance_matrix(net, problem.conductor_temp);
  std::vector<NodeSpec> spec(net.size());
  for (const auto& [bus, v] : problem.source_voltages) {
    auto& s = spec[net.index_of(bus)];
    s.is_source = true;
    s.v_source = v;
  }
  for (const auto& [bus, l] : problem.loads) {
    auto& s = spec[net.index_of(bus)];
    if (s.is_source) throw InvalidInput("flow: bus '" + bus + "' is both a source and a load");
    detail::fill_load(s, l, bus);
  }
  const auto names = detail::bus_names(net);
  const NodalResult r = solve_nodal(g, spec, opt, &names);
  if (!r.converged)
    throw ConvergenceError("flow: Newton-Raphson did not converge (max mismatch " + std::to_string(r.max_mismatch) +
                               " W)",
                           r.iterations, r.max_mismatch);
  return detail::make_solution(net, g, spec, r, problem.conductor_temp);
}

/// A source whose terminal voltage depends on the current it delivers.
struct SourceModel {
  std::string bus;
  std::function<double(double)> voltage;  // V(i_out)
};

/// A grid-following injector delivering a voltage-dependent current.
struct InjectorModel {
  std::string bus;
  std::function<double(double)> current;  // i_out(V_node)
};

struct CoupledOptions {
  int max_iterations = 100;
  double rel_tolerance = 1e-3;
  double abs_tolerance = 1e-6;  // A
  double min_internal_resistance = 1e-3;  // ohm
  double derivative_step = 1e-3;  // A
  double nominal_voltage = 24.0;
  NodalOptions nodal;
};

struct CoupledResult {
  FlowSolution flow;
  std::vector<double> source_currents;
  std::vector<double> source_voltages;
  std::vector<double> injector_currents;
  int iterations = 0;
  bool converged = false;
  bool energized = true;
};

/// Finds source currents consistent with both the source voltage laws and
/// the network. Each source is linearised about the current iterate as an
/// EMF behind its incremental resistance, attached to its bus through a
/// virtual branch; the augmented network is solved and the EMFs refreshed
/// until the source currents settle. Returns converged = false at the cap.
inline CoupledResult coupled_flow(const network::Network& net, const std::vector<SourceModel>& sources,
                                  const std::vector<InjectorModel>& injectors,
                                  const std::map<std::string, LoadSpec>& loads, double conductor_temp,
                                  const CoupledOptions& opt = {}, const std::vector<double>* guess = nullptr) {
  CoupledResult out;
  const std::size_t n = net.size();
  const std::size_t m = sources.size();
  if (m == 0) {
    out.energized = false;
    out.converged = true;
    for (const auto& b : net.buses()) out.flow.voltages[b.id] = 0.0;
    out.flow.branch_currents.assign(net.branches().size(), 0.0);
    out.flow.converged = true;
    out.injector_currents.assign(injectors.size(), 0.0);
    return out;
  }

  const Eigen::MatrixXd g_net = network::conductance_matrix(net, conductor_temp);
  const auto total = static_cast<Eigen::Index>(n + m);
  std::vector<NodeSpec> base(n + m);
  for (const auto& [bus, l] : loads) detail::fill_load(base[net.index_of(bus)], l, bus);
  std::vector<std::size_t> src_bus(m);
  for (std::size_t k = 0; k < m; ++k) {
    src_bus[k] = net.index_of(sources[k].bus);
    base[n + k].is_source = true;
  }
  std::vector<std::size_t> inj_bus(injectors.size());
  for (std::size_t k = 0; k < injectors.size(); ++k) inj_bus[k] = net.index_of(injectors[k].bus);
  auto names = detail::bus_names(net);
  for (std::size_t k = 0; k < m; ++k) names.push_back("source@" + sources[k].bus);

  std::vector<double> i(m);
  if (guess && guess->size() == m) {
    i = *guess;
  } else {
    double p = 0.0;
    for (std::size_t b = 0; b < n; ++b) p += base[b].p_load + base[b].g_load * opt.nominal_voltage * opt.nominal_voltage;
    std::fill(i.begin(), i.end(), p / static_cast<double>(m) / opt.nominal_voltage);
  }
  std::vector<double> inj_i(injectors.size(), 0.0);
  std::vector<double> inj_v(injectors.size(), opt.nominal_voltage);

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(total, total);
  g.topLeftCorner(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = g_net;
  std::vector<double> r_int(m), emf(m);
  NodalResult r;
  Eigen::VectorXd v_prev;
  double damping = 1.0;
  double last_change = std::numeric_limits<double>::infinity();
  for (out.iterations = 1; out.iterations <= opt.max_iterations; ++out.iterations) {
    g.bottomRows(static_cast<Eigen::Index>(m)).setZero();
    g.rightCols(static_cast<Eigen::Index>(m)).setZero();
    g.topLeftCorner(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = g_net;
    std::vector<NodeSpec> spec = base;
    for (std::size_t k = 0; k < m; ++k) {
      const auto& f = sources[k].voltage;
      const double v0 = f(i[k]);
      const double h = opt.derivative_step;
      r_int[k] = std::max(opt.min_internal_resistance, -(f(i[k] + h) - f(i[k] - h)) / (2.0 * h));
      emf[k] = v0 + r_int[k] * i[k];
      spec[n + k].v_source = emf[k];
      const auto a = static_cast<Eigen::Index>(src_bus[k]);
      const auto b = static_cast<Eigen::Index>(n + k);
      const double y = 1.0 / r_int[k];
      g(a, a) += y;
      g(b, b) += y;
      g(a, b) -= y;
      g(b, a) -= y;
    }
    for (std::size_t k = 0; k < injectors.size(); ++k) {
      inj_i[k] = injectors[k].current(inj_v[k]);
      spec[inj_bus[k]].p_load -= inj_v[k] * inj_i[k];
    }
    r = solve_nodal(g, spec, opt.nodal, &names, v_prev.size() == total ? &v_prev : nullptr);
    if (!r.converged)
      throw ConvergenceError("flow: Newton-Raphson did not converge inside the coupled loop", r.iterations,
                             r.max_mismatch);
    v_prev = r.v;

    bool settled = true;
    std::vector<double> next(m);
    double change = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      next[k] = (emf[k] - r.v(static_cast<Eigen::Index>(src_bus[k]))) / r_int[k];
      if (std::abs(next[k] - i[k]) > opt.rel_tolerance * std::abs(next[k]) + opt.abs_tolerance) settled = false;
      change = std::max(change, std::abs(next[k] - i[k]));
    }
    // Kinks in the source laws make the undamped update cycle; shrink the
    // step whenever the update stops contracting.
    if (change > 0.9 * last_change) damping = std::max(damping * 0.5, 1.0 / 256.0);
    last_change = change;
    for (std::size_t k = 0; k < m; ++k) i[k] += (settled ? 1.0 : damping) * (next[k] - i[k]);
    for (std::size_t k = 0; k < injectors.size(); ++k) {
      const double v_node = r.v(static_cast<Eigen::Index>(inj_bus[k]));
      const double next = injectors[k].current(v_node);
      if (std::abs(next - inj_i[k]) > opt.rel_tolerance * std::abs(next) + opt.abs_tolerance) settled = false;
      inj_v[k] = v_node;
    }
    if (settled) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(out.iterations, opt.max_iterations);

  std::vector<NodeSpec> real(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t k = 0; k < injectors.size(); ++k) real[inj_bus[k]].p_load -= inj_v[k] * inj_i[k];
  NodalResult head;
  head.v = r.v.head(static_cast<Eigen::Index>(n));
  head.iterations = r.iterations;
  head.converged = r.converged;
  head.max_mismatch = r.max_mismatch;
  std::vector<double> injected(n, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto a = static_cast<Eigen::Index>(src_bus[k]);
    injected[src_bus[k]] += (r.v(static_cast<Eigen::Index>(n + k)) - r.v(a)) / r_int[k];
  }
  out.flow = detail::make_solution(net, g_net, real, head, conductor_temp, &injected);
  out.source_currents = i;
  for (std::size_t k = 0; k < m; ++k) {
    out.source_voltages.push_back(r.v(static_cast<Eigen::Index>(src_bus[k])));
    out.flow.source_currents[sources[k].bus] += i[k];
  }
  out.injector_currents = inj_i;
  return out;
}

struct BatterySource {
  std::string bus;
  battery::BatteryParams params;
  battery::BatteryState state;
};

/// Battery banks as network sources, each bank's terminal voltage following
/// its discharge/charge law at the current it delivers.
inline CoupledResult coupled_flow_with_batteries(const network::Network& net, const std::vector<BatterySource>& banks,
                                                 const std::map<std::string, LoadSpec>& loads, double conductor_temp,
                                                 const CoupledOptions& opt = {}) {
  std::vector<SourceModel> sources;
  for (const auto& b : banks)
    sources.push_back({b.bus, [&b](double i_out) {
                         return battery::terminal_voltage(b.params, b.state, -i_out).volts;
                       }});
  CoupledResult r = coupled_flow(net, sources, {}, loads, conductor_temp, opt);
  if (!r.converged)
    throw ConvergenceError("flow: battery coupling loop did not converge", r.iterations, 0.0);
  return r;
}

}  // namespace nanogrid::flow
