#include <gtest/gtest.h>

#include <random>

#include "nanogrid/powerflow.hpp"
#include "nanogrid/validation/oracles.hpp"

using namespace nanogrid;
using namespace nanogrid::flow;
using network::BusKind;
using network::Network;

namespace {

validation::Circuit circuit_of(const Network& net, const FlowProblem& p) {
  validation::Circuit c;
  c.n_buses = static_cast<int>(net.size());
  const auto r = network::branch_resistances(net, p.conductor_temp);
  for (std::size_t k = 0; k < r.size(); ++k)
    c.edges.push_back({static_cast<int>(net.index_of(net.branches()[k].a)),
                       static_cast<int>(net.index_of(net.branches()[k].b)), r[k]});
  for (const auto& [bus, v] : p.source_voltages) c.sources[static_cast<int>(net.index_of(bus))] = v;
  for (const auto& [bus, l] : p.loads) {
    const int i = static_cast<int>(net.index_of(bus));
    if (l.kind == LoadSpec::Kind::constant_power) c.const_power[i] = l.value;
    else c.resistive[i] = l.value;
  }
  return c;
}

Network three_bus() {
  Network n;
  n.add_bus("B1", BusKind::source);
  n.add_bus("B2", BusKind::load);
  n.add_bus("B3", BusKind::load);
  n.add_branch("B1", "B2", 10.0);
  n.add_branch("B2", "B3", 10.0);
  n.conductor.r_per_km = 5.0;  // 0.1 ohm per branch at 20 degC
  return n;
}

FlowProblem reference_test1() {
  FlowProblem p;
  p.conductor_temp = 30.0;
  for (const char* b : {"N1", "N6", "N7"}) p.source_voltages[b] = 25.0;
  p.loads["N2"] = LoadSpec::power(4 * 40.0);
  p.loads["N3"] = LoadSpec::power(5 * 40.0 + 60.0);
  p.loads["N11"] = LoadSpec::power(3 * 40.0);
  return p;
}

}  // namespace

TEST(NewtonRaphson, VoltageDivider) {
  Network n;
  n.add_bus("s", BusKind::source);
  n.add_bus("l", BusKind::load);
  n.add_branch("s", "l", 10.0);
  n.conductor.r_per_km = 5.0;
  FlowProblem p;
  p.conductor_temp = 20.0;
  p.source_voltages["s"] = 24.0;
  p.loads["l"] = LoadSpec::resistance(14.4);
  const FlowSolution s = newton_raphson_flow(p, n);
  EXPECT_NEAR(s.voltages.at("l"), 24.0 * 14.4 / 14.5, 1e-9);
}

TEST(NewtonRaphson, NoLoadGivesSourceVoltageEverywhere) {
  const Network n = network::dcdn_12bus();
  FlowProblem p;
  p.source_voltages["N1"] = 24.0;
  const FlowSolution s = newton_raphson_flow(p, n);
  for (const auto& [bus, v] : s.voltages) EXPECT_DOUBLE_EQ(v, 24.0) << bus;
  for (double i : s.branch_currents) EXPECT_EQ(i, 0.0);
}

TEST(NewtonRaphson, ThreeBusLampsMatchLinearSolve) {
  const Network n = three_bus();
  FlowProblem p;
  p.conductor_temp = 20.0;
  p.source_voltages["B1"] = 24.0;
  p.loads["B2"] = LoadSpec::resistance(14.4);
  p.loads["B3"] = LoadSpec::resistance(14.4);
  const FlowSolution s = newton_raphson_flow(p, n);
  const auto ref = validation::oracle_linear_circuit(circuit_of(n, p));
  EXPECT_NEAR(s.voltages.at("B2"), ref[1], 1e-9);
  EXPECT_NEAR(s.voltages.at("B3"), ref[2], 1e-9);
  EXPECT_LE(s.iterations, 5);
}

TEST(NewtonRaphson, ReferenceGridMatchesFixedPointOracle) {
  const Network n = network::dcdn_12bus();
  const FlowProblem p = reference_test1();
  const FlowSolution s = newton_raphson_flow(p, n);
  const auto ref = validation::oracle_constant_power(circuit_of(n, p));
  for (const auto& b : n.buses()) EXPECT_NEAR(s.voltages.at(b.id), ref[n.index_of(b.id)], 1e-9) << b.id;
  EXPECT_LT(s.max_kcl_residual, 1e-9);
}

TEST(NewtonRaphson, RingSurvivesOneOpenBranch) {
  Network n = network::dcdn_12bus();
  for (std::size_t k = 0; k < n.branches().size(); ++k)
    if (n.branches()[k].a == "N4" && n.branches()[k].b == "N10") n.remove_branch(k);
  ASSERT_EQ(n.branches().size(), 11u);
  const FlowSolution s = newton_raphson_flow(reference_test1(), n);
  EXPECT_TRUE(s.converged);
  for (const char* lb : {"N2", "N3", "N11"}) EXPECT_GT(s.voltages.at(lb), 20.0);
}

TEST(NewtonRaphson, KirchhoffAtEveryBus) {
  const Network n = network::dcdn_12bus();
  FlowProblem p = reference_test1();
  p.loads["N4"] = LoadSpec::resistance(9.0);
  const FlowSolution s = newton_raphson_flow(p, n);
  // Net current into each non-source bus from the branches equals the load draw.
  std::map<std::string, double> net_out;
  for (std::size_t k = 0; k < n.branches().size(); ++k) {
    net_out[n.branches()[k].a] += s.branch_currents[k];
    net_out[n.branches()[k].b] -= s.branch_currents[k];
  }
  for (const auto& b : n.buses()) {
    if (p.source_voltages.count(b.id)) continue;
    double draw = 0.0;
    if (auto it = p.loads.find(b.id); it != p.loads.end()) {
      const double v = s.voltages.at(b.id);
      draw = it->second.kind == LoadSpec::Kind::constant_power ? it->second.value / v : v / it->second.value;
    }
    EXPECT_NEAR(net_out[b.id] + draw, 0.0, 1e-9) << b.id;
  }
}

TEST(NewtonRaphson, IsolatedBusIsSingular) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 3);
  g << 10, -10, 0, -10, 10, 0, 0, 0, 0;
  std::vector<NodeSpec> spec(3);
  spec[0].is_source = true;
  spec[0].v_source = 24.0;
  spec[2].p_load = 10.0;
  EXPECT_THROW(solve_nodal(g, spec), SingularSystem);
}

TEST(NewtonRaphson, InfeasibleLoadDoesNotConverge) {
  Network n;
  n.add_bus("s", BusKind::source);
  n.add_bus("l", BusKind::load);
  n.add_branch("s", "l", 100.0);
  FlowProblem p;
  p.source_voltages["s"] = 24.0;
  p.loads["l"] = LoadSpec::power(5000.0);  // beyond V^2 / 4R
  EXPECT_THROW(newton_raphson_flow(p, n), ConvergenceError);
}

TEST(NewtonRaphson, RequiresSource) {
  FlowProblem p;
  p.loads["N2"] = LoadSpec::power(10.0);
  EXPECT_THROW(newton_raphson_flow(p, network::dcdn_12bus()), InvalidInput);
}

TEST(Jacobian, MatchesCentralDifferences) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(u(rng) * 11);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    auto link = [&](int a, int b) {
      const double y = 1.0 / (0.02 + 0.3 * u(rng));
      g(a, a) += y; g(b, b) += y; g(a, b) -= y; g(b, a) -= y;
    };
    for (int i = 1; i < n; ++i) link(i, static_cast<int>(u(rng) * i));
    for (int e = 0; e < n / 2; ++e) {
      const int a = static_cast<int>(u(rng) * n), b = static_cast<int>(u(rng) * n);
      if (a != b) link(a, b);
    }
    std::vector<NodeSpec> spec(static_cast<std::size_t>(n));
    spec[0].is_source = true;
    spec[0].v_source = 24.0;
    std::vector<Eigen::Index> unknown;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
      v(i) = 22.0 + 3.0 * u(rng);
      if (i == 0) continue;
      unknown.push_back(i);
      spec[static_cast<std::size_t>(i)].p_load = 40.0 * u(rng);
      spec[static_cast<std::size_t>(i)].g_load = u(rng) < 0.5 ? 0.1 * u(rng) : 0.0;
    }
    const Eigen::MatrixXd j = mismatch_jacobian(g, spec, v, unknown);
    const double h = 1e-6;
    for (std::size_t b = 0; b < unknown.size(); ++b) {
      Eigen::VectorXd vp = v, vm = v;
      vp(unknown[b]) += h;
      vm(unknown[b]) -= h;
      const Eigen::VectorXd d = (power_mismatch(g, spec, vp) - power_mismatch(g, spec, vm)) / (2.0 * h);
      for (std::size_t a = 0; a < unknown.size(); ++a) {
        const double ja = j(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        EXPECT_NEAR(ja, d(unknown[a]), 1e-5 * std::max(1.0, std::abs(ja)));
      }
    }
  }
}

TEST(CoupledFlow, SingleBatteryLamp) {
  Network n;
  n.add_bus("s", BusKind::source);
  n.add_bus("l", BusKind::load);
  n.add_branch("s", "l", 5.0);
  const BatterySource bank{"s", battery::dcdn_bank(), battery::BatteryState::make(battery::dcdn_bank(), 0.8, 0.8, 1.0)};
  const CoupledResult r = coupled_flow_with_batteries(n, {bank}, {{"l", LoadSpec::resistance(14.4)}}, 30.0);
  ASSERT_TRUE(r.converged);
  const double i = r.source_currents[0];
  const double v_bat = battery::terminal_voltage(bank.params, bank.state, -i).volts;
  EXPECT_NEAR(r.source_voltages[0], v_bat, 1e-3 * v_bat);
  const double rl = network::branch_resistance(5.0, n.conductor, 30.0);
  EXPECT_NEAR(i, r.source_voltages[0] / (rl + 14.4), 1e-3 * i);
}

TEST(CoupledFlow, SymmetricBanksShareEqually) {
  Network n;
  n.add_bus("a", BusKind::source);
  n.add_bus("m", BusKind::load);
  n.add_bus("b", BusKind::source);
  n.add_branch("a", "m", 12.0);
  n.add_branch("m", "b", 12.0);
  const auto p = battery::dcdn_bank();
  const auto s = battery::BatteryState::make(p, 0.7, 0.7, 1.0);
  const CoupledResult r = coupled_flow_with_batteries(n, {{"a", p, s}, {"b", p, s}}, {{"m", LoadSpec::power(200.0)}}, 30.0);
  EXPECT_NEAR(r.source_currents[0], r.source_currents[1], 1e-9);
}

TEST(CoupledFlow, FullestBankSuppliesMost) {
  const Network n = network::dcdn_12bus();
  const auto p = battery::dcdn_bank();
  std::vector<BatterySource> banks{{"N1", p, battery::BatteryState::make(p, 0.6, 0.6, 1.0)},
                                   {"N6", p, battery::BatteryState::make(p, 0.9, 0.9, 1.0)},
                                   {"N7", p, battery::BatteryState::make(p, 0.6, 0.6, 1.0)}};
  const std::map<std::string, LoadSpec> loads{{"N2", LoadSpec::resistance(14.4 / 4)},
                                               {"N3", LoadSpec::resistance(14.4 / 4)},
                                               {"N11", LoadSpec::resistance(14.4 / 3)}};
  const CoupledResult r = coupled_flow_with_batteries(n, banks, loads, 30.0);
  ASSERT_TRUE(r.converged);
  EXPECT_GT(r.source_currents[1], r.source_currents[0]);
  EXPECT_GT(r.source_currents[1], r.source_currents[2]);
  EXPECT_LT(r.flow.max_kcl_residual, 1e-9);
}
