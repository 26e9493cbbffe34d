#include <gtest/gtest.h>

#include <cmath>

#include "nanogrid/simulation.hpp"
#include "nanogrid/validation/acceptance.hpp"

using namespace nanogrid;
using namespace nanogrid::sim;
using validation::detail::constant_series;
using validation::detail::standard_gss;

namespace {

// One GSS at N1 feeding one lamp at N2 of a two-bus grid.
Scenario single_lamp(double irradiance, double hours, double soc = 0.6) {
  Scenario sc;
  sc.network.add_bus("N1", network::BusKind::source);
  sc.network.add_bus("N2", network::BusKind::load);
  sc.network.add_branch("N1", "N2", 20.0);
  sc.start = parse_iso8601("2019-10-01T12:00:00Z");
  sc.end = sc.start + static_cast<Seconds>(hours * 3600);
  sc.irradiance = constant_series(sc.start, sc.end, irradiance);
  sc.ambient = constant_series(sc.start, sc.end, 25.0);
  GssSetup g;
  g.spec = standard_gss("GSS1", "N1");
  g.soc = soc;
  sc.gss.push_back(g);
  LoadBankInstance l;
  l.id = "LB1";
  l.bus = "N2";
  l.spec.lamps = 1;
  sc.loads.push_back(l);
  return sc;
}

}  // namespace

TEST(Ledger, PublishedDay) {
  const EnergyLedger l = ledger_from_energies(6.98, 6.08, 0.74);
  EXPECT_NEAR(l.e_losses, 0.16, 1e-12);
  ASSERT_TRUE(l.eta_supply.has_value());
  EXPECT_NEAR(*l.eta_supply, 97.3684, 1e-4);
  EXPECT_DOUBLE_EQ(std::floor(*l.eta_supply * 100.0) / 100.0, 97.36);
}

TEST(Ledger, ZeroLossIsFullEfficiency) {
  const EnergyLedger l = ledger_from_energies(5.0, 4.0, 1.0);
  EXPECT_DOUBLE_EQ(*l.eta_supply, 100.0);
  EXPECT_FALSE(ledger_from_energies(1.0, 0.0, 1.0).eta_supply.has_value());
}

TEST(Ledger, Yield) {
  EXPECT_NEAR(pv_yield(2.29, 0.477), 4.80, 0.005);
  EXPECT_THROW(pv_yield(1.0, 0.0), InvalidInput);
  EXPECT_THROW(energy_ledger({}, {}), InvalidInput);
}

TEST(Step, DarkIdleGridCarriesNoCurrent) {
  Scenario sc = single_lamp(0.0, 0.1, 0.7);
  sc.loads.clear();
  sc.gss[0].spec.controller.losses = controller::LossConstants::lossless();
  const SimResult r = run(sc);
  const auto& p = *sc.gss[0].spec.battery;
  const auto s0 = battery::BatteryState::make(p, 0.7, consistent_loe(p, 0.7, 1.0), 1.0, 25.0);
  for (const auto& st : r.steps) {
    EXPECT_EQ(st.gss[0].i_out, 0.0);
    EXPECT_EQ(st.gss[0].i_bat, 0.0);
    for (double i : st.branch_currents) EXPECT_EQ(i, 0.0);
  }
  EXPECT_NEAR(r.steps.front().gss[0].v_bat, battery::terminal_voltage(p, s0, 0.0).volts, 1e-9);
}

TEST(Step, PowerBalanceUnderFullSun) {
  const Scenario sc = single_lamp(1000.0, 0.25);
  const SimResult r = run(sc);
  ASSERT_EQ(r.nonconverged_steps, 0);
  for (const auto& st : r.steps) {
    const auto& g = st.gss[0];
    const double out = st.loads[0].p + g.p_bat + st.p_lines + g.p_loss;
    EXPECT_NEAR(g.p_pv, out, 1e-3 * g.p_pv + 1e-9) << "t " << st.t;
    EXPECT_GT(g.p_pv, 0.0);
  }
}

TEST(Run, DarkDayLedger) {
  Scenario sc = single_lamp(0.0, 3.0);
  sc.dt = 5.0;
  const SimResult r = run(sc);
  EXPECT_EQ(r.total.e_gfv, 0.0);
  EXPECT_GT(r.total.e_bc, 0.0);
  EXPECT_NEAR(r.total.e_bb, -r.total.e_bc - r.total.e_losses, 1e-15);
  EXPECT_NEAR(r.total.e_losses_independent, r.total.e_losses, 0.01 * std::abs(r.total.e_losses));
}

TEST(Run, SunnyLedgerCloses) {
  Scenario sc = single_lamp(700.0, 1.0);
  sc.dt = 2.0;
  const SimResult r = run(sc);
  const auto& l = r.total;
  EXPECT_NEAR(l.e_gfv, l.e_bb + l.e_bc + l.e_losses, 1e-12);
  EXPECT_NEAR(l.e_losses_independent, l.e_losses, 0.01 * l.e_losses);
  ASSERT_EQ(l.yields.size(), 1u);
  EXPECT_NEAR(l.yields[0], l.e_gfv / sc.gss[0].spec.pv.p_mp_stc() * 1000.0, 1e-12);
}

TEST(Run, EmptyWindow) {
  Scenario sc = single_lamp(500.0, 0.0);
  const SimResult r = run(sc);
  EXPECT_EQ(r.steps_run, 0);
  EXPECT_TRUE(r.steps.empty());
  EXPECT_TRUE(r.days.empty());
}

TEST(Run, Deterministic) {
  Scenario sc = single_lamp(850.0, 0.2);
  const SimResult a = run(sc), b = run(sc);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    EXPECT_EQ(a.steps[k].gss[0].v_bat, b.steps[k].gss[0].v_bat);
    EXPECT_EQ(a.steps[k].gss[0].i_bat, b.steps[k].gss[0].i_bat);
    EXPECT_EQ(a.steps[k].loads[0].p, b.steps[k].loads[0].p);
  }
  EXPECT_EQ(a.total.e_losses, b.total.e_losses);
}

TEST(Run, StreamingMatchesRecorded) {
  Scenario sc = single_lamp(600.0, 0.1);
  int seen = 0;
  SimOptions opt;
  opt.record_traces = false;
  opt.on_step = [&](const StepRecord&) { ++seen; };
  const SimResult r = run(sc, opt);
  EXPECT_EQ(seen, r.steps_run);
  EXPECT_TRUE(r.steps.empty());
  EXPECT_EQ(r.steps_run, 360);
}

TEST(Run, ReverseFlowEqualizesBanks) {
  Scenario sc = validation::reverse_flow_scenario();
  sc.end = sc.start + 1800;
  sc.dt = 2.0;
  const SimResult r = run(sc);
  EXPECT_LT(r.total.e_bb_per_gss[0], 0.0);
  EXPECT_GT(r.total.e_bb_per_gss[1], 0.0);
  for (const auto& st : r.steps)
    for (const auto& g : st.gss) {
      ASSERT_GE(g.soc, 0.0);
      ASSERT_LE(g.soc, 1.0);
    }
}

TEST(Run, LvdTripShiftsLoad) {
  const Scenario sc = validation::lvd_trip_scenario(23.2);
  const SimResult r = run(sc);
  const auto s = validation::lvd_signature(r, sc, 2);
  ASSERT_TRUE(s.tripped);
  EXPECT_EQ(s.i_out_tripped, 0.0);
  EXPECT_TRUE(s.survivors_increase);
  bool logged = false;
  for (const auto& e : r.events) logged = logged || e.device == "GSS3";
  EXPECT_TRUE(logged);
}

TEST(Run, RejectsBadScenario) {
  Scenario sc = single_lamp(500.0, 1.0);
  sc.dt = 0.0;
  EXPECT_THROW(run(sc), InvalidInput);
  sc = single_lamp(500.0, 1.0);
  sc.irradiance = constant_series(sc.start + 60, sc.end, 500.0);
  EXPECT_THROW(run(sc), InvalidInput);
  sc = single_lamp(500.0, 1.0);
  sc.loads[0].bus = "N9";
  EXPECT_THROW(run(sc), InvalidInput);
}
