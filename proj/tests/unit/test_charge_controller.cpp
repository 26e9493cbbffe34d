#include <gtest/gtest.h>

#include <cmath>

#include "nanogrid/charge_controller.hpp"
#include "nanogrid/gss.hpp"

using namespace nanogrid;
using namespace nanogrid::controller;

namespace {

ControllerConfig lossless() {
  ControllerConfig c;
  c.losses = LossConstants::lossless();
  return c;
}

GssSpec test_gss(bool with_battery, const ControllerConfig& cfg) {
  static const pv::PvModuleParams m = pv::with_extracted_resistances(pv::yl245p_29b_datasheet());
  GssSpec s;
  s.id = "GSS";
  s.bus = "N1";
  s.pv = {m, 2};
  if (with_battery) s.battery = battery::dcdn_bank();
  s.controller = cfg;
  return s;
}

GssState state_for(const GssSpec& spec, Stage stage, double soc) {
  GssState st;
  st.ctrl.stage = stage;
  if (spec.battery) st.battery = battery::BatteryState::make(*spec.battery, soc, soc, 1.0);
  return st;
}

}  // namespace

TEST(Buck, IdealConverter) {
  EXPECT_DOUBLE_EQ(buck_output_current(lossless(), 48.0, 5.0, 24.0, 0.5), 10.0);
  EXPECT_DOUBLE_EQ(conversion_efficiency(48.0, 5.0, 24.0, 10.0), 1.0);
}

TEST(Buck, RatedOperatingPoint) {
  const ControllerConfig cfg;
  const double d = 26.0 / 58.44, il = 8.15 / d;
  const double loss = 2 * 2.5e-3 * il * il + 0.5 * 58.44 * il * 50e3 * 20e-9 + 2 * 58.44 * il * 5e-9 * 50e3 +
                      3e-3 * il * il + 5.0;
  const double io = buck_output_current(cfg, 58.44, 8.15, 26.0, d);
  EXPECT_NEAR(io, il - loss / 26.0, 1e-12);
  EXPECT_GT(conversion_efficiency(58.44, 8.15, 26.0, io), 0.96);
}

TEST(Buck, SelfConsumptionOnly) {
  const ControllerConfig cfg;
  EXPECT_EQ(buck_output_current(cfg, 50.0, 0.0, 25.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(converter_losses(cfg, 50.0, 0.0, 0.5).total(), 5.0);
}

TEST(Buck, RejectsBadDuty) {
  EXPECT_THROW(buck_output_current(ControllerConfig{}, 50.0, 5.0, 25.0, 0.0), InvalidInput);
  EXPECT_THROW(buck_output_current(ControllerConfig{}, 50.0, 5.0, 25.0, 1.2), InvalidInput);
  EXPECT_THROW(conversion_efficiency(50.0, 0.0, 25.0, 1.0), InvalidInput);
}

TEST(Buck, PowerBalance) {
  const ControllerConfig cfg;
  for (double vpv = 45.0; vpv <= 80.0; vpv += 5.0)
    for (double ipv = 1.0; ipv <= 8.5; ipv += 0.5)
      for (double vo = 23.0; vo <= 29.0; vo += 1.5) {
        const double d = vo / vpv;
        const double io = buck_output_current(cfg, vpv, ipv, vo, d);
        if (io <= 0.0) continue;
        const double in = vpv * ipv, out = vo * io + converter_losses(cfg, vpv, ipv, d).total();
        EXPECT_NEAR(out, in, 1e-6 * in);
      }
}

TEST(Buck, EfficiencyBelowPublishedCeiling) {
  const ControllerConfig cfg;
  double best = 0.0;
  for (double vpv = 45.0; vpv <= 85.0; vpv += 2.5)
    for (double ipv = 0.5; ipv <= 8.75; ipv += 0.25)
      for (double vo = 22.0; vo <= 29.5; vo += 0.5) {
        const double d = vo / vpv;
        const double io = buck_output_current(cfg, vpv, ipv, vo, d);
        const double eta = conversion_efficiency(vpv, ipv, vo, io);
        EXPECT_LT(eta, 1.0);
        best = std::max(best, eta);
      }
  EXPECT_LE(best, 0.985 + 0.01);
}

TEST(Buck, EachLossTermLowersEfficiency) {
  const LossConstants all;
  for (int k = 0; k < 5; ++k) {
    ControllerConfig cfg = lossless();
    auto& l = cfg.losses;
    switch (k) {
      case 0: l.r_ds_on = all.r_ds_on; break;
      case 1: l.r_l = all.r_l; break;
      case 2: l.t_dead = all.t_dead; l.f_sw = all.f_sw; break;
      case 3: l.t_s = all.t_s; l.t_d = all.t_d; l.f_sw = all.f_sw; break;
      case 4: l.p_auto = all.p_auto; break;
    }
    const double io = buck_output_current(cfg, 60.0, 7.0, 26.0, 26.0 / 60.0);
    EXPECT_LT(conversion_efficiency(60.0, 7.0, 26.0, io), 1.0) << "loss term " << k;
  }
}

TEST(Stages, BulkToAbsorption) {
  const ControllerConfig cfg;
  const ControllerState s{Stage::bulk, 0.0, true, 1.0};
  const ControllerState n = step_stage(cfg, s, 28.8, true, 1.0);
  EXPECT_EQ(n.stage, Stage::absorption);
  EXPECT_EQ(n.absorb_elapsed, 0.0);
  EXPECT_EQ(step_stage(cfg, s, 28.7, true, 1.0).stage, Stage::bulk);
}

TEST(Stages, AbsorptionTimesOut) {
  const ControllerConfig cfg;
  ControllerState s{Stage::absorption, 0.0, true, 1.0};
  int steps = 0;
  while (s.stage == Stage::absorption) {
    s = step_stage(cfg, s, 28.8, true, 60.0);
    ++steps;
    ASSERT_LE(s.absorb_elapsed, cfg.absorb_duration);
  }
  EXPECT_EQ(s.stage, Stage::float_);
  EXPECT_EQ(steps * 60.0, 7200.0);
}

TEST(Stages, NightFromAnyStage) {
  const ControllerConfig cfg;
  for (Stage st : {Stage::bulk, Stage::absorption, Stage::float_, Stage::night})
    EXPECT_EQ(step_stage(cfg, {st, 100.0, true, 1.0}, 26.0, false, 1.0).stage, Stage::night);
  EXPECT_EQ(step_stage(cfg, {Stage::night, 0.0, true, 1.0}, 26.0, true, 1.0).stage, Stage::bulk);
}

TEST(Stages, LostSetpointFallsBackToBulk) {
  const ControllerConfig cfg;
  EXPECT_EQ(step_stage(cfg, {Stage::float_, 7200.0, true, 1.0}, 26.0, true, 1.0, false).stage, Stage::bulk);
  EXPECT_EQ(step_stage(cfg, {Stage::absorption, 10.0, true, 1.0}, 27.0, true, 1.0, false).stage, Stage::bulk);
}

TEST(Stages, NeverAbsorbsBelowSetpoint) {
  const ControllerConfig cfg;
  ControllerState s{Stage::night, 0.0, true, 1.0};
  for (int k = 0; k < 20000; ++k) {
    const double v = 25.0 + 4.0 * std::sin(k * 0.01);
    const ControllerState n = step_stage(cfg, s, v, (k / 3000) % 2 == 0, 5.0);
    if (n.stage == Stage::absorption && s.stage != Stage::absorption) {
      EXPECT_GE(v, cfg.v_abs - 0.5);
    }
    EXPECT_LE(n.absorb_elapsed, cfg.absorb_duration);
    s = n;
  }
}

TEST(Lvd, Thresholds) {
  const ControllerConfig cfg;
  ControllerState s;
  s.load_connected = true;
  s = lvd_hysteresis(cfg, s, 22.8);
  EXPECT_FALSE(s.load_connected);
  s = lvd_hysteresis(cfg, s, 23.5);
  EXPECT_FALSE(s.load_connected);
  s = lvd_hysteresis(cfg, s, 24.8);
  EXPECT_TRUE(s.load_connected);
}

TEST(Lvd, TwoTogglesPerCycle) {
  const ControllerConfig cfg;
  ControllerState s;
  s.load_connected = true;
  int toggles = 0;
  for (int k = 0; k <= 4000; ++k) {
    const double v = 24.0 + 2.0 * std::cos(2.0 * M_PI * k / 1000.0);
    const ControllerState n = lvd_hysteresis(cfg, s, v);
    toggles += n.load_connected != s.load_connected;
    s = n;
  }
  EXPECT_EQ(toggles, 8);
}

TEST(Presets, NamesAndValues) {
  EXPECT_DOUBLE_EQ(preset("vrla-24").v_abs, 28.8);
  EXPECT_DOUBLE_EQ(preset("vrla-24").v_rec, 24.8);
  EXPECT_DOUBLE_EQ(preset("vrla-24-low-reconnect").v_rec, 24.2);
  EXPECT_DOUBLE_EQ(preset("gedae-configured").v_flt, 26.4);
  for (const auto& n : preset_names()) EXPECT_NO_THROW(preset(n).validate());
  EXPECT_THROW(preset("agm-48"), InvalidInput);
}

TEST(Presets, SetpointOrderValidated) {
  ControllerConfig c;
  c.v_rec = 22.0;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(GssStep, NightDischargesIntoLoad) {
  const GssSpec spec = test_gss(true, lossless());
  const GssStep step(spec, state_for(spec, Stage::night, 0.7), {0.0, 25.0});
  const GssOperatingPoint op = step.evaluate(8.33);
  EXPECT_NEAR(op.i_bat, -8.33, 1e-12);
  EXPECT_EQ(op.p_pv, 0.0);
}

TEST(GssStep, NightSelfConsumptionFromBattery) {
  const GssSpec spec = test_gss(true, ControllerConfig{});
  const GssStep step(spec, state_for(spec, Stage::night, 0.7), {0.0, 25.0});
  const GssOperatingPoint op = step.evaluate(0.0);
  EXPECT_NEAR(op.i_bat * op.v_terminal, -5.0, 1e-9);
}

TEST(GssStep, BulkChargesWithAllConvertedPower) {
  const GssSpec spec = test_gss(true, ControllerConfig{});
  const GssStep step(spec, state_for(spec, Stage::bulk, 0.5), {1000.0, 25.0 - 26.0 * 1000.0 / 800.0});
  const GssOperatingPoint op = step.evaluate(0.0);
  EXPECT_GT(op.i_bat, 0.0);
  EXPECT_LE(op.i_bat, 20.0);
  EXPECT_NEAR(op.i_bat, op.i_o, 1e-12);
  EXPECT_NEAR(op.p_pv, op.v_terminal * op.i_o + op.losses.total(), 1e-6 * op.p_pv);
}

TEST(GssStep, ReverseFlowChargesBattery) {
  const GssSpec spec = test_gss(true, ControllerConfig{});
  const GssStep step(spec, state_for(spec, Stage::night, 0.3), {0.0, 25.0});
  EXPECT_GT(step.evaluate(-4.0).i_bat, 0.0);
}

TEST(GssStep, BatteryAbsentInjectsEverything) {
  const GssSpec spec = test_gss(false, ControllerConfig{});
  const GssStep step(spec, state_for(spec, Stage::bulk, 0.0), {800.0, 25.0});
  const GssOperatingPoint op = step.inject(25.0);
  EXPECT_GT(op.i_out, 0.0);
  EXPECT_EQ(op.i_bat, 0.0);
  EXPECT_NEAR(op.i_out, op.i_o, 1e-12);
  EXPECT_DOUBLE_EQ(op.v_terminal, 25.0);
  EXPECT_THROW(step.evaluate(0.0), InvalidInput);
}
