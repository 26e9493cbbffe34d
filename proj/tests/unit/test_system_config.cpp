#include <gtest/gtest.h>

#include <random>
#include <string>

#include "nanogrid/system_config.hpp"

using namespace nanogrid;
using namespace nanogrid::config;

namespace {

SizingInput reference_input() {
  SizingInput in;
  in.daily_dc_load = 1.63;
  in.charge_discharge_eff = 0.86;
  in.hsp_min = 4.2;
  in.max_depth_of_discharge = 0.8;
  in.safety_factor = 1.25;
  in.bank_voltage = 24.0;
  return in;
}

std::string zero_schedule(int rows, int cols) {
  std::string row;
  for (int c = 0; c < cols; ++c) row += c ? " 0" : "0";
  std::string out;
  for (int r = 0; r < rows; ++r) out += row + "\n";
  return out;
}

}  // namespace

TEST(Sizing, ReferenceSystem) {
  const SizingResult r = size_system(reference_input());
  EXPECT_NEAR(r.autonomy_days, 2.564, 1e-12);
  EXPECT_NEAR(r.corrected_load, 1.63 / 0.86, 1e-12);
  EXPECT_NEAR(r.bank_capacity_ah, 256.0, 256.0 * 0.02);
  EXPECT_NEAR(r.pv_rated_wp, 570.0, 570.0 * 0.02);
  EXPECT_NEAR(r.bank_capacity_ah, 253.1, 0.05);
  EXPECT_NEAR(r.pv_rated_wp, 564.1, 0.05);
  EXPECT_NEAR(r.bank_capacity_wh, r.bank_capacity_ah * 24.0, 1e-9);
}

TEST(Sizing, UnitFactorsCollapse) {
  SizingInput in = reference_input();
  in.charge_discharge_eff = 1.0;
  in.safety_factor = 1.0;
  const SizingResult r = size_system(in);
  EXPECT_DOUBLE_EQ(r.corrected_load, 1.63);
  EXPECT_NEAR(r.pv_rated_wp, 1630.0 / 4.2, 1e-9);
}

TEST(Sizing, SunnySiteClampsAutonomy) {
  SizingInput in = reference_input();
  in.hsp_min = 9.8;
  const SizingResult r = size_system(in);
  EXPECT_TRUE(r.autonomy_clamped);
  EXPECT_DOUBLE_EQ(r.autonomy_days, 1.0);
  EXPECT_FALSE(size_system(reference_input()).autonomy_clamped);
}

TEST(Sizing, Monotone) {
  const SizingResult base = size_system(reference_input());
  SizingInput more_load = reference_input();
  more_load.daily_dc_load = 2.0;
  EXPECT_GE(size_system(more_load).bank_capacity_wh, base.bank_capacity_wh);
  SizingInput less_sun = reference_input();
  less_sun.hsp_min = 3.0;  // more autonomy days
  EXPECT_GE(size_system(less_sun).bank_capacity_wh, base.bank_capacity_wh);
  EXPECT_GE(size_system(less_sun).pv_rated_wp, base.pv_rated_wp);
  SizingInput deeper = reference_input();
  deeper.max_depth_of_discharge = 0.9;
  EXPECT_LE(size_system(deeper).bank_capacity_wh, base.bank_capacity_wh);
}

TEST(Sizing, InvalidInputs) {
  SizingInput in = reference_input();
  in.daily_dc_load = -1.0;
  EXPECT_THROW(size_system(in), InvalidInput);
  in = reference_input();
  in.max_depth_of_discharge = 1.5;
  EXPECT_THROW(size_system(in), InvalidInput);
}

TEST(Loads, LampResistance) {
  EXPECT_DOUBLE_EQ(lamp_resistance(24.0, 40.0), 14.4);
  EXPECT_DOUBLE_EQ(lamp_resistance(24.0, 24.0), 24.0);
  EXPECT_DOUBLE_EQ(lamp_resistance(12.0, 40.0), 3.6);
  EXPECT_THROW(lamp_resistance(24.0, 0.0), InvalidInput);
}

TEST(Loads, BankEquivalent) {
  LoadBankSpec five{5, 24.0, 40.0, 0, kFanResistance, {}};
  EXPECT_NEAR(*bank_equivalent_resistance(five, all_on(five)), 2.88, 1e-12);
  LoadBankSpec fan{0, 24.0, 40.0, 1, kFanResistance, {}};
  EXPECT_DOUBLE_EQ(*bank_equivalent_resistance(fan, {true}), 62.24);
  EXPECT_FALSE(bank_equivalent_resistance(five, std::vector<bool>(5, false)).has_value());
  EXPECT_THROW(bank_equivalent_resistance(five, {true}), InvalidInput);
}

TEST(Loads, ParallelNeverExceedsSmallestActive) {
  const LoadBankSpec bank{5, 24.0, 40.0, 1, kFanResistance, {}};
  for (int mask = 1; mask < 64; ++mask) {
    std::vector<bool> on(6);
    double smallest = 1e300;
    for (int k = 0; k < 6; ++k) {
      on[static_cast<std::size_t>(k)] = (mask >> k) & 1;
      if (on[static_cast<std::size_t>(k)]) smallest = std::min(smallest, bank.device_resistance(k));
    }
    EXPECT_LE(*bank_equivalent_resistance(bank, on), smallest);
  }
}

TEST(Schedule, AllZeros) {
  const LoadSchedule s = parse_load_schedule(zero_schedule(1440, 16));
  EXPECT_EQ(s.rows.size(), 1440u);
  EXPECT_EQ(s.columns(), 16u);
  for (int m = 0; m < 1440; ++m)
    for (int c = 0; c < 16; ++c) ASSERT_FALSE(s.on(m, c));
}

TEST(Schedule, SingleDeviceOn) {
  LoadSchedule s = parse_load_schedule(zero_schedule(1440, 6));
  s.rows[420][3] = 1;
  const LoadSchedule t = parse_load_schedule(serialize_load_schedule(s));
  EXPECT_TRUE(t.on(420, 3));
  EXPECT_FALSE(t.on(421, 3));
  const LoadBankSpec bank{5, 24.0, 40.0, 1, kFanResistance, {}};
  EXPECT_EQ(bank_mask(bank, t, 420), (std::vector<bool>{false, false, false, true, false, false}));
}

TEST(Schedule, CommaSeparatedAndComments) {
  std::string text = "# relay states\n";
  for (int r = 0; r < 1440; ++r) text += "0,1,0\n";
  const LoadSchedule s = parse_load_schedule(text);
  EXPECT_TRUE(s.on(0, 1));
}

TEST(Schedule, MissingRowNamed) {
  try {
    parse_load_schedule(zero_schedule(1439, 4));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("1 missing"), std::string::npos) << e.what();
  }
}

TEST(Schedule, BadTokenAndRaggedRow) {
  std::string text = zero_schedule(1440, 4);
  std::string bad = text;
  bad.replace(bad.find("0 0 0 0\n", 8 * 10), 7, "0 x 0 0");
  try {
    parse_load_schedule(bad, "s.txt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 11);
    EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos);
  }
  std::string ragged = text;
  ragged.replace(8 * 5, 8, "0 0 0\n");
  try {
    parse_load_schedule(ragged, "s.txt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 6);
  }
}

TEST(Schedule, RoundTripsExactly) {
  std::mt19937 rng(3);
  LoadSchedule s;
  for (int r = 0; r < 1440; ++r) {
    std::vector<std::int64_t> row;
    for (int c = 0; c < 17; ++c) row.push_back(static_cast<std::int64_t>(rng() % 5) - 1);
    s.rows.push_back(row);
  }
  const std::string text = serialize_load_schedule(s);
  EXPECT_EQ(serialize_load_schedule(parse_load_schedule(text)), text);
  EXPECT_EQ(parse_load_schedule(text).rows, s.rows);
}

TEST(Irradiance, ReferenceModule) {
  EXPECT_DOUBLE_EQ(irradiance_from_isc(8.081, 8.081), 1000.0);
  EXPECT_DOUBLE_EQ(irradiance_from_isc(4.0405, 8.081), 500.0);
  EXPECT_DOUBLE_EQ(irradiance_from_isc(0.0, 8.081), 0.0);
  EXPECT_THROW(irradiance_from_isc(1.0, 0.0), InvalidInput);
}

TEST(Consumption, AcToDc) {
  EXPECT_NEAR(dc_equivalent_consumption(27.0, ApplianceKind::electronic), 21.486, 1e-3);
  EXPECT_NEAR(dc_equivalent_consumption(53.1, ApplianceKind::motor), 54.18, 1e-2);
  for (auto k : {ApplianceKind::electronic, ApplianceKind::motor, ApplianceKind::inverter_ac})
    EXPECT_EQ(dc_equivalent_consumption(0.0, k), 0.0);
  EXPECT_THROW(dc_equivalent_consumption(-1.0, ApplianceKind::motor), InvalidInput);
}
