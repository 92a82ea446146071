#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "rydsim/pair_interaction.hpp"

using namespace rydsim;

TEST(SpinCouplings, ReferenceValuesAtFiveMicrons) {
  const auto s = spin_couplings(CouplingSet::reference(), 5.0);
  // 0.539e9 / 2 / 5^6
  EXPECT_NEAR(s.J, 17248.0, 1e-9 * 17248.0);
  EXPECT_NEAR(s.Jz, 1e9 * (2.2 - 2 * 2.66 + 3.03) / 4 / 15625.0, 1e-9);
  EXPECT_NEAR(s.Jz, -1440.0, 1.0);
  EXPECT_NEAR(s.delta_zeta, -26560.0, 1.0);
  EXPECT_NEAR(s.delta_E, 1e9 * (2.2 + 3.03 - 2 * 0.539) / 4 / 15625.0, 1e-9);
  EXPECT_DOUBLE_EQ(s.spacing_d, 5.0);
}

TEST(SpinCouplings, SevenMicrons) {
  const auto s = spin_couplings(CouplingSet::reference(), 7.0);
  EXPECT_NEAR(s.J, 0.539e9 / 2 / 117649.0, 1e-9);
  EXPECT_NEAR(s.J / 2300.0, 1.0, 0.02);
}

TEST(SpinCouplings, RejectsNonPositiveSpacing) {
  EXPECT_THROW(spin_couplings(CouplingSet::reference(), 0.0), std::invalid_argument);
  EXPECT_THROW(spin_couplings(CouplingSet::reference(), -1.0), std::invalid_argument);
  auto c = CouplingSet::reference();
  c.c6_4848 = std::nan("");
  EXPECT_THROW(spin_couplings(c, 5.0), std::invalid_argument);
}

TEST(SpinCouplings, SixthPowerScalingIsExact) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5, 5), ud(1, 20);
  for (int i = 0; i < 100; ++i) {
    CouplingSet c{u(rng), u(rng), u(rng), u(rng), 0, 0};
    const double d = ud(rng);
    const auto a = spin_couplings(c, d), b = spin_couplings(c, 2 * d);
    EXPECT_NEAR(b.J, a.J / 64, 1e-14 * std::abs(a.J));
    EXPECT_NEAR(b.Jz, a.Jz / 64, 1e-14 * std::abs(a.Jz));
    EXPECT_NEAR(b.delta_zeta, a.delta_zeta / 64, 1e-14 * std::abs(a.delta_zeta));
  }
}

TEST(SpinCouplings, SignOfA6IsIrrelevantAndJNonNegative) {
  auto c = CouplingSet::reference();
  const double J1 = spin_couplings(c, 6).J;
  c.a6_4850 = -c.a6_4850;
  EXPECT_EQ(spin_couplings(c, 6).J, J1);
  EXPECT_GE(J1, 0.0);
}

TEST(SpinCouplings, LinearInC6) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 50; ++i) {
    CouplingSet a{u(rng), u(rng), u(rng), 0, 0, 0}, b{u(rng), u(rng), u(rng), 0, 0, 0};
    const double alpha = u(rng), beta = u(rng);
    CouplingSet mix{alpha * a.c6_4848 + beta * b.c6_4848, alpha * a.c6_4850 + beta * b.c6_4850,
                    alpha * a.c6_5050 + beta * b.c6_5050, 0, 0, 0};
    const auto sa = spin_couplings(a, 5), sb = spin_couplings(b, 5), sm = spin_couplings(mix, 5);
    EXPECT_NEAR(sm.Jz, alpha * sa.Jz + beta * sb.Jz, 1e-6);
    EXPECT_NEAR(sm.delta_zeta, alpha * sa.delta_zeta + beta * sb.delta_zeta, 1e-6);
  }
}

TEST(ExchangeTime, Values) {
  EXPECT_NEAR(exchange_time(17e3), 14.7e-6, 0.02 * 14.7e-6);
  EXPECT_NEAR(exchange_time(2.3e3), 108.7e-6, 1e-7);
  EXPECT_THROW(exchange_time(0.0), std::invalid_argument);
  EXPECT_THROW(exchange_time(-1.0), std::invalid_argument);
}

TEST(FieldCurve, SingleRowAndIdentity) {
  FieldCurve c({{6, 14, -1.6, 1.68}});
  auto s = couplings_at_fields(c, 6, 14, 1000.0);
  EXPECT_DOUBLE_EQ(s.Jz / s.J, -1.6);
  EXPECT_DOUBLE_EQ(s.delta_zeta, 1680.0);
  EXPECT_DOUBLE_EQ(s.J, 1000.0);
}

TEST(FieldCurve, MidpointIsMean) {
  FieldCurve c({{8, 13, 1.0, 4.0}, {4, 13, -1.0, 2.0}, {4, 14, 9, 9}});
  auto [jz, dz] = c.ratios_at(6, 13);
  EXPECT_DOUBLE_EQ(jz, 0.0);
  EXPECT_DOUBLE_EQ(dz, 3.0);
  EXPECT_DOUBLE_EQ(c.rows().front().F, 4.0);
}

TEST(FieldCurve, RejectsExtrapolation) {
  FieldCurve c({{4, 13, -1.0, 2.0}, {8, 13, 1.0, 4.0}});
  EXPECT_THROW(c.ratios_at(9, 13), std::out_of_range);
  EXPECT_THROW(c.ratios_at(3, 13), std::out_of_range);
  EXPECT_THROW(c.ratios_at(6, 12), std::out_of_range);
  EXPECT_THROW(FieldCurve({{4, 13, 0, 0}, {4, 13, 1, 1}}), std::invalid_argument);
}

TEST(FieldCurve, CsvParsing) {
  std::istringstream ok("F_Vcm,B_gauss,Jz_over_J,dzeta_over_J\n6,14,-1.6,1.68\n8,14,0.5,1.0\n");
  auto c = FieldCurve::from_csv(ok);
  EXPECT_EQ(c.rows().size(), 2u);
  EXPECT_NEAR(c.ratios_at(7, 14).first, -0.55, 1e-12);

  std::istringstream bad_header("F,B,x,y\n1,2,3,4\n");
  EXPECT_THROW(FieldCurve::from_csv(bad_header), std::invalid_argument);
  std::istringstream bad_cell("F_Vcm,B_gauss,Jz_over_J,dzeta_over_J\n6,14,abc,1\n");
  try {
    FieldCurve::from_csv(bad_cell);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}
