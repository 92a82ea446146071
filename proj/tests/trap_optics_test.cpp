#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rydsim/evaporation_md.hpp"
#include "rydsim/trap_optics.hpp"

using namespace rydsim;
using namespace rydsim::trap;

TEST(Ponderomotive, OneWattTenMicronWaist) {
  const double e = ponderomotive_energy(gaussian_peak_intensity(1.0, 10, 10), 1.0);
  EXPECT_NEAR(e / 14.8e6, 1.0, 0.10);
}

TEST(Ponderomotive, ScalingAndZero) {
  EXPECT_EQ(ponderomotive_energy(0.0, 1.0), 0.0);
  const double a = ponderomotive_energy(1e10, 1.0), b = ponderomotive_energy(1e10, 2.0);
  EXPECT_NEAR(b / a, 4.0, 1e-12);  // omega^-2 at fixed intensity
  EXPECT_NEAR(ponderomotive_energy(2e10, 1.0) / a, 2.0, 1e-12);
}

TEST(Lattice, SpacingFromAngle) {
  EXPECT_NEAR(lattice_spacing(1.0, 5.7), 5.0, 0.05);
  EXPECT_NEAR(lattice_spacing(1.0, 4.1), 7.0, 0.05);
}

TEST(TrapProfile, ReferenceBeamSet) {
  TrapOptions opt;
  opt.J_hz = 17e3;
  const auto r = trap_profile(chain_trap_beams(5.0), opt);
  ASSERT_TRUE(r.bound) << r.diagnostic;
  EXPECT_NEAR(r.nu_X / 24e3, 1.0, 0.15);
  EXPECT_NEAR(r.nu_Y / 12e3, 1.0, 0.15);
  EXPECT_NEAR(r.nu_Z / 12e3, 1.0, 0.15);
  EXPECT_NEAR(r.lattice_spacing, 5.0, 0.05);
  EXPECT_LT(r.fit_change, 1e-3);
  EXPECT_NEAR(std::abs(r.x0), 0.0, 1e-6);
  // A sinusoidal well of this frequency has a fixed depth.
  const double expected = md::lattice_depth_for_frequency(r.nu_X, r.lattice_spacing, constants::rb87_mass);
  EXPECT_NEAR(r.depth_longitudinal / expected, 1.0, 0.05);
  EXPECT_GT(r.depth_transverse, 0.0);
}

TEST(TrapProfile, WideLatticeSpacing) {
  const auto r = trap_profile(chain_trap_beams(7.0));
  ASSERT_TRUE(r.bound);
  EXPECT_NEAR(r.lattice_spacing, 7.0, 0.05);
}

TEST(TrapProfile, PlainGaussianIsNotBound) {
  BeamSpec g;
  g.kind = BeamKind::gaussian;
  g.power = 1.0;
  g.waist = 10.0;
  const auto r = trap_profile({g});
  EXPECT_FALSE(r.bound);
  EXPECT_FALSE(r.diagnostic.empty());
}

TEST(OrbitAverage, OffsetAndRatio) {
  const auto r = trap_profile(chain_trap_beams(5.0));
  const auto oa = orbit_average(r, 50, 48);
  EXPECT_NEAR(oa.offset / 22e3, 1.0, 0.30);
  const double o48 = orbit_offset(r.nu_X, r.nu_Y, 48);
  EXPECT_NEAR(oa.offset / o48, std::pow(50.0 / 48.0, 4), 1e-12);
  EXPECT_NEAR(oa.differential, oa.offset - o48, 1e-9);
  EXPECT_EQ(orbit_offset(0, 0, 50), 0.0);
}

TEST(OrbitAverage, RingQuadratureMatchesFormula) {
  const auto beams = chain_trap_beams(5.0);
  const auto r = trap_profile(beams);
  const double ring = ring_average(beams, 50, r.x0, r.y0, r.z0) - total_potential(beams, r.x0, r.y0, r.z0);
  EXPECT_NEAR(ring / r.orbit_offset, 1.0, 0.05);
}

TEST(MotionalCoupling, Values) {
  const auto m = motional_coupling(17e3, 5.0, 50.0, 24e3);
  EXPECT_NEAR(m.eta, 0.06, 1e-12);
  EXPECT_NEAR(m.beta / 0.1, 1.0, 0.2);
  EXPECT_EQ(motional_coupling(0.0, 5.0, 50.0, 24e3).beta, 0.0);
}

TEST(PotentialMap, NonNegative) {
  std::ostringstream os;
  write_potential_map(os, chain_trap_beams(5.0), -10, 10, 21, -10, 10, 21);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    const double v = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(v, 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, 21 * 21);
}
