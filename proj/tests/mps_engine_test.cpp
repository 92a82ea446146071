#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rydsim/ed_engine.hpp"
#include "rydsim/mps_engine.hpp"

using namespace rydsim;

namespace {

ChainSpec xxz(int N, double J, double Jz, double Omega) {
  ChainSpec s;
  s.N = N;
  s.J = J;
  s.Jz = Jz;
  s.Omega = Omega;
  return s;
}

double ed_energy(const OperatorSpec& op) { return ed::ground_state(op, 1).values[0]; }

}  // namespace

TEST(Mpo, ContractsToTheSameMatrix) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  OperatorSpec op{5, {}};
  for (int j = 0; j < 5; ++j) op.add(u(rng), {{j, Pauli::X}}), op.add(u(rng), {{j, Pauli::Z}});
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b)
      for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) op.add(u(rng), {{a, p}, {b, p}});
  op.add(u(rng), {{1, Pauli::X}, {3, Pauli::Z}});
  const Eigen::MatrixXcd H = ed::SparseHamiltonian(op).dense();
  auto m = mps::random_mps(5, 4, rng);
  const Eigen::VectorXd v = mps::to_dense(m);
  const double ref = (v.cast<std::complex<double>>().dot(H * v.cast<std::complex<double>>())).real() / v.squaredNorm();
  EXPECT_NEAR(mps::energy(m, mps::build_mpo(op)), ref, 1e-10 * std::abs(ref));
}

TEST(Mpo, RejectsComplexHamiltonian) {
  OperatorSpec op{3, {}};
  op.add(1.0, {{0, Pauli::Y}});
  EXPECT_THROW(mps::build_mpo(op), std::invalid_argument);
}

TEST(Dmrg, MatchesExactDiagonalization) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 4; ++trial) {
    ChainSpec s = xxz(10, std::abs(u(rng)) + 0.2, 2 * u(rng), 2 * std::abs(u(rng)));
    s.Delta = 0.3 * u(rng);
    s.DeltaPrime = 0.3 * u(rng);
    const auto op = build_chain(s);
    const auto res = mps::dmrg_ground_state(op);
    const double ref = ed_energy(op);
    EXPECT_TRUE(res.converged);
    EXPECT_NEAR(res.energy, ref, 1e-8 * std::abs(ref)) << trial;
    EXPECT_GE(res.energy, ref - 1e-10 * std::abs(ref));
  }
}

TEST(Dmrg, ClassicalIsingIsExact) {
  const int N = 16;
  const auto res = mps::dmrg_ground_state(build_chain(xxz(N, 0, 2.5, 0)));
  EXPECT_NEAR(res.energy, -(N - 1) * 2.5, 1e-10);
  const auto o = mps::measure(res.state, 7);
  EXPECT_NEAR(o.Oz, -1.0, 1e-8);
}

TEST(Dmrg, PolarizedLimitPerturbation) {
  // Omega/4J = 10, Jz = 0: E = -N Omega/2 + (N-1) J - (N-1) J^2 / (2 Omega) + O(J^3/Omega^2).
  const int N = 20;
  const double J = 1.0, Omega = 40.0;
  const auto res = mps::dmrg_ground_state(build_chain(xxz(N, J, 0, Omega)));
  const double pt2 = -N * Omega / 2 + (N - 1) * J - (N - 1) * J * J / (2 * Omega);
  EXPECT_NEAR(res.energy, pt2, (N - 1) * J * std::pow(J / Omega, 2));
  EXPECT_TRUE(res.converged);
}

TEST(Dmrg, CanonicalFormAndLocalY) {
  auto res = mps::dmrg_ground_state(build_chain(xxz(14, 1, 0.5, 1.2)));
  EXPECT_LT(mps::canonical_defect(res.state), 1e-10);
  mps::canonicalize(res.state, 7);
  EXPECT_LT(mps::canonical_defect(res.state), 1e-10);
  const auto o = mps::measure(res.state, 5);
  EXPECT_LT(o.max_abs_local_y, 1e-12);
}

TEST(Dmrg, ObservablesMatchExactDiagonalization) {
  const int N = 12;
  const auto op = build_chain(xxz(N, 1, -0.7, 1.6));
  const auto res = mps::dmrg_ground_state(op);
  const auto ev = ed::ground_state(op, 1);
  const auto e = ed::measure({N, ev.vectors[0]}, ev.vectors, 5);
  const auto m = mps::measure(res.state, 5);
  EXPECT_NEAR(m.Mx, e.Mx, 1e-6);
  EXPECT_NEAR(m.Mz, e.Mz, 1e-6);
  EXPECT_NEAR(m.Oy, e.Oy, 1e-6);
  EXPECT_NEAR(m.Oz, e.Oz, 1e-6);
  EXPECT_NEAR(m.S_vN, e.S_vN, 1e-6);
}

TEST(Dmrg, EnergyMonotoneInBondDimension) {
  const auto op = build_chain(xxz(24, 1, 0.2, 0.9));
  double prev = std::numeric_limits<double>::infinity();
  for (int chi : {8, 16, 32}) {
    mps::DmrgOptions o;
    o.chi_max = chi;
    const double E = mps::dmrg_ground_state(op, o).energy;
    EXPECT_LE(E, prev + 1e-10 * std::abs(E)) << chi;
    prev = E;
  }
}

TEST(Dmrg, SweepEnergiesNonIncreasingAfterNoise) {
  mps::DmrgOptions o;
  const auto res = mps::dmrg_ground_state(build_chain(xxz(20, 1, 1.3, 1.0)), o);
  for (std::size_t k = o.noise.size() + 1; k < res.sweep_energies.size(); ++k)
    EXPECT_LE(res.sweep_energies[k], res.sweep_energies[k - 1] + 1e-9 * std::abs(res.sweep_energies[k]));
}

TEST(Dmrg, ReportsNonConvergence) {
  mps::DmrgOptions o;
  o.max_sweeps = 1;
  o.noise.clear();
  const auto res = mps::dmrg_ground_state(build_chain(xxz(16, 1, 0.3, 1.0)), o);
  EXPECT_FALSE(res.converged);
  o.chi_max = 4;
  EXPECT_THROW(mps::dmrg_ground_state(build_chain(xxz(16, 1, 0.3, 1.0)), o), std::invalid_argument);
}

TEST(Dmrg, NeelCorrelatorIsSeedIndependent) {
  // Deep N_z phase: the correlator does not care whether the state is a
  // single Neel pattern or the symmetric superposition.
  const int N = 40;
  const auto op = build_chain(xxz(N, 1, 3.0, 2.0));
  std::vector<double> oz;
  for (std::uint64_t seed : {1u, 2u}) {
    mps::DmrgOptions o;
    o.chi_max = 32;
    o.seed = seed;
    const auto res = mps::dmrg_ground_state(op, o);
    const auto m = mps::measure(res.state, 17);
    oz.push_back(m.Oz);
    EXPECT_LT(m.Oz, -0.6) << seed;
  }
  EXPECT_NEAR(oz[0], oz[1], 1e-4);
}

TEST(PhaseScan, EmptyGridAndErrorRows) {
  mps::PhaseScanRequest req;
  EXPECT_THROW(mps::phase_scan(req), std::invalid_argument);
  req.omega_over_4J = {1.0};
  req.Jz_over_J = {0.0};
  req.N = 8;
  req.r = 9;  // out of range: recorded, scan continues
  const auto rows = mps::phase_scan(req);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].error.empty());
}
