#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rydsim/ed_engine.hpp"
#include "rydsim/spin_model.hpp"

using namespace rydsim;
using ed::SparseHamiltonian;

namespace {

ChainSpec random_chain(std::mt19937_64& rng, int N, Boundary b) {
  std::uniform_real_distribution<double> u(-2, 2);
  ChainSpec s;
  s.N = N;
  s.J = std::abs(u(rng));
  s.Jz = u(rng);
  s.Omega = u(rng);
  s.Delta = u(rng);
  s.DeltaPrime = u(rng);
  s.boundary = b;
  return s;
}

Eigen::MatrixXcd dense(const OperatorSpec& op) { return SparseHamiltonian(op).dense(); }

// Permutation matrix of a basis relabelling.
template <class F>
Eigen::MatrixXd permutation(int N, F map) {
  const int D = 1 << N;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(D, D);
  for (int s = 0; s < D; ++s) P(map(s), s) = 1.0;
  return P;
}

}  // namespace

TEST(BuildChain, TwoSiteSpectrum) {
  ChainSpec s;
  s.N = 2;
  s.J = 1.3;
  s.Jz = 1.3;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense(build_chain(s)));
  const auto ref = oracle::two_site_spectrum(1.3, 1.3);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(es.eigenvalues()[i], ref[i], 1e-12);
}

TEST(BuildChain, ZeroCouplingsGiveNullOperator) {
  ChainSpec s;
  s.N = 3;
  EXPECT_TRUE(build_chain(s).is_null());
  EXPECT_NEAR(dense(build_chain(s)).norm(), 0.0, 0.0);
}

TEST(BuildChain, PeriodicIsingNeel) {
  ChainSpec s;
  s.N = 6;
  s.Jz = 0.7;
  s.boundary = Boundary::periodic;
  const auto H = dense(build_chain(s));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  EXPECT_NEAR(es.eigenvalues()[0], -6 * 0.7, 1e-12);
  EXPECT_NEAR(es.eigenvalues()[1], -6 * 0.7, 1e-12);
  EXPECT_GT(es.eigenvalues()[2], -6 * 0.7 + 0.1);
  const int neel = 0b101010;
  EXPECT_NEAR(H(neel, neel).real(), -6 * 0.7, 1e-12);
  EXPECT_NEAR(H(neel ^ 0b111111, neel ^ 0b111111).real(), -6 * 0.7, 1e-12);
}

TEST(BuildChain, TermCountsAndErrors) {
  ChainSpec s;
  s.N = 5;
  EXPECT_EQ(build_chain(s).terms.size(), 5u + 5u + 3u * 4u);
  s.boundary = Boundary::periodic;
  EXPECT_EQ(build_chain(s).terms.size(), 5u + 5u + 3u * 5u);
  s.next_nearest = true;
  EXPECT_EQ(build_chain(s).max_range(), 4);  // wrap-around bond (3, 0)
  s.N = 1;
  EXPECT_THROW(build_chain(s), std::invalid_argument);
  s.N = 2;
  EXPECT_THROW(build_chain(s), std::invalid_argument);
  s.boundary = Boundary::open;
  s.J = std::numeric_limits<double>::infinity();
  EXPECT_THROW(build_chain(s), std::invalid_argument);
}

TEST(BuildChain, NextNearestOptIn) {
  ChainSpec s;
  s.N = 4;
  s.J = 64;
  s.Jz = 128;
  s.next_nearest = true;
  auto op = build_chain(s).canonical();
  int found = 0;
  for (const auto& t : op.terms)
    if (t.ops.size() == 2 && t.ops[1].site - t.ops[0].site == 2) {
      ++found;
      EXPECT_DOUBLE_EQ(t.coeff.real(), t.ops[0].op == Pauli::Z ? 2.0 : 1.0);
    }
  EXPECT_EQ(found, 6);
}

class ChainProperties : public ::testing::TestWithParam<int> {};

TEST_P(ChainProperties, HermitianAndSymmetric) {
  std::mt19937_64 rng(100 + GetParam());
  const int N = 3 + GetParam() % 4;
  for (Boundary b : {Boundary::open, Boundary::periodic}) {
    ChainSpec s = random_chain(rng, N, b);
    const auto op = build_chain(s);
    EXPECT_TRUE(op.is_hermitian());
    const Eigen::MatrixXcd H = dense(op);
    EXPECT_LT((H - H.adjoint()).norm(), 1e-12);

    // Omega = 0: block diagonal in total magnetization.
    s.Omega = 0;
    const Eigen::MatrixXcd H0 = dense(build_chain(s));
    for (int r = 0; r < H0.rows(); ++r)
      for (int c = 0; c < H0.cols(); ++c)
        if (std::popcount(unsigned(r)) != std::popcount(unsigned(c))) EXPECT_EQ(H0(r, c), 0.0);

    // Global flip z -> -z, y -> -y (conjugation by prod sigma^x) at Delta = Delta' = 0.
    s = random_chain(rng, N, b);
    s.Delta = s.DeltaPrime = 0;
    const Eigen::MatrixXcd Hf = dense(build_chain(s));
    const Eigen::MatrixXd X = permutation(N, [&](int q) { return q ^ ((1 << N) - 1); });
    EXPECT_LT((X * Hf * X - Hf).norm(), 1e-12);

    if (b == Boundary::periodic) {
      const Eigen::MatrixXd T = permutation(N, [&](int q) {
        return ((q << 1) | (q >> (N - 1))) & ((1 << N) - 1);
      });
      EXPECT_LT((T * H * T.transpose() - H).norm(), 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Random, ChainProperties, ::testing::Range(0, 8));

TEST(MotionalChain, UnitCouplingsReproduceEquationFourForm) {
  ChainSpec base;
  base.N = 5;
  base.J = 1.1;
  base.Jz = -0.4;
  base.Omega = 0.9;
  base.delta_zeta = 0.37;
  const double nu0_minus_2nu = 0.25;
  MotionalChainSpec m{base, BondSeries::constant(4, 1.0, 0.0, 1.0), nu0_minus_2nu / 2};
  ChainSpec eq4 = base;
  eq4.Delta = nu0_minus_2nu + 2 * base.delta_zeta;
  eq4.DeltaPrime = nu0_minus_2nu + base.delta_zeta;
  const auto a = dense(build_motional_chain(m, 0.5));
  const auto b = dense(build_chain(eq4));
  EXPECT_LT((a - b).norm(), 1e-12);
}

TEST(MotionalChain, StretchedBondAndSupport) {
  ChainSpec base;
  base.N = 3;
  base.J = 1.0;
  BondSeries bs;
  bs.times = {0.0, 1.0};
  bs.values = {{1.0, 1.0}, {1.0 / 64, 1.0 / 64}};
  MotionalChainSpec m{base, bs, 0.0};
  auto op = build_motional_chain(m, 0.3);
  double xx12 = 0;
  for (const auto& t : op.terms)
    if (t.ops.size() == 2 && t.ops[0].site == 1 && t.ops[0].op == Pauli::X) xx12 = t.coeff.real();
  EXPECT_DOUBLE_EQ(xx12, 1.0 / 64);
  EXPECT_THROW(build_motional_chain(m, 1.5), std::out_of_range);
  m.couplings.values.pop_back();
  EXPECT_THROW(build_motional_chain(m, 0.5), std::invalid_argument);
}

TEST(MotionalChain, NextNearestUsesActualSeparation) {
  ChainSpec base;
  base.N = 3;
  base.J = 64.0;
  base.next_nearest = true;
  // Bonds of 1.1 d and 0.9 d: the outer atoms are exactly 2d apart.
  BondSeries bs = BondSeries::constant(2, 1.0, 0, 1);
  bs.values[0] = {std::pow(1.1, -6), std::pow(1.1, -6)};
  bs.values[1] = {std::pow(0.9, -6), std::pow(0.9, -6)};
  auto op = build_motional_chain({base, bs, 0.0}, 0.5);
  for (const auto& t : op.terms)
    if (t.ops.size() == 2 && t.ops[1].site - t.ops[0].site == 2 && t.ops[0].op == Pauli::X)
      EXPECT_NEAR(t.coeff.real(), 1.0, 1e-12);
}

TEST(Resonance, Cases) {
  auto r = resonance_detuning(1e9, 0.0, 1.0);
  EXPECT_EQ(r.bulk_residual, 0.0);
  EXPECT_EQ(r.edge_residual, 0.0);
  r = resonance_detuning(1e9, -26.6e3, 1.0);
  EXPECT_NEAR(r.edge_residual, 26.6e3, 1e-9);
  EXPECT_NEAR(r.bulk_residual, 0.0, 1e-9);
  r = resonance_detuning(2e9, 5e3, 0.0);
  EXPECT_EQ(r.nu, 1e9);
}
