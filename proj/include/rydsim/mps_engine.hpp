#pragma once

// Two-site DMRG for open chains with real Hamiltonians.
//
// Site tensors are stored as two matrices per site, A[i][s] of shape
// D_i x D_{i+1}, with s = 0 for spin up. The MPO is built from the symbolic
// term list; sigma^y enters through the real matrix i sigma^y.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/parallel.hpp"
#include "rydsim/spin_model.hpp"

namespace rydsim::mps {

using Matrix = Eigen::MatrixXd;
using Op2 = Eigen::Matrix2d;

/// Real representative of a Pauli matrix: sigma^y is replaced by i sigma^y.
inline Op2 real_pauli(Pauli p) {
  Op2 m;
  switch (p) {
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, 1, -1, 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

struct MpoEntry {
  int a = 0, b = 0;  // left and right channel
  Op2 op = Op2::Zero();
};

struct MpoSite {
  int wl = 2, wr = 2;
  std::vector<MpoEntry> entries;
};

/// Channel 0 = nothing placed yet, channel 1 = term completed, channels >= 2
/// carry one open two-site term each.
struct Mpo {
  int N = 0;
  std::vector<MpoSite> sites;
};

inline Mpo build_mpo(const OperatorSpec& op) {
  const int N = op.n_sites;
  if (N < 2) throw std::invalid_argument("build_mpo: need at least two sites");
  struct Pair {
    int a, b;
    Op2 A, B;
    double c;
  };
  std::vector<Op2> single(N, Op2::Zero());
  double constant = 0.0;
  std::vector<Pair> pairs;
  double scale = std::max(1.0, op.max_abs_coefficient());
  for (const auto& t : op.terms) {
    if (t.ops.size() > 2) throw std::invalid_argument("build_mpo: terms act on at most two sites");
    int ny = 0;
    for (const auto& o : t.ops) ny += o.op == Pauli::Y;
    // prod sigma^y = (-i)^ny prod (i sigma^y)
    static const std::complex<double> mipow[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
    const std::complex<double> c = t.coeff * mipow[ny % 4];
    if (std::abs(c.imag()) > 1e-14 * scale)
      throw std::invalid_argument("build_mpo: Hamiltonian is not real");
    if (c.real() == 0.0) continue;
    if (t.ops.empty())
      constant += c.real();
    else if (t.ops.size() == 1)
      single[t.ops[0].site] += c.real() * real_pauli(t.ops[0].op);
    else
      pairs.push_back({t.ops[0].site, t.ops[1].site, real_pauli(t.ops[0].op),
                       real_pauli(t.ops[1].op), c.real()});
  }
  if (constant != 0.0) single[0] += constant * Op2::Identity();

  // channel[p][k] = channel index of pair p on bond k (between sites k-1, k).
  std::vector<int> width(N + 1, 2);
  std::vector<std::vector<int>> channel(pairs.size(), std::vector<int>(N + 1, -1));
  for (std::size_t p = 0; p < pairs.size(); ++p)
    for (int k = pairs[p].a + 1; k <= pairs[p].b; ++k) channel[p][k] = width[k]++;

  Mpo mpo{N, std::vector<MpoSite>(N)};
  for (int i = 0; i < N; ++i) {
    auto& s = mpo.sites[i];
    s.wl = width[i];
    s.wr = width[i + 1];
    s.entries.push_back({0, 0, Op2::Identity()});
    s.entries.push_back({1, 1, Op2::Identity()});
    if (!single[i].isZero(0.0)) s.entries.push_back({0, 1, single[i]});
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto& q = pairs[p];
      if (q.a == i) s.entries.push_back({0, channel[p][i + 1], q.A});
      if (q.b == i) s.entries.push_back({channel[p][i], 1, q.c * q.B});
      if (q.a < i && i < q.b) s.entries.push_back({channel[p][i], channel[p][i + 1], Op2::Identity()});
    }
  }
  return mpo;
}

struct MpsState {
  int N = 0;
  std::vector<std::array<Matrix, 2>> A;
  int center = 0;

  int bond_dim(int k) const { return k == N ? 1 : static_cast<int>(A[k][0].rows()); }
  int max_bond() const {
    int m = 1;
    for (int k = 0; k <= N; ++k) m = std::max(m, bond_dim(k));
    return m;
  }
};

inline MpsState random_mps(int N, int D, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MpsState m;
  m.N = N;
  m.A.resize(N);
  std::vector<int> dims(N + 1, 1);
  for (int k = 1; k < N; ++k) {
    const double cap_left = std::pow(2.0, k), cap_right = std::pow(2.0, N - k);
    dims[k] = static_cast<int>(std::min<double>({static_cast<double>(D), cap_left, cap_right}));
  }
  for (int i = 0; i < N; ++i)
    for (int s = 0; s < 2; ++s) {
      m.A[i][s].resize(dims[i], dims[i + 1]);
      for (Eigen::Index r = 0; r < m.A[i][s].rows(); ++r)
        for (Eigen::Index c = 0; c < m.A[i][s].cols(); ++c) m.A[i][s](r, c) = g(rng);
    }
  return m;
}

namespace detail {

// Row-grouped site matrix: rows (s, alpha), columns beta.
inline Matrix stack_rows(const std::array<Matrix, 2>& A) {
  Matrix M(2 * A[0].rows(), A[0].cols());
  M << A[0], A[1];
  return M;
}

// Column-grouped site matrix: rows alpha, columns (s, beta).
inline Matrix stack_cols(const std::array<Matrix, 2>& A) {
  Matrix M(A[0].rows(), 2 * A[0].cols());
  M << A[0], A[1];
  return M;
}

}  // namespace detail

/// Brings sites [0, c) into left-canonical and (c, N) into right-canonical
/// form; the norm sits on site c, which is normalized to one.
inline void canonicalize(MpsState& m, int c) {
  if (c < 0 || c >= m.N) throw std::out_of_range("canonicalize: center out of range");
  for (int i = 0; i < c; ++i) {
    const Matrix M = detail::stack_rows(m.A[i]);
    Eigen::HouseholderQR<Matrix> qr(M);
    const Eigen::Index k = std::min(M.rows(), M.cols());
    const Matrix Q = qr.householderQ() * Matrix::Identity(M.rows(), k);
    const Matrix R = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
    const Eigen::Index Dl = m.A[i][0].rows();
    m.A[i][0] = Q.topRows(Dl);
    m.A[i][1] = Q.bottomRows(Dl);
    for (int s = 0; s < 2; ++s) m.A[i + 1][s] = R * m.A[i + 1][s];
  }
  for (int i = m.N - 1; i > c; --i) {
    const Matrix M = detail::stack_cols(m.A[i]);
    Eigen::HouseholderQR<Matrix> qr(M.transpose());
    const Eigen::Index k = std::min(M.rows(), M.cols());
    const Matrix Q = qr.householderQ() * Matrix::Identity(M.cols(), k);
    const Matrix R = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
    const Eigen::Index Dr = m.A[i][0].cols();
    m.A[i][0] = Q.topRows(Dr).transpose();
    m.A[i][1] = Q.bottomRows(Dr).transpose();
    for (int s = 0; s < 2; ++s) m.A[i - 1][s] = m.A[i - 1][s] * R.transpose();
  }
  const double n = std::sqrt(m.A[c][0].squaredNorm() + m.A[c][1].squaredNorm());
  if (!(n > 0)) throw std::runtime_error("canonicalize: zero state");
  for (int s = 0; s < 2; ++s) m.A[c][s] /= n;
  m.center = c;
}

/// Largest deviation of the left/right isometry conditions around the center.
inline double canonical_defect(const MpsState& m) {
  double d = 0.0;
  for (int i = 0; i < m.center; ++i) {
    const Matrix M = detail::stack_rows(m.A[i]);
    d = std::max(d, (M.transpose() * M - Matrix::Identity(M.cols(), M.cols())).cwiseAbs().maxCoeff());
  }
  for (int i = m.center + 1; i < m.N; ++i) {
    const Matrix M = detail::stack_cols(m.A[i]);
    d = std::max(d, (M * M.transpose() - Matrix::Identity(M.rows(), M.rows())).cwiseAbs().maxCoeff());
  }
  return d;
}

/// Schmidt coefficients across bond k (between sites k-1 and k), 1 <= k < N.
inline Eigen::VectorXd schmidt_values(MpsState m, int k) {
  if (k < 1 || k >= m.N) throw std::out_of_range("schmidt_values: bond out of range");
  canonicalize(m, k);
  Eigen::BDCSVD<Matrix> svd(detail::stack_cols(m.A[k]));
  return svd.singularValues();
}

inline double entanglement_entropy(const MpsState& m, int k) {
  const Eigen::VectorXd s = schmidt_values(m, k);
  double S = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double p = s[i] * s[i];
    if (p > 1e-300) S -= p * std::log(p);
  }
  return std::max(0.0, S);
}

/// Full amplitude vector (index bit j = site j); small N only.
inline Eigen::VectorXd to_dense(const MpsState& m) {
  if (m.N > 20) throw std::invalid_argument("to_dense: too many sites");
  std::vector<Matrix> rows = {Matrix::Ones(1, 1)};  // indexed by configuration of sites < i
  for (int i = 0; i < m.N; ++i) {
    std::vector<Matrix> next(rows.size() * 2);
    for (std::size_t c = 0; c < rows.size(); ++c)
      for (int s = 0; s < 2; ++s) next[c + (static_cast<std::size_t>(s) << i)] = rows[c] * m.A[i][s];
    rows.swap(next);
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) v[static_cast<Eigen::Index>(c)] = rows[c](0, 0);
  return v;
}

/// Identity transfer environments, for expectation values of site operators.
class Transfer {
 public:
  explicit Transfer(const MpsState& m) : m_(m), left_(m.N + 1), right_(m.N + 1) {
    left_[0] = Matrix::Ones(1, 1);
    for (int i = 0; i < m.N; ++i) left_[i + 1] = step_left(left_[i], i, Op2::Identity());
    right_[m.N] = Matrix::Ones(1, 1);
    for (int i = m.N - 1; i >= 0; --i) right_[i] = step_right(right_[i + 1], i, Op2::Identity());
    norm2_ = left_[m.N](0, 0);
  }

  double norm2() const { return norm2_; }

  /// <prod_k O_k> / <psi|psi> for operators on distinct sites.
  double expect(std::vector<std::pair<int, Op2>> ops) const {
    if (ops.empty()) return 1.0;
    std::sort(ops.begin(), ops.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t k = 0; k < ops.size(); ++k) {
      if (ops[k].first < 0 || ops[k].first >= m_.N) throw std::out_of_range("expect: bad site");
      if (k && ops[k].first == ops[k - 1].first) throw std::invalid_argument("expect: repeated site");
    }
    Matrix E = left_[ops.front().first];
    std::size_t k = 0;
    for (int i = ops.front().first; i <= ops.back().first; ++i) {
      const bool here = k < ops.size() && ops[k].first == i;
      E = step_left(E, i, here ? ops[k].second : Op2::Identity());
      if (here) ++k;
    }
    return E.cwiseProduct(right_[ops.back().first + 1]).sum() / norm2_;
  }

 private:
  Matrix step_left(const Matrix& E, int i, const Op2& O) const {
    Matrix out = Matrix::Zero(m_.A[i][0].cols(), m_.A[i][0].cols());
    for (int sp = 0; sp < 2; ++sp)
      for (int s = 0; s < 2; ++s)
        if (O(sp, s) != 0.0) out.noalias() += O(sp, s) * (m_.A[i][sp].transpose() * E * m_.A[i][s]);
    return out;
  }
  Matrix step_right(const Matrix& E, int i, const Op2& O) const {
    Matrix out = Matrix::Zero(m_.A[i][0].rows(), m_.A[i][0].rows());
    for (int sp = 0; sp < 2; ++sp)
      for (int s = 0; s < 2; ++s)
        if (O(sp, s) != 0.0) out.noalias() += O(sp, s) * (m_.A[i][sp] * E * m_.A[i][s].transpose());
    return out;
  }

  const MpsState& m_;
  std::vector<Matrix> left_, right_;
  double norm2_ = 1.0;
};

struct Observables {
  double Mx = 0.0, Mz = 0.0, Nz_staggered = 0.0;
  double max_abs_local_y = 0.0;  // |<sigma^y_j>|, zero for real states
  double Oy = 0.0, Oz = 0.0;
  double S_vN = 0.0;
};

/// Eq.-style observables: O from the correlator between j = ceil(N/2) and
/// j + r (1-based), S_vN at the half-chain bond.
inline Observables measure(const MpsState& m, int r) {
  const int N = m.N;
  const int j = (N + 1) / 2 - 1;
  if (r < 1 || j + r >= N) throw std::out_of_range("measure: correlation range out of bounds");
  Transfer T(m);
  Observables o;
  const Op2 X = real_pauli(Pauli::X), iY = real_pauli(Pauli::Y), Z = real_pauli(Pauli::Z);
  for (int i = 0; i < N; ++i) {
    o.Mx += T.expect({{i, X}});
    const double z = T.expect({{i, Z}});
    o.Mz += z;
    o.Nz_staggered += ((i + 1) % 2 == 0 ? 1.0 : -1.0) * z;
    o.max_abs_local_y = std::max(o.max_abs_local_y, std::abs(T.expect({{i, iY}})));
  }
  o.Mx /= N;
  o.Mz /= N;
  o.Nz_staggered /= N;
  const double cy = -T.expect({{j, iY}, {j + r, iY}});
  const double cz = T.expect({{j, Z}, {j + r, Z}});
  o.Oy = (cy >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(cy));
  o.Oz = (cz >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(cz));
  o.S_vN = entanglement_entropy(m, N / 2);
  return o;
}

/// <psi|H|psi> / <psi|psi> by full MPO contraction.
inline double energy(const MpsState& m, const Mpo& mpo) {
  std::vector<Matrix> L = {Matrix::Ones(1, 1), Matrix::Zero(1, 1)};
  for (int i = 0; i < m.N; ++i) {
    const auto& W = mpo.sites[i];
    const Eigen::Index D = m.A[i][0].cols();
    std::vector<Matrix> next(W.wr, Matrix::Zero(D, D));
    for (const auto& e : W.entries)
      for (int sp = 0; sp < 2; ++sp)
        for (int s = 0; s < 2; ++s)
          if (e.op(sp, s) != 0.0)
            next[e.b].noalias() += e.op(sp, s) * (m.A[i][sp].transpose() * L[e.a] * m.A[i][s]);
    L.swap(next);
  }
  return L[1](0, 0) / Transfer(m).norm2();
}

struct DmrgOptions {
  int chi_max = 64;
  int max_sweeps = 40;
  int min_sweeps = 2;
  std::vector<double> noise = {1e-4, 1e-5, 1e-6, 1e-7, 1e-8};  // per sweep, then zero
  double tolerance = 1e-9;   // |dE| / |E| per sweep, required on two consecutive sweeps
  double svd_cutoff = 1e-10;
  int eigensolver_iterations = 30;     // local Lanczos cap
  double eigensolver_tolerance = 1e-10; // local Ritz residual, relative to |E|
  int initial_bond = 8;
  std::uint64_t seed = 1;
};

struct DmrgResult {
  MpsState state;
  double energy = 0.0;  // Hz
  bool converged = false;
  int sweeps = 0;
  std::vector<double> sweep_energies;
  double max_truncation = 0.0;  // largest discarded weight in the final sweep
  int chi_used = 0;
};

namespace detail {

class TwoSiteSolver {
 public:
  TwoSiteSolver(const Mpo& mpo, MpsState& m) : mpo_(mpo), m_(m), L_(m.N + 1), R_(m.N + 1) {
    L_[0] = {Matrix::Ones(1, 1), Matrix::Zero(1, 1)};
    R_[m.N] = {Matrix::Zero(1, 1), Matrix::Ones(1, 1)};
    for (int i = m.N - 1; i >= 2; --i) update_right(i);
  }

  // theta for sites (i, i+1): rows (s1, alpha), cols (s2, gamma).
  Matrix theta(int i) const {
    const Eigen::Index Dl = m_.A[i][0].rows(), Dr = m_.A[i + 1][0].cols();
    Matrix t(2 * Dl, 2 * Dr);
    for (int s1 = 0; s1 < 2; ++s1)
      for (int s2 = 0; s2 < 2; ++s2) t.block(s1 * Dl, s2 * Dr, Dl, Dr) = m_.A[i][s1] * m_.A[i + 1][s2];
    return t;
  }

  Matrix apply(int i, const Matrix& t) const {
    const auto& W1 = mpo_.sites[i];
    const auto& W2 = mpo_.sites[i + 1];
    const auto& L = L_[i];
    const auto& R = R_[i + 2];
    const Eigen::Index Dl = t.rows() / 2, Dr = t.cols() / 2;
    std::vector<Matrix> P(W1.wl);
    for (int a = 0; a < W1.wl; ++a) {
      if (L[a].isZero(0.0)) continue;
      P[a].resize(2 * Dl, 2 * Dr);
      for (int s1 = 0; s1 < 2; ++s1) P[a].middleRows(s1 * Dl, Dl).noalias() = L[a] * t.middleRows(s1 * Dl, Dl);
    }
    std::vector<Matrix> Q(W1.wr);
    for (const auto& e : W1.entries) {
      if (P[e.a].size() == 0) continue;
      if (Q[e.b].size() == 0) Q[e.b] = Matrix::Zero(2 * Dl, 2 * Dr);
      for (int sp = 0; sp < 2; ++sp)
        for (int s = 0; s < 2; ++s)
          if (e.op(sp, s) != 0.0) Q[e.b].middleRows(sp * Dl, Dl) += e.op(sp, s) * P[e.a].middleRows(s * Dl, Dl);
    }
    std::vector<Matrix> S(W2.wr);
    for (const auto& e : W2.entries) {
      if (Q[e.a].size() == 0 || R[e.b].isZero(0.0)) continue;
      if (S[e.b].size() == 0) S[e.b] = Matrix::Zero(2 * Dl, 2 * Dr);
      for (int sp = 0; sp < 2; ++sp)
        for (int s = 0; s < 2; ++s)
          if (e.op(sp, s) != 0.0) S[e.b].middleCols(sp * Dr, Dr) += e.op(sp, s) * Q[e.a].middleCols(s * Dr, Dr);
    }
    Matrix out = Matrix::Zero(2 * Dl, 2 * Dr);
    for (int c = 0; c < W2.wr; ++c) {
      if (S[c].size() == 0) continue;
      for (int s2 = 0; s2 < 2; ++s2)
        out.middleCols(s2 * Dr, Dr).noalias() += S[c].middleCols(s2 * Dr, Dr) * R[c].transpose();
    }
    return out;
  }

  // Lanczos on the two-site block; stops on the Ritz residual or the cap.
  double optimize(int i, Matrix& t, int iterations, double tolerance) const {
    const double n0 = t.norm();
    if (!(n0 > 0)) throw std::runtime_error("dmrg: zero two-site tensor");
    std::vector<Matrix> V = {t / n0};
    std::vector<double> alpha, beta;
    const int cap = static_cast<int>(std::min<Eigen::Index>(iterations, t.size()));
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    for (int k = 0; k < cap; ++k) {
      Matrix w = apply(i, V[k]);
      alpha.push_back((V[k].array() * w.array()).sum());
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& v : V) w -= (v.array() * w.array()).sum() * v;
      const double b = w.norm();
      const int m = k + 1;
      Matrix T = Matrix::Zero(m, m);
      for (int j = 0; j < m; ++j) T(j, j) = alpha[j];
      for (int j = 0; j + 1 < m; ++j) T(j, j + 1) = T(j + 1, j) = beta[j];
      es.compute(T);
      const double scale = std::max(1.0, std::abs(es.eigenvalues()[0]));
      if (k + 1 == cap || b < 1e-13 * scale || b * std::abs(es.eigenvectors()(k, 0)) < tolerance * scale) break;
      beta.push_back(b);
      V.push_back(w / b);
    }
    t.setZero();
    for (std::size_t k = 0; k < alpha.size(); ++k) t += es.eigenvectors()(static_cast<Eigen::Index>(k), 0) * V[k];
    t /= t.norm();
    return es.eigenvalues()[0];
  }

  // Splits theta, returns the discarded weight. right = true moves the center right.
  double split(int i, const Matrix& t, bool right, double noise, int chi, double cutoff) {
    const Eigen::Index Dl = t.rows() / 2, Dr = t.cols() / 2;
    Matrix U;       // kept basis on the side being fixed
    Eigen::VectorXd w;  // weights, descending
    if (noise > 0.0) {
      Matrix rho = right ? Matrix(t * t.transpose()) : Matrix(t.transpose() * t);
      Matrix pert = Matrix::Zero(rho.rows(), rho.cols());
      for (const auto& p : perturbations(i, t, right)) pert.noalias() += right ? Matrix(p * p.transpose()) : Matrix(p.transpose() * p);
      const double tr = pert.trace();
      if (tr > 0) rho += (noise / tr) * pert;
      Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
      U = es.eigenvectors().rowwise().reverse();
      w = es.eigenvalues().reverse().cwiseMax(0.0);
    } else {
      Eigen::BDCSVD<Matrix> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
      U = right ? svd.matrixU() : svd.matrixV();
      w = svd.singularValues().array().square();
    }
    const double total = w.sum();
    Eigen::Index keep = 0;
    while (keep < w.size() && keep < chi && w[keep] > cutoff * cutoff * total) ++keep;
    keep = std::max<Eigen::Index>(keep, 1);
    const double discarded = (total - w.head(keep).sum()) / total;
    U = U.leftCols(keep).eval();
    if (right) {
      Matrix rest = U.transpose() * t;  // keep x 2Dr
      rest /= rest.norm();
      m_.A[i][0] = U.topRows(Dl);
      m_.A[i][1] = U.bottomRows(Dl);
      m_.A[i + 1][0] = rest.leftCols(Dr);
      m_.A[i + 1][1] = rest.rightCols(Dr);
      update_left(i);
    } else {
      Matrix rest = t * U;  // 2Dl x keep
      rest /= rest.norm();
      m_.A[i + 1][0] = U.topRows(Dr).transpose();
      m_.A[i + 1][1] = U.bottomRows(Dr).transpose();
      m_.A[i][0] = rest.topRows(Dl);
      m_.A[i][1] = rest.bottomRows(Dl);
      update_right(i + 1);
    }
    return std::max(0.0, discarded);
  }

 private:
  // Terms of H acting on one half of the block, used as density-matrix noise.
  std::vector<Matrix> perturbations(int i, const Matrix& t, bool right) const {
    const Eigen::Index Dl = t.rows() / 2, Dr = t.cols() / 2;
    std::vector<Matrix> out;
    if (right) {
      const auto& W = mpo_.sites[i];
      std::vector<Matrix> Q(W.wr);
      for (const auto& e : W.entries) {
        if (L_[i][e.a].isZero(0.0)) continue;
        if (Q[e.b].size() == 0) Q[e.b] = Matrix::Zero(2 * Dl, 2 * Dr);
        for (int sp = 0; sp < 2; ++sp)
          for (int s = 0; s < 2; ++s)
            if (e.op(sp, s) != 0.0)
              Q[e.b].middleRows(sp * Dl, Dl) += e.op(sp, s) * (L_[i][e.a] * t.middleRows(s * Dl, Dl));
      }
      for (auto& q : Q)
        if (q.size()) out.push_back(std::move(q));
    } else {
      const auto& W = mpo_.sites[i + 1];
      const auto& R = R_[i + 2];
      std::vector<Matrix> Q(W.wl);
      for (const auto& e : W.entries) {
        if (R[e.b].isZero(0.0)) continue;
        if (Q[e.a].size() == 0) Q[e.a] = Matrix::Zero(2 * Dl, 2 * Dr);
        for (int sp = 0; sp < 2; ++sp)
          for (int s = 0; s < 2; ++s)
            if (e.op(sp, s) != 0.0)
              Q[e.a].middleCols(sp * Dr, Dr) += e.op(sp, s) * (t.middleCols(s * Dr, Dr) * R[e.b].transpose());
      }
      for (auto& q : Q)
        if (q.size()) out.push_back(std::move(q));
    }
    return out;
  }

  void update_left(int i) {
    const auto& W = mpo_.sites[i];
    const Eigen::Index D = m_.A[i][0].cols();
    std::vector<Matrix> next(W.wr, Matrix::Zero(D, D));
    for (const auto& e : W.entries) {
      const Matrix& L = L_[i][e.a];
      if (L.isZero(0.0)) continue;
      for (int s = 0; s < 2; ++s) {
        const Matrix LA = L * m_.A[i][s];
        for (int sp = 0; sp < 2; ++sp)
          if (e.op(sp, s) != 0.0) next[e.b].noalias() += e.op(sp, s) * (m_.A[i][sp].transpose() * LA);
      }
    }
    L_[i + 1] = std::move(next);
  }

  void update_right(int i) {
    const auto& W = mpo_.sites[i];
    const Eigen::Index D = m_.A[i][0].rows();
    std::vector<Matrix> next(W.wl, Matrix::Zero(D, D));
    for (const auto& e : W.entries) {
      const Matrix& R = R_[i + 1][e.b];
      if (R.isZero(0.0)) continue;
      for (int s = 0; s < 2; ++s) {
        const Matrix RA = R * m_.A[i][s].transpose();
        for (int sp = 0; sp < 2; ++sp)
          if (e.op(sp, s) != 0.0) next[e.a].noalias() += e.op(sp, s) * (m_.A[i][sp] * RA);
      }
    }
    R_[i] = std::move(next);
  }

  const Mpo& mpo_;
  MpsState& m_;
  std::vector<std::vector<Matrix>> L_, R_;
};

}  // namespace detail

/// Two-site DMRG. Non-convergence is reported through the result flag.
inline DmrgResult dmrg_ground_state(const OperatorSpec& op, const DmrgOptions& opt = {}) {
  if (opt.chi_max < 8) throw std::invalid_argument("dmrg: chi_max must be >= 8");
  if (opt.max_sweeps < 1) throw std::invalid_argument("dmrg: max_sweeps must be >= 1");
  if (op.n_sites < 3) throw std::invalid_argument("dmrg: need at least three sites");
  if (!op.is_hermitian()) throw std::invalid_argument("dmrg: operator is not Hermitian");
  const Mpo mpo = build_mpo(op);
  std::mt19937_64 rng(opt.seed);
  DmrgResult res;
  res.state = random_mps(op.n_sites, std::min(opt.initial_bond, opt.chi_max), rng);
  canonicalize(res.state, 0);
  detail::TwoSiteSolver solver(mpo, res.state);
  const int N = op.n_sites;
  double E = 0.0;
  int quiet = 0;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    const double noise = sweep < static_cast<int>(opt.noise.size()) ? opt.noise[sweep] : 0.0;
    double trunc = 0.0;
    for (int i = 0; i + 1 < N; ++i) {
      Matrix t = solver.theta(i);
      E = solver.optimize(i, t, opt.eigensolver_iterations, opt.eigensolver_tolerance);
      trunc = std::max(trunc, solver.split(i, t, i + 2 < N, noise, opt.chi_max, opt.svd_cutoff));
    }
    for (int i = N - 2; i >= 0; --i) {
      Matrix t = solver.theta(i);
      E = solver.optimize(i, t, opt.eigensolver_iterations, opt.eigensolver_tolerance);
      trunc = std::max(trunc, solver.split(i, t, false, noise, opt.chi_max, opt.svd_cutoff));
    }
    res.sweep_energies.push_back(E);
    res.sweeps = sweep + 1;
    res.max_truncation = trunc;
    if (noise == 0.0 && res.sweep_energies.size() >= 2) {
      const double prev = res.sweep_energies[res.sweep_energies.size() - 2];
      quiet = std::abs(E - prev) < opt.tolerance * std::max(std::abs(E), 1e-300) ? quiet + 1 : 0;
      if (quiet >= 2 && res.sweeps >= opt.min_sweeps) {
        res.converged = true;
        break;
      }
    }
  }
  res.state.center = 0;
  res.energy = energy(res.state, mpo);
  res.chi_used = res.state.max_bond();
  return res;
}

struct PhaseScanRequest {
  std::vector<double> omega_over_4J;
  std::vector<double> Jz_over_J;
  int N = 40;
  int r = 17;
  double J = 1e3;  // Hz
  DmrgOptions dmrg;
  int threads = 1;
};

struct PhasePoint {
  double omega_over_4J = 0.0, Jz_over_J = 0.0;
  double Mx = 0.0, Oy = 0.0, Oz = 0.0, SvN = 0.0;  // Mx reported as |M_x|
  double energy = 0.0;                               // Hz
  bool converged = false;
  int chi_used = 0;
  std::string error;  // empty when the point ran
};

inline PhasePoint phase_point(double omega_over_4J, double Jz_over_J, const PhaseScanRequest& req) {
  PhasePoint p;
  p.omega_over_4J = omega_over_4J;
  p.Jz_over_J = Jz_over_J;
  try {
    ChainSpec s;
    s.N = req.N;
    s.J = req.J;
    s.Jz = Jz_over_J * req.J;
    s.Omega = 4.0 * req.J * omega_over_4J;
    const auto res = dmrg_ground_state(build_chain(s), req.dmrg);
    const auto o = measure(res.state, req.r);
    p.Mx = std::abs(o.Mx);
    p.Oy = o.Oy;
    p.Oz = o.Oz;
    p.SvN = o.S_vN;
    p.energy = res.energy;
    p.converged = res.converged;
    p.chi_used = res.chi_used;
  } catch (const std::exception& e) {
    p.error = e.what();
  }
  return p;
}

/// One DMRG ground state per grid point; failures are recorded per point.
inline std::vector<PhasePoint> phase_scan(const PhaseScanRequest& req) {
  if (req.omega_over_4J.empty() || req.Jz_over_J.empty())
    throw std::invalid_argument("phase_scan: empty grid");
  for (double v : req.omega_over_4J)
    if (!std::isfinite(v)) throw std::invalid_argument("phase_scan: non-finite grid value");
  for (double v : req.Jz_over_J)
    if (!std::isfinite(v)) throw std::invalid_argument("phase_scan: non-finite grid value");
  const std::size_t nj = req.Jz_over_J.size();
  std::vector<PhasePoint> out(req.omega_over_4J.size() * nj);
  parallel_for(out.size(), req.threads, [&](std::size_t k) {
    out[k] = phase_point(req.omega_over_4J[k / nj], req.Jz_over_J[k % nj], req);
  });
  return out;
}

}  // namespace rydsim::mps
