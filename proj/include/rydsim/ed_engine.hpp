#pragma once

// Exact diagonalization and exact time evolution of spin-1/2 chains.
//
// Basis convention: bit j of a basis index is the state of site j, with
// bit 0 = spin up (sigma^z = +1) and bit 1 = spin down.

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/spin_model.hpp"

namespace rydsim::ed {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr int kMaxSites = 20;
inline constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct DenseState {
  int N = 0;
  CVector amplitudes;

  double norm() const { return amplitudes.norm(); }

  /// Computational basis state; index bits give the site states (0 = up).
  static DenseState basis(int N, std::uint64_t index) {
    DenseState s{N, CVector::Zero(std::int64_t{1} << N)};
    s.amplitudes[static_cast<Eigen::Index>(index)] = 1.0;
    return s;
  }
  static DenseState all_up(int N) { return basis(N, 0); }
};

namespace detail {

struct MaskedTerm {
  std::uint64_t flip = 0;   // sites carrying X or Y
  std::uint64_t phase = 0;  // sites carrying Y or Z: sign (-1)^bit
  cplx factor{1.0, 0.0};    // i^{#Y}
};

inline MaskedTerm mask_of(const PauliTerm& t) {
  MaskedTerm m;
  int ny = 0;
  for (const auto& o : t.ops) {
    const std::uint64_t bit = std::uint64_t{1} << o.site;
    if (o.op != Pauli::Z) m.flip |= bit;
    if (o.op != Pauli::X) m.phase |= bit;
    if (o.op == Pauli::Y) ++ny;
  }
  static const cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  m.factor = ipow[ny % 4];
  return m;
}

inline double parity_sign(std::uint64_t x) { return (std::popcount(x) & 1) ? -1.0 : 1.0; }

}  // namespace detail

/// Matrix of an OperatorSpec stored by XOR pattern: H[r, r ^ F_g] = value_g[r].
/// Terms sharing a flip mask share a group. Coefficients can be refreshed in
/// place for a spec with identical term structure.
class SparseHamiltonian {
 public:
  explicit SparseHamiltonian(const OperatorSpec& op) : n_sites_(op.n_sites) {
    if (op.n_sites < 1 || op.n_sites > kMaxSites)
      throw std::invalid_argument("SparseHamiltonian: unsupported number of sites " +
                                  std::to_string(op.n_sites));
    dim_ = std::size_t{1} << op.n_sites;
    masks_.reserve(op.terms.size());
    for (const auto& t : op.terms) {
      auto m = detail::mask_of(t);
      auto it = std::find(flips_.begin(), flips_.end(), m.flip);
      std::size_t g = static_cast<std::size_t>(it - flips_.begin());
      if (it == flips_.end()) flips_.push_back(m.flip);
      masks_.push_back(m);
      group_of_term_.push_back(g);
    }
    update(op);
  }

  int n_sites() const { return n_sites_; }
  std::size_t dim() const { return dim_; }
  bool is_real() const { return real_; }

  /// Refreshes coefficients; op must have the same term layout.
  void update(const OperatorSpec& op) {
    if (op.terms.size() != masks_.size() || op.n_sites != n_sites_)
      throw std::invalid_argument("SparseHamiltonian::update: term structure changed");
    const std::size_t G = flips_.size();
    re_.resize(G);
    im_.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
      re_[g].assign(dim_, 0.0);
      im_[g].assign(dim_, 0.0);
    }
    for (std::size_t k = 0; k < masks_.size(); ++k) {
      const auto m = detail::mask_of(op.terms[k]);
      if (m.flip != masks_[k].flip || m.phase != masks_[k].phase)
        throw std::invalid_argument("SparseHamiltonian::update: term structure changed");
      const cplx c = op.terms[k].coeff * m.factor;
      if (c == cplx{0.0, 0.0}) continue;
      auto& re = re_[group_of_term_[k]];
      auto& im = im_[group_of_term_[k]];
      // Row r couples to column r ^ flip with the phase evaluated on the column.
      if (m.phase == 0) {
        for (std::size_t r = 0; r < dim_; ++r) re[r] += c.real();
        if (c.imag() != 0.0)
          for (std::size_t r = 0; r < dim_; ++r) im[r] += c.imag();
        continue;
      }
      for (std::size_t r = 0; r < dim_; ++r) {
        const double s = detail::parity_sign((r ^ m.flip) & m.phase);
        re[r] += s * c.real();
        if (c.imag() != 0.0) im[r] += s * c.imag();
      }
    }
    real_ = true;
    for (const auto& g : im_)
      for (double v : g)
        if (v != 0.0) real_ = false;
    check_hermitian();
    compute_bounds();
  }

  template <class Scalar>
  void apply(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& in,
             Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& out) const {
    if constexpr (!std::is_same_v<Scalar, cplx>)
      if (!real_) throw std::logic_error("SparseHamiltonian: real apply of a complex matrix");
    out.setZero(static_cast<Eigen::Index>(dim_));
    const Scalar* x = in.data();
    Scalar* y = out.data();
    for (std::size_t g = 0; g < flips_.size(); ++g) {
      const std::uint64_t f = flips_[g];
      const double* re = re_[g].data();
      if (real_) {
        for (std::size_t r = 0; r < dim_; ++r) y[r] += re[r] * x[r ^ f];
      } else if constexpr (std::is_same_v<Scalar, cplx>) {
        const double* im = im_[g].data();
        for (std::size_t r = 0; r < dim_; ++r) y[r] += cplx(re[r], im[r]) * x[r ^ f];
      }
    }
  }

  Eigen::MatrixXcd dense() const {
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(dim_, dim_);
    for (std::size_t g = 0; g < flips_.size(); ++g)
      for (std::size_t r = 0; r < dim_; ++r) H(r, r ^ flips_[g]) += cplx(re_[g][r], im_[g][r]);
    return H;
  }

  /// Gershgorin enclosure of the spectrum.
  double lower_bound() const { return lo_; }
  double upper_bound() const { return hi_; }

 private:
  void check_hermitian() const {
    for (std::size_t g = 0; g < flips_.size(); ++g)
      for (std::size_t r = 0; r < dim_; ++r) {
        const std::size_t c = r ^ flips_[g];
        const double dre = re_[g][r] - re_[g][c];
        const double dim = im_[g][r] + im_[g][c];
        if (std::abs(dre) + std::abs(dim) > 1e-9 * (1.0 + std::abs(re_[g][r]) + std::abs(im_[g][r])))
          throw std::invalid_argument("SparseHamiltonian: operator is not Hermitian");
      }
  }

  void compute_bounds() {
    lo_ = std::numeric_limits<double>::infinity();
    hi_ = -lo_;
    for (std::size_t r = 0; r < dim_; ++r) {
      double diag = 0.0, radius = 0.0;
      for (std::size_t g = 0; g < flips_.size(); ++g) {
        if (flips_[g] == 0)
          diag += re_[g][r];
        else if (real_)
          radius += std::abs(re_[g][r]);
        else
          radius += std::hypot(re_[g][r], im_[g][r]);
      }
      lo_ = std::min(lo_, diag - radius);
      hi_ = std::max(hi_, diag + radius);
    }
  }

  int n_sites_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::uint64_t> flips_;
  std::vector<detail::MaskedTerm> masks_;
  std::vector<std::size_t> group_of_term_;
  std::vector<std::vector<double>> re_, im_;
  bool real_ = true;
  double lo_ = 0.0, hi_ = 0.0;
};

enum class Method { automatic, sparse, dense };

struct SolverOptions {
  Method method = Method::automatic;
  double tolerance = 1e-11;  // residual norm relative to the spectral scale
  int krylov_dim = 120;
  int max_restarts = 200;
  std::uint64_t seed = 12345;
};

struct EigenPairs {
  std::vector<double> values;      // Hz, ascending
  std::vector<CVector> vectors;    // orthonormal
  std::vector<double> residuals;   // ||H v - E v||
};

namespace detail {

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
void orthogonalize(Vec<Scalar>& v, const std::vector<Vec<Scalar>>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& b : basis) v -= b.dot(v) * b;
}

template <class Scalar>
Vec<Scalar> random_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec<Scalar> v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if constexpr (std::is_same_v<Scalar, cplx>)
      v[i] = cplx(g(rng), g(rng));
    else
      v[i] = g(rng);
  }
  return v;
}

/// Restarted Lanczos with full reorthogonalization, locking one eigenpair at
/// a time against the previously converged ones.
template <class Scalar>
EigenPairs lanczos_lowest(const SparseHamiltonian& H, int k, const SolverOptions& opt) {
  const std::size_t dim = H.dim();
  const double scale = std::max({1.0, std::abs(H.lower_bound()), std::abs(H.upper_bound())});
  const double tol = opt.tolerance * scale;
  std::mt19937_64 rng(opt.seed);
  std::vector<Vec<Scalar>> locked;
  EigenPairs out;
  Vec<Scalar> w(static_cast<Eigen::Index>(dim));

  for (int e = 0; e < k; ++e) {
    Vec<Scalar> start = random_vector<Scalar>(dim, rng);
    orthogonalize(start, locked);
    start.normalize();
    double best_res = std::numeric_limits<double>::infinity();
    bool done = false;
    const int m_max =
        static_cast<int>(std::min<std::size_t>(opt.krylov_dim, dim - locked.size()));
    for (int restart = 0; restart < opt.max_restarts && !done; ++restart) {
      std::vector<Vec<Scalar>> V;
      std::vector<double> alpha, beta;
      V.push_back(start);
      for (int j = 0; j < m_max; ++j) {
        H.apply(V[j], w);
        const double a = std::real(V[j].dot(w));
        alpha.push_back(a);
        orthogonalize(w, locked);
        orthogonalize(w, V);
        const double b = w.norm();
        if (j + 1 == m_max || b < 1e-14 * scale) break;
        beta.push_back(b);
        V.push_back(w / b);
      }
      const int m = static_cast<int>(alpha.size());
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) T(i, i) = alpha[i];
      for (int i = 0; i + 1 < m; ++i) T(i, i + 1) = T(i + 1, i) = beta[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      const Eigen::VectorXd y = es.eigenvectors().col(0);
      Vec<Scalar> x = Vec<Scalar>::Zero(static_cast<Eigen::Index>(dim));
      for (int i = 0; i < m; ++i) x += y[i] * V[i];
      orthogonalize(x, locked);
      x.normalize();
      H.apply(x, w);
      const double theta = std::real(x.dot(w));
      const double res = (w - theta * x).norm();
      best_res = std::min(best_res, res);
      start = x;
      if (res <= tol || m < m_max || m == static_cast<int>(dim - locked.size())) {
        out.values.push_back(theta);
        out.residuals.push_back(res);
        locked.push_back(x);
        done = true;
      }
    }
    if (!done)
      throw ConvergenceError("ground_state: Lanczos did not converge for eigenpair " +
                                 std::to_string(e),
                             best_res);
  }
  // Locking finds eigenpairs in ascending order up to near-degeneracies; sort
  // and rotate within the converged subspace.
  const int kk = static_cast<int>(locked.size());
  Eigen::MatrixXcd Hs(kk, kk);
  for (int i = 0; i < kk; ++i) {
    H.apply(locked[i], w);
    for (int j = 0; j < kk; ++j) Hs(j, i) = cplx(locked[j].dot(w));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> small(Hs);
  EigenPairs sorted;
  for (int i = 0; i < kk; ++i) {
    CVector v = CVector::Zero(static_cast<Eigen::Index>(dim));
    for (int j = 0; j < kk; ++j) v += small.eigenvectors()(j, i) * locked[j].template cast<cplx>();
    v.normalize();
    sorted.values.push_back(small.eigenvalues()[i]);
    CVector hv;
    H.apply(v, hv);
    sorted.residuals.push_back((hv - sorted.values.back() * v).norm());
    sorted.vectors.push_back(std::move(v));
  }
  return sorted;
}

}  // namespace detail

/// k lowest eigenpairs of H computed by exact dense diagonalization.
inline EigenPairs ground_state_dense(const SparseHamiltonian& H, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H.dense());
  if (es.info() != Eigen::Success) throw std::runtime_error("ground_state_dense: eigensolver failed");
  EigenPairs out;
  const int kk = std::min<int>(k, static_cast<int>(H.dim()));
  for (int i = 0; i < kk; ++i) {
    out.values.push_back(es.eigenvalues()[i]);
    CVector v = es.eigenvectors().col(i);
    CVector hv;
    H.apply(v, hv);
    out.residuals.push_back((hv - out.values.back() * v).norm());
    out.vectors.push_back(std::move(v));
  }
  return out;
}

inline EigenPairs ground_state(const SparseHamiltonian& H, int k, const SolverOptions& opt = {}) {
  if (k < 1) throw std::invalid_argument("ground_state: k must be >= 1");
  Method m = opt.method;
  if (m == Method::automatic) m = (H.dim() <= 256 || static_cast<std::size_t>(k) * 4 >= H.dim())
                                      ? Method::dense
                                      : Method::sparse;
  if (m == Method::dense) {
    if (H.n_sites() > 12) throw std::invalid_argument("ground_state: dense path limited to N <= 12");
    return ground_state_dense(H, k);
  }
  if (static_cast<std::size_t>(k) > H.dim()) throw std::invalid_argument("ground_state: k > dim");
  return H.is_real() ? detail::lanczos_lowest<double>(H, k, opt)
                     : detail::lanczos_lowest<cplx>(H, k, opt);
}

inline EigenPairs ground_state(const OperatorSpec& op, int k, const SolverOptions& opt = {}) {
  if (!op.is_hermitian()) throw std::invalid_argument("ground_state: operator is not Hermitian");
  return ground_state(SparseHamiltonian(op), k, opt);
}

struct Gaps {
  double first = 0.0;   // E1 - E0, Hz
  double second = 0.0;  // E2 - E0, Hz
};

inline Gaps gaps(const OperatorSpec& op, const SolverOptions& opt = {}) {
  const auto ev = ground_state(op, 3, opt);
  return {std::max(0.0, ev.values[1] - ev.values[0]), std::max(0.0, ev.values[2] - ev.values[0])};
}

/// Expectation value of a single Pauli string.
inline cplx expectation(const CVector& psi, const PauliTerm& term) {
  const auto m = detail::mask_of(term);
  cplx acc{0.0, 0.0};
  const auto dim = static_cast<std::size_t>(psi.size());
  for (std::size_t s = 0; s < dim; ++s)
    acc += std::conj(psi[s ^ m.flip]) * detail::parity_sign(s & m.phase) * psi[s];
  return acc * m.factor * term.coeff;
}

inline cplx expectation(const CVector& psi, const SparseHamiltonian& H) {
  CVector hv;
  H.apply(psi, hv);
  return psi.dot(hv);
}

struct ObservableReport {
  double Mx = 0.0, My = 0.0, Mz = 0.0;
  double Oy = 0.0, Oz = 0.0;
  double Nz_staggered = 0.0;
  double S_vN = 0.0;       // nats, left half chain
  double fidelity = 0.0;   // squared projection on the reference subspace
};

/// Largest odd r with j = ceil(N/2) (1-based) and j + r <= N.
inline int default_correlation_range(int N) {
  int r = N / 2;
  if (r % 2 == 0) --r;
  return r;
}


/// Von Neumann entropy of sites [0, n_left).
inline double entanglement_entropy(const CVector& psi, int N, int n_left) {
  if (n_left <= 0 || n_left >= N) return 0.0;
  const Eigen::Index dl = Eigen::Index{1} << n_left;
  const Eigen::Index dr = Eigen::Index{1} << (N - n_left);
  Eigen::Map<const Eigen::MatrixXcd> M(psi.data(), dl, dr);
  const Eigen::MatrixXcd rho = M * M.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double p = es.eigenvalues()[i];
    if (p > 1e-300) s -= p * std::log(p);
  }
  return std::max(0.0, s);
}

inline ObservableReport measure(const DenseState& state, std::span<const CVector> reference,
                                int r = -1) {
  const int N = state.N;
  if (state.amplitudes.size() != (Eigen::Index{1} << N))
    throw std::invalid_argument("measure: amplitude vector does not match N");
  for (const auto& v : reference)
    if (v.size() != state.amplitudes.size())
      throw std::invalid_argument("measure: reference state has a different size");
  if (r < 0) r = default_correlation_range(N);
  const int j = (N + 1) / 2 - 1;  // 0-based ceil(N/2)
  if (r < 1 || j + r >= N) throw std::out_of_range("measure: correlation range out of bounds");

  const CVector& psi = state.amplitudes;
  ObservableReport rep;
  for (int s = 0; s < N; ++s) {
    rep.Mx += expectation(psi, {{{s, Pauli::X}}, 1.0}).real();
    rep.My += expectation(psi, {{{s, Pauli::Y}}, 1.0}).real();
    const double z = expectation(psi, {{{s, Pauli::Z}}, 1.0}).real();
    rep.Mz += z;
    rep.Nz_staggered += ((s + 1) % 2 == 0 ? 1.0 : -1.0) * z;
  }
  rep.Mx /= N;
  rep.My /= N;
  rep.Mz /= N;
  rep.Nz_staggered /= N;
  const double cy = expectation(psi, {{{j, Pauli::Y}, {j + r, Pauli::Y}}, 1.0}).real();
  const double cz = expectation(psi, {{{j, Pauli::Z}, {j + r, Pauli::Z}}, 1.0}).real();
  rep.Oy = (cy >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(cy));
  rep.Oz = (cz >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(cz));
  rep.S_vN = entanglement_entropy(psi, N, N / 2);
  double f = 0.0;
  for (const auto& v : reference) f += std::norm(v.dot(psi));
  rep.fidelity = std::clamp(f, 0.0, 1.0);
  return rep;
}

inline ObservableReport measure(const DenseState& state, const DenseState& reference, int r = -1) {
  const CVector refs[1] = {reference.amplitudes};
  return measure(state, std::span<const CVector>(refs, 1), r);
}

struct EvolveOptions {
  int max_order = 60;
  double max_chunk_phase = 2.0;  // bound on 2 pi ||H - c|| tau per Taylor chunk
};

/// In-place propagation of psi by exp(-i 2 pi H tau) with a static H.
/// The Taylor series is truncated once a term drops below machine precision
/// relative to the state norm; long intervals are split into chunks.
inline int propagate(const SparseHamiltonian& H, CVector& psi, double tau,
                     const EvolveOptions& opt = {}) {
  if (tau == 0.0) return 0;
  const double center = 0.5 * (H.lower_bound() + H.upper_bound());
  const double radius = 0.5 * (H.upper_bound() - H.lower_bound());
  const int chunks = std::max(1, static_cast<int>(std::ceil(kTwoPi * radius * std::abs(tau) /
                                                            opt.max_chunk_phase)));
  const double h = tau / chunks;
  const cplx minus_i_theta(0.0, -kTwoPi * h);
  const double eps = std::numeric_limits<double>::epsilon() * 0.5;
  CVector term, next, acc;
  int matvecs = 0;
  for (int c = 0; c < chunks; ++c) {
    const double psi_norm = psi.norm();
    term = psi;
    acc = psi;
    bool converged = false;
    for (int k = 1; k <= opt.max_order; ++k) {
      H.apply(term, next);
      ++matvecs;
      next -= center * term;
      term = next * (minus_i_theta / static_cast<double>(k));
      acc += term;
      if (term.norm() <= eps * psi_norm) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw ConvergenceError("propagate: Taylor series did not converge within the order cap",
                             term.norm() / psi_norm);
    psi = acc * std::exp(cplx(0.0, -kTwoPi * center * h));
  }
  return matvecs;
}

using OperatorOfTime = std::function<OperatorSpec(double)>;

/// Staircase evolution from t0 to t1: H is frozen at each step midpoint.
/// The callback, when given, sees the state after each completed step.
inline DenseState evolve(DenseState state, const OperatorOfTime& op_of_t, double t0, double t1,
                         double dt, const std::function<void(double, const DenseState&)>& observer = {},
                         const EvolveOptions& opt = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("evolve: dt must be positive");
  const double steps_f = (t1 - t0) / dt;
  const long steps = std::lround(steps_f);
  if (steps < 0 || std::abs(steps_f - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_f))
    throw std::invalid_argument("evolve: dt must divide t1 - t0");
  if (steps == 0) return state;
  OperatorSpec op = op_of_t(t0 + 0.5 * dt);
  if (op.n_sites != state.N) throw std::invalid_argument("evolve: operator/state size mismatch");
  SparseHamiltonian H(op);
  for (long s = 0; s < steps; ++s) {
    const double tm = t0 + (static_cast<double>(s) + 0.5) * dt;
    if (s > 0) H.update(op_of_t(tm));
    propagate(H, state.amplitudes, dt, opt);
    if (observer) observer(t0 + static_cast<double>(s + 1) * dt, state);
  }
  return state;
}

}  // namespace rydsim::ed
