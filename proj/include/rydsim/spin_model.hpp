#pragma once

// Symbolic spin-chain Hamiltonians (in units of h, i.e. Hz) as sums of Pauli
// strings. The ED and MPS engines realize the same term list differently.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rydsim {

enum class Pauli : std::uint8_t { X, Y, Z };

inline char to_char(Pauli p) { return p == Pauli::X ? 'X' : (p == Pauli::Y ? 'Y' : 'Z'); }

struct SiteOp {
  int site = 0;
  Pauli op = Pauli::Z;
  friend bool operator==(const SiteOp&, const SiteOp&) = default;
  friend auto operator<=>(const SiteOp&, const SiteOp&) = default;
};

/// coeff * prod_k sigma^{op_k}_{site_k}; sites are distinct and sorted.
struct PauliTerm {
  std::vector<SiteOp> ops;
  std::complex<double> coeff{0.0, 0.0};
};

struct OperatorSpec {
  int n_sites = 0;
  std::vector<PauliTerm> terms;

  void add(std::complex<double> coeff, std::vector<SiteOp> ops) {
    std::sort(ops.begin(), ops.end());
    for (std::size_t k = 0; k < ops.size(); ++k) {
      if (ops[k].site < 0 || ops[k].site >= n_sites)
        throw std::out_of_range("OperatorSpec: site index out of range");
      if (k > 0 && ops[k].site == ops[k - 1].site)
        throw std::invalid_argument("OperatorSpec: repeated site in a Pauli string");
    }
    terms.push_back({std::move(ops), coeff});
  }

  /// Merges identical Pauli strings and drops zero coefficients.
  OperatorSpec canonical(double zero_tol = 0.0) const {
    std::map<std::vector<SiteOp>, std::complex<double>> merged;
    for (const auto& t : terms) merged[t.ops] += t.coeff;
    OperatorSpec out{n_sites, {}};
    for (auto& [ops, c] : merged)
      if (std::abs(c) > zero_tol) out.terms.push_back({ops, c});
    return out;
  }

  /// Pauli strings are Hermitian, so the sum is Hermitian iff every merged
  /// coefficient is real.
  bool is_hermitian(double tol = 1e-12) const {
    double scale = 0.0;
    for (const auto& t : terms) scale = std::max(scale, std::abs(t.coeff));
    for (const auto& t : canonical().terms)
      if (std::abs(t.coeff.imag()) > tol * std::max(1.0, scale)) return false;
    return true;
  }

  bool is_null(double tol = 0.0) const { return canonical(tol).terms.empty(); }

  double max_abs_coefficient() const {
    double m = 0.0;
    for (const auto& t : terms) m = std::max(m, std::abs(t.coeff));
    return m;
  }

  /// Largest separation between the sites of any single term.
  int max_range() const {
    int r = 0;
    for (const auto& t : terms)
      if (t.ops.size() > 1) r = std::max(r, t.ops.back().site - t.ops.front().site);
    return r;
  }
};

enum class Boundary { open, periodic };

/// Dressed XXZ chain: edge field Delta'/2 on the first and last sites, bulk
/// field Delta/2, transverse drive Omega/2 sigma^x, nearest-neighbour
/// Jz zz + J (xx + yy). All values in Hz.
struct ChainSpec {
  int N = 2;
  double J = 0.0;
  double Jz = 0.0;
  double Omega = 0.0;
  double Delta = 0.0;
  double DeltaPrime = 0.0;
  double delta_zeta = 0.0;  // kept for bookkeeping; already folded into Delta/Delta'
  Boundary boundary = Boundary::open;
  bool next_nearest = false;  // adds J/64, Jz/64 at range 2
};

namespace detail {

inline void add_bond(OperatorSpec& op, int a, int b, double Jz, double J) {
  op.add(Jz, {{a, Pauli::Z}, {b, Pauli::Z}});
  op.add(J, {{a, Pauli::X}, {b, Pauli::X}});
  op.add(J, {{a, Pauli::Y}, {b, Pauli::Y}});
}

}  // namespace detail

inline OperatorSpec build_chain(const ChainSpec& s) {
  if (s.N < 2) throw std::invalid_argument("build_chain: N must be >= 2");
  if (s.boundary == Boundary::periodic && s.N < 3)
    throw std::invalid_argument("build_chain: periodic chains need N >= 3");
  for (double v : {s.J, s.Jz, s.Omega, s.Delta, s.DeltaPrime})
    if (!std::isfinite(v)) throw std::invalid_argument("build_chain: non-finite parameter");

  OperatorSpec op{s.N, {}};
  const bool open = s.boundary == Boundary::open;
  for (int j = 0; j < s.N; ++j) {
    const bool edge = open && (j == 0 || j == s.N - 1);
    op.add((edge ? s.DeltaPrime : s.Delta) / 2.0, {{j, Pauli::Z}});
  }
  for (int j = 0; j < s.N; ++j) op.add(s.Omega / 2.0, {{j, Pauli::X}});

  const int bonds = open ? s.N - 1 : s.N;
  for (int j = 0; j < bonds; ++j) detail::add_bond(op, j, (j + 1) % s.N, s.Jz, s.J);
  if (s.next_nearest) {
    const int nnn = open ? s.N - 2 : s.N;
    for (int j = 0; j < nnn; ++j) detail::add_bond(op, j, (j + 2) % s.N, s.Jz / 64.0, s.J / 64.0);
  }
  return op;
}

/// Per-bond dimensionless coupling modulation I_{j,j+1}(t), sampled on a
/// common time grid and linearly interpolated in between.
struct BondSeries {
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // values[bond][sample]

  std::size_t bonds() const { return values.size(); }
  double t_begin() const { return times.front(); }
  double t_end() const { return times.back(); }

  static BondSeries constant(std::size_t n_bonds, double value, double t0, double t1) {
    BondSeries b;
    b.times = {t0, t1};
    b.values.assign(n_bonds, {value, value});
    return b;
  }

  /// Interpolated values of all bonds at time t.
  std::vector<double> at(double t) const {
    if (times.empty()) throw std::logic_error("BondSeries: empty");
    const double slack = 1e-12 * std::max(1.0, std::abs(t_end()));
    if (t < t_begin() - slack || t > t_end() + slack)
      throw std::out_of_range("BondSeries: t = " + std::to_string(t) + " outside trajectory support");
    std::vector<double> out(values.size());
    if (times.size() == 1) {
      for (std::size_t b = 0; b < values.size(); ++b) out[b] = values[b][0];
      return out;
    }
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t hi = std::clamp<std::size_t>(it - times.begin(), 1, times.size() - 1);
    std::size_t lo = hi - 1;
    const double w = std::clamp((t - times[lo]) / (times[hi] - times[lo]), 0.0, 1.0);
    for (std::size_t b = 0; b < values.size(); ++b)
      out[b] = (1 - w) * values[b][lo] + w * values[b][hi];
    return out;
  }

  /// Mean of I over bonds and samples.
  double mean() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& v : values)
      for (double x : v) s += x, ++n;
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// Open chain with motion-modulated bonds. nu_offset is the (nu0 - 2 nu)/2
/// single-site field in Hz.
struct MotionalChainSpec {
  ChainSpec base;
  BondSeries couplings;
  double nu_offset = 0.0;
};

inline OperatorSpec build_motional_chain(const MotionalChainSpec& spec, double t) {
  const ChainSpec& s = spec.base;
  if (s.N < 2) throw std::invalid_argument("build_motional_chain: N must be >= 2");
  if (s.boundary != Boundary::open)
    throw std::invalid_argument("build_motional_chain: only open chains are supported");
  if (spec.couplings.bonds() != static_cast<std::size_t>(s.N - 1))
    throw std::invalid_argument("build_motional_chain: bond series size does not match N - 1");
  const std::vector<double> I = spec.couplings.at(t);
  for (double x : I)
    if (!(x > 0.0) || !std::isfinite(x))
      throw std::domain_error("build_motional_chain: bond coupling must be positive");

  OperatorSpec op{s.N, {}};
  for (int j = 0; j < s.N; ++j) op.add(spec.nu_offset, {{j, Pauli::Z}});
  for (int j = 0; j < s.N; ++j) op.add(s.Omega / 2.0, {{j, Pauli::X}});
  for (int j = 0; j + 1 < s.N; ++j) {
    const double w = I[j];
    detail::add_bond(op, j, j + 1, w * s.Jz, w * s.J);
    op.add(w * s.delta_zeta / 2.0, {{j, Pauli::Z}});
    op.add(w * s.delta_zeta / 2.0, {{j + 1, Pauli::Z}});
  }
  if (s.next_nearest)
    for (int j = 0; j + 2 < s.N; ++j) {
      // (2d / (x_{j+2} - x_j))^6 expressed through the two adjacent bonds.
      const double w =
          std::pow(2.0 / (std::pow(I[j], -1.0 / 6.0) + std::pow(I[j + 1], -1.0 / 6.0)), 6);
      detail::add_bond(op, j, j + 2, w * s.Jz / 64.0, w * s.J / 64.0);
    }
  return op;
}

struct ResonanceChoice {
  double nu = 0.0;             // Hz, drive frequency
  double bulk_residual = 0.0;  // nu0 - 2 nu + 2 dzeta I_mean (zero by construction)
  double edge_residual = 0.0;  // nu0 - 2 nu + dzeta I_mean = -dzeta I_mean
};

/// Drive frequency cancelling the mean bulk longitudinal field.
inline ResonanceChoice resonance_detuning(double nu0, double delta_zeta, double I_mean) {
  ResonanceChoice r;
  r.nu = (nu0 + 2.0 * delta_zeta * I_mean) / 2.0;
  const double offset = -2.0 * delta_zeta * I_mean;  // nu0 - 2 nu, computed without cancellation
  r.bulk_residual = offset + 2.0 * delta_zeta * I_mean;
  r.edge_residual = offset + delta_zeta * I_mean;
  return r;
}

}  // namespace rydsim
