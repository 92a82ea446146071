#pragma once

// Adiabatic sweeps of the transverse drive Omega(t) through the ferro-para
// transition, with fixed atoms, motion-modulated couplings or the
// instantaneous ground state as reference.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/ed_engine.hpp"
#include "rydsim/parallel.hpp"
#include "rydsim/spin_model.hpp"

namespace rydsim::ramps {

enum class Direction { up, cycle };

/// Omega(t) sampled on increasing times, linear in between.
struct RampSchedule {
  std::vector<double> t;      // s
  std::vector<double> omega;  // Hz
  double T = 0.0;
  double omega_max = 0.0;
  Direction direction = Direction::cycle;
  double floor_velocity = 0.0;  // Hz/s

  void validate() const {
    if (t.size() < 2 || t.size() != omega.size()) throw std::invalid_argument("RampSchedule: need >= 2 samples");
    if (t.front() != 0.0 || omega.front() != 0.0) throw std::invalid_argument("RampSchedule: must start at Omega(0) = 0");
    for (std::size_t k = 1; k < t.size(); ++k)
      if (!(t[k] >= t[k - 1])) throw std::invalid_argument("RampSchedule: times must be non-decreasing");
    if (std::abs(t.back() - T) > 1e-12 * std::max(1.0, T)) throw std::invalid_argument("RampSchedule: last sample must be at T");
  }

  double at(double x) const {
    if (x >= t.back()) return omega.back();  // also covers zero-duration quenches
    if (x <= t.front()) return omega.front();
    auto it = std::upper_bound(t.begin(), t.end(), x);
    const std::size_t hi = it - t.begin(), lo = hi - 1;
    if (t[hi] == t[lo]) return omega[hi];
    const double w = (x - t[lo]) / (t[hi] - t[lo]);
    return (1 - w) * omega[lo] + w * omega[hi];
  }
};

namespace detail {

/// Appends the time-reversed copy so that Omega(T - t) = Omega(t).
inline void mirror(RampSchedule& r, double T_up) {
  const std::size_t n = r.t.size();
  for (std::size_t k = n - 1; k-- > 0;) {
    r.t.push_back(2.0 * T_up - r.t[k]);
    r.omega.push_back(r.omega[k]);
  }
  r.T = 2.0 * T_up;
  r.t.back() = r.T;
}

}  // namespace detail

inline RampSchedule linear_ramp(double omega_max, double T, Direction dir = Direction::cycle) {
  if (omega_max < 0 || T < 0) throw std::invalid_argument("linear_ramp: negative input");
  RampSchedule r;
  r.direction = dir;
  r.omega_max = omega_max;
  const double T_up = dir == Direction::cycle ? 0.5 * T : T;
  r.t = {0.0, T_up};
  r.omega = {0.0, omega_max};
  r.T = T_up;
  if (dir == Direction::cycle) detail::mirror(r, T_up);
  return r;
}

/// Sweep Hamiltonian: chain parameters (N, J, Jz, delta_zeta, next_nearest)
/// with the drive frequency chosen so that the mean bulk field vanishes.
struct SweepModel {
  ChainSpec base;

  OperatorSpec fixed(double omega) const {
    MotionalChainSpec m{base, BondSeries::constant(base.N - 1, 1.0, 0.0, 1.0), 0.0};
    m.base.Omega = omega;
    m.nu_offset = -base.delta_zeta;
    return build_motional_chain(m, 0.0);
  }
};

struct RampOptions {
  int grid = 512;                // uniform Omega points for the velocity profile
  double floor_fraction = 0.05;  // floor velocity relative to the mean velocity
  double ceiling_factor = 10.0;  // cap relative to the mean velocity
  int probe_N = 10;
  bool constant_velocity = false;
  Direction direction = Direction::cycle;
};

/// Ground-state M_z along an Omega grid for the fixed-atom model.
inline std::vector<double> ground_state_mz(const SweepModel& model, const std::vector<double>& omegas) {
  std::vector<double> mz;
  mz.reserve(omegas.size());
  for (double w : omegas) {
    const auto gs = ed::ground_state(model.fixed(w), 1);
    ed::DenseState s{model.base.N, gs.vectors[0]};
    double z = 0.0;
    for (int j = 0; j < s.N; ++j) z += ed::expectation(s.amplitudes, {{{j, Pauli::Z}}, 1.0}).real();
    mz.push_back(z / s.N);
  }
  return mz;
}

/// Velocity dOmega/dt proportional to 1 / |dM_z/dOmega| in the ground state
/// of a probe_N chain, clipped to [floor, ceiling] x mean velocity and
/// rescaled so the ramp lasts T (the up half of T for a cycle).
inline RampSchedule generate_ramp(const ChainSpec& spec, double omega_max, double T, const RampOptions& opt = {}) {
  if (!(omega_max >= 0) || !(T >= 0)) throw std::invalid_argument("generate_ramp: negative input");
  if (opt.constant_velocity || omega_max == 0.0 || T == 0.0) return linear_ramp(omega_max, T, opt.direction);
  if (opt.probe_N < 2 || opt.probe_N > ed::kMaxSites)
    throw std::invalid_argument("generate_ramp: probe_N outside the exact-diagonalization range");
  if (opt.grid < 3) throw std::invalid_argument("generate_ramp: grid too small");
  if (!(opt.floor_fraction > 0) || !(opt.ceiling_factor > 1))
    throw std::invalid_argument("generate_ramp: need floor > 0 and ceiling > 1");
  SweepModel probe{spec};
  probe.base.N = opt.probe_N;
  std::vector<double> grid(opt.grid);
  for (int k = 0; k < opt.grid; ++k) grid[k] = omega_max * k / (opt.grid - 1);
  const auto mz = ground_state_mz(probe, grid);
  const double dW = grid[1] - grid[0];
  const double T_up = opt.direction == Direction::cycle ? 0.5 * T : T;
  const double v_mean = omega_max / T_up;
  const double v_lo = opt.floor_fraction * v_mean, v_hi = opt.ceiling_factor * v_mean;
  // raw[k] = 1 / |dM/dOmega| on segment k; non-finite slopes fall to the floor.
  std::vector<double> raw(opt.grid - 1);
  std::vector<bool> bad(opt.grid - 1, false);
  for (int k = 0; k + 1 < opt.grid; ++k) {
    const double s = std::abs(mz[k + 1] - mz[k]) / dW;
    if (!std::isfinite(s)) bad[k] = true;
    raw[k] = s > 0 ? 1.0 / s : std::numeric_limits<double>::infinity();
  }
  auto velocity = [&](double c, int k) { return bad[k] ? v_lo : std::clamp(c * raw[k], v_lo, v_hi); };
  auto duration = [&](double c) {
    double d = 0.0;
    for (int k = 0; k + 1 < opt.grid; ++k) d += dW / velocity(c, k);
    return d;
  };
  double lo = -60.0, hi = 60.0;  // log c
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (lo + hi);
    (duration(std::exp(m)) > T_up ? lo : hi) = m;
  }
  const double c = std::exp(0.5 * (lo + hi));
  RampSchedule r;
  r.direction = opt.direction;
  r.omega_max = omega_max;
  r.floor_velocity = v_lo;
  r.t = {0.0};
  r.omega = {0.0};
  double t = 0.0;
  for (int k = 0; k + 1 < opt.grid; ++k) {
    t += dW / velocity(c, k);
    r.t.push_back(t);
    r.omega.push_back(grid[k + 1]);
  }
  // Remove the bisection residue so the ramp ends exactly at T_up.
  const double scale = T_up / t;
  for (double& x : r.t) x *= scale;
  r.t.back() = T_up;
  r.T = T_up;
  if (opt.direction == Direction::cycle) detail::mirror(r, T_up);
  return r;
}

enum class Mode { motional, fixed, ideal };

inline const char* to_string(Mode m) {
  return m == Mode::motional ? "motional" : (m == Mode::fixed ? "fixed" : "ideal");
}

struct SweepOptions {
  double dt_max = 1e-6;  // s, staircase step bound
  int checkpoints = 64;  // reference ground states on a uniform time grid
  int threads = 1;
};

struct SweepResult {
  Mode mode = Mode::fixed;
  std::vector<double> t, omega;
  std::vector<double> Mz_mean, Mz_std, Mx_mean, Mx_std, F_mean, F_std;
  std::vector<double> final_fidelity;  // per realization
  int realizations = 0;

  double final_fidelity_mean() const { return F_mean.back(); }

  void write_csv(std::ostream& os, bool header = true) const {
    if (header) os << "t_s,omega_Hz,Mz_mean,Mz_std,Mx_mean,Mx_std,fidelity_mean,fidelity_std,mode\n";
    os.precision(12);
    for (std::size_t k = 0; k < t.size(); ++k)
      os << t[k] << ',' << omega[k] << ',' << Mz_mean[k] << ',' << Mz_std[k] << ',' << Mx_mean[k] << ','
         << Mx_std[k] << ',' << F_mean[k] << ',' << F_std[k] << ',' << to_string(mode) << '\n';
  }
};

struct Sample {
  double Mz = 0, Mx = 0, F = 0;
};

namespace detail {

inline std::vector<double> checkpoint_times(double T, int n) {
  std::vector<double> c(n);
  for (int k = 0; k < n; ++k) c[k] = n == 1 ? T : T * k / (n - 1);
  return c;
}

inline SweepResult reduce(Mode mode, const std::vector<double>& t, const RampSchedule& ramp,
                          const std::vector<std::vector<Sample>>& runs) {
  SweepResult r;
  r.mode = mode;
  r.t = t;
  r.realizations = static_cast<int>(runs.size());
  const double n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    r.omega.push_back(ramp.at(t[k]));
    double s[3] = {0, 0, 0}, q[3] = {0, 0, 0};
    for (const auto& run : runs) {
      const double v[3] = {run[k].Mz, run[k].Mx, run[k].F};
      for (int a = 0; a < 3; ++a) {
        s[a] += v[a];
        q[a] += v[a] * v[a];
      }
    }
    double mean[3], sd[3];
    for (int a = 0; a < 3; ++a) {
      mean[a] = s[a] / n;
      sd[a] = std::sqrt(std::max(0.0, q[a] / n - mean[a] * mean[a]));
    }
    r.Mz_mean.push_back(mean[0]);
    r.Mz_std.push_back(sd[0]);
    r.Mx_mean.push_back(mean[1]);
    r.Mx_std.push_back(sd[1]);
    r.F_mean.push_back(std::clamp(mean[2], 0.0, 1.0));
    r.F_std.push_back(sd[2]);
  }
  for (const auto& run : runs) r.final_fidelity.push_back(run.back().F);
  return r;
}

}  // namespace detail

/// Runs a sweep from the fully polarized state |up...up>. The motional mode
/// needs one bond series per realization covering [0, T].
inline SweepResult run_sweep(const ChainSpec& base, const RampSchedule& ramp, Mode mode,
                             const std::vector<BondSeries>& ensemble = {}, const SweepOptions& opt = {}) {
  ramp.validate();
  if (opt.checkpoints < 2) throw std::invalid_argument("run_sweep: need at least two checkpoints");
  if (!(opt.dt_max > 0)) throw std::invalid_argument("run_sweep: dt_max must be positive");
  const SweepModel model{base};
  const int N = base.N;
  const auto tc = detail::checkpoint_times(ramp.T, opt.checkpoints);

  // Reference ground states of the motionless chain.
  std::vector<ed::CVector> ref(tc.size());
  for (std::size_t k = 0; k < tc.size(); ++k) ref[k] = ed::ground_state(model.fixed(ramp.at(tc[k])), 1).vectors[0];

  auto observe = [&](const ed::DenseState& s, std::size_t k) {
    Sample o;
    for (int j = 0; j < N; ++j) {
      o.Mz += ed::expectation(s.amplitudes, {{{j, Pauli::Z}}, 1.0}).real();
      o.Mx += ed::expectation(s.amplitudes, {{{j, Pauli::X}}, 1.0}).real();
    }
    o.Mz /= N;
    o.Mx /= N;
    o.F = std::clamp(std::norm(ref[k].dot(s.amplitudes)), 0.0, 1.0);
    return o;
  };

  if (mode == Mode::ideal) {
    std::vector<Sample> run;
    for (std::size_t k = 0; k < tc.size(); ++k) run.push_back(observe({N, ref[k]}, k));
    return detail::reduce(mode, tc, ramp, {run});
  }

  std::vector<BondSeries> series;
  double nu_offset = -base.delta_zeta;
  if (mode == Mode::fixed) {
    series.push_back(BondSeries::constant(N - 1, 1.0, 0.0, std::max(ramp.T, 1e-300)));
  } else {
    if (ensemble.empty()) throw std::invalid_argument("run_sweep: motional mode needs trajectories");
    double s = 0.0;
    for (const auto& b : ensemble) {
      if (b.bonds() != static_cast<std::size_t>(N - 1))
        throw std::invalid_argument("run_sweep: trajectory has " + std::to_string(b.bonds() + 1) +
                                    " atoms, chain has " + std::to_string(N));
      if (b.t_begin() > 1e-15 || b.t_end() < ramp.T * (1 - 1e-12))
        throw std::invalid_argument("run_sweep: trajectory does not cover [0, T]");
      s += b.mean();
    }
    // Rotating frame with nu0 = 0: the single-site field (nu0 - 2 nu) / 2 is -nu.
    nu_offset = -resonance_detuning(0.0, base.delta_zeta, s / ensemble.size()).nu;
    series = ensemble;
  }

  std::vector<std::vector<Sample>> runs(series.size());
  parallel_for(series.size(), opt.threads, [&](std::size_t r) {
    MotionalChainSpec m{base, series[r], nu_offset};
    auto op_of_t = [&](double t) {
      MotionalChainSpec mm = m;
      mm.base.Omega = ramp.at(t);
      return build_motional_chain(mm, t);
    };
    ed::DenseState psi = ed::DenseState::all_up(N);
    std::vector<Sample> run;
    run.push_back(observe(psi, 0));
    for (std::size_t k = 0; k + 1 < tc.size(); ++k) {
      const double span = tc[k + 1] - tc[k];
      if (span > 0) {
        const long steps = std::max(1L, static_cast<long>(std::ceil(span / opt.dt_max - 1e-9)));
        psi = ed::evolve(std::move(psi), op_of_t, tc[k], tc[k + 1], span / steps);
      }
      run.push_back(observe(psi, k + 1));
    }
    runs[r] = std::move(run);
  });
  return detail::reduce(mode, tc, ramp, runs);
}

struct BootstrapInterval {
  double mean = 0, lo = 0, hi = 0;
};

/// Percentile bootstrap interval of the mean.
inline BootstrapInterval bootstrap_mean(const std::vector<double>& v, double level = 0.95, int resamples = 4000,
                                        std::uint64_t seed = 1) {
  if (v.empty()) throw std::invalid_argument("bootstrap_mean: empty sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[pick(rng)];
    m = s / v.size();
  }
  std::sort(means.begin(), means.end());
  BootstrapInterval b;
  for (double x : v) b.mean += x;
  b.mean /= v.size();
  const double a = 0.5 * (1.0 - level);
  b.lo = means[static_cast<std::size_t>(std::floor(a * (resamples - 1)))];
  b.hi = means[static_cast<std::size_t>(std::ceil((1.0 - a) * (resamples - 1)))];
  return b;
}

}  // namespace rydsim::ramps
