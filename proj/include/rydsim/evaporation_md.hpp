#pragma once

// Classical 1-D dynamics of circular atoms between two plug barriers, with
// 1/r^6 repulsion and an optional longitudinal lattice.
//
// Units: positions in um, velocities in um/s, time in s, energies as E/h in Hz.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rydsim/constants.hpp"
#include "rydsim/parallel.hpp"
#include "rydsim/spin_model.hpp"

namespace rydsim::md {

/// Control parameters at one instant; heights and depth in Hz.
struct Knot {
  double t = 0.0;            // s
  double L = 0.0;            // um, plug separation
  double left_height = 0.0;  // Hz
  double right_height = 0.0; // Hz
  double waist = 30.0;       // um
  double lattice_depth = 0.0;  // Hz
};

struct Phase {
  std::string name;
  double t_begin = 0.0, t_end = 0.0;
  double dt = 1e-6;  // s
};

/// Piecewise-linear control timeline.
struct Schedule {
  std::vector<Knot> knots;
  std::vector<Phase> phases;
  double lattice_spacing = 5.0;  // um
  // Lattice minima sit at lattice_offset + k d; NaN aligns them with the
  // surviving chain (offset d/2 for even atom counts, 0 for odd).
  double lattice_offset = std::numeric_limits<double>::quiet_NaN();

  double t_begin() const { return knots.front().t; }
  double t_end() const { return knots.back().t; }

  void validate() const {
    if (knots.empty()) throw std::invalid_argument("schedule: no knots");
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const auto& n = knots[k];
      if (!(n.L > 0)) throw std::invalid_argument("schedule: L must be positive");
      if (n.left_height < 0 || n.right_height < 0 || n.lattice_depth < 0)
        throw std::invalid_argument("schedule: heights must be non-negative");
      if (!(n.waist > 0)) throw std::invalid_argument("schedule: waist must be positive");
      if (k && !(n.t > knots[k - 1].t)) throw std::invalid_argument("schedule: knot times must increase");
    }
    if (phases.empty()) throw std::invalid_argument("schedule: no phases");
    if (std::abs(phases.front().t_begin - t_begin()) > 1e-12 ||
        std::abs(phases.back().t_end - t_end()) > 1e-12)
      throw std::invalid_argument("schedule: phases must cover the knot range");
    for (std::size_t p = 0; p < phases.size(); ++p) {
      if (!(phases[p].t_end > phases[p].t_begin)) throw std::invalid_argument("schedule: empty phase");
      if (!(phases[p].dt > 0)) throw std::invalid_argument("schedule: phase dt must be positive");
      if (p && std::abs(phases[p].t_begin - phases[p - 1].t_end) > 1e-12)
        throw std::invalid_argument("schedule: phases must be contiguous");
    }
    if (!(lattice_spacing > 0)) throw std::invalid_argument("schedule: lattice spacing must be positive");
  }

  Knot at(double t) const {
    if (knots.size() == 1 || t <= knots.front().t) return with_time(knots.front(), t);
    if (t >= knots.back().t) return with_time(knots.back(), t);
    auto it = std::upper_bound(knots.begin(), knots.end(), t, [](double x, const Knot& k) { return x < k.t; });
    const Knot& b = *it;
    const Knot& a = *std::prev(it);
    const double w = (t - a.t) / (b.t - a.t);
    auto lerp = [w](double x, double y) { return (1 - w) * x + w * y; };
    return {t, lerp(a.L, b.L), lerp(a.left_height, b.left_height), lerp(a.right_height, b.right_height),
            lerp(a.waist, b.waist), lerp(a.lattice_depth, b.lattice_depth)};
  }

  /// True when no control changes within [t0, t1].
  bool is_static(double t0, double t1) const {
    const Knot a = at(t0), b = at(t1);
    if (a.L != b.L || a.left_height != b.left_height || a.right_height != b.right_height ||
        a.waist != b.waist || a.lattice_depth != b.lattice_depth)
      return false;
    for (const auto& k : knots)
      if (k.t > t0 && k.t < t1) {
        if (k.L != a.L || k.left_height != a.left_height || k.right_height != a.right_height ||
            k.waist != a.waist || k.lattice_depth != a.lattice_depth)
          return false;
      }
    return true;
  }

  const Phase& phase_at(double t) const {
    for (const auto& p : phases)
      if (t < p.t_end) return p;
    return phases.back();
  }

  static Schedule frozen(const Knot& k, double duration, double dt) {
    Schedule s;
    Knot a = k, b = k;
    a.t = 0.0;
    b.t = duration;
    s.knots = {a, b};
    s.phases = {{"frozen", 0.0, duration, dt}};
    return s;
  }

 private:
  static Knot with_time(Knot k, double t) {
    k.t = t;
    return k;
  }
};

struct EvaporationConfig {
  int initial_atoms = 110;
  double initial_atoms_sd = 0.0;  // Gaussian spread of the initial count
  double spacing_mean = 9.0;      // um
  double spacing_sd = 3.0;        // um
  double min_spacing = 3.0;       // um, hard core of the position sampler
  double temperature = 1e-6;      // K
  double mass = constants::rb87_mass;
  double c6 = 3.03e9;             // Hz um^6
  double ejection_margin = 3.0;   // in plug waists beyond L/2
  int pair_neighbors = 0;         // pair forces up to this index distance, 0 = all pairs
  double record_interval = 1e-3;  // s
  double max_energy_drift = 1e-6; // relative, checked while the schedule is static
  Schedule schedule;
  std::uint64_t seed = 1;

  void validate() const {
    if (initial_atoms < 1) throw std::invalid_argument("evaporation: need at least one atom");
    if (initial_atoms_sd < 0 || spacing_sd < 0) throw std::invalid_argument("evaporation: negative spread");
    if (!(spacing_mean > 0) || !(min_spacing > 0)) throw std::invalid_argument("evaporation: bad spacing");
    if (temperature < 0) throw std::invalid_argument("evaporation: negative temperature");
    if (!(mass > 0) || !(c6 >= 0)) throw std::invalid_argument("evaporation: bad mass or C6");
    if (pair_neighbors < 0) throw std::invalid_argument("evaporation: pair_neighbors must be >= 0");
    if (!(record_interval > 0)) throw std::invalid_argument("evaporation: record interval must be positive");
    schedule.validate();
  }
};

/// Surviving atoms, kept sorted by position.
struct Chain {
  std::vector<int> id;
  std::vector<double> x, v;
  std::size_t size() const { return x.size(); }
};

/// Potential parameters frozen at one time.
struct Field {
  double L = 0, left_height = 0, right_height = 0, waist = 30;
  double lattice_depth = 0, lattice_spacing = 5, lattice_offset = 0;
  double c6 = 3.03e9;
  int neighbors = 0;
};

inline double lattice_offset_for(const Schedule& s, std::size_t n_atoms) {
  if (!std::isnan(s.lattice_offset)) return s.lattice_offset;
  return n_atoms % 2 == 0 ? 0.5 * s.lattice_spacing : 0.0;
}

inline Field field_at(const EvaporationConfig& cfg, double t, std::size_t n_atoms) {
  const Knot k = cfg.schedule.at(t);
  return {k.L, k.left_height, k.right_height, k.waist, k.lattice_depth, cfg.schedule.lattice_spacing,
          lattice_offset_for(cfg.schedule, n_atoms), cfg.c6, cfg.pair_neighbors};
}

/// Single-atom external energy (Hz) and force (Hz/um).
inline std::pair<double, double> external(double x, const Field& f) {
  double e = 0.0, force = 0.0;
  const double w2 = f.waist * f.waist;
  for (int side : {-1, 1}) {
    const double h = side < 0 ? f.left_height : f.right_height;
    if (h == 0.0) continue;
    const double u = x - side * f.L / 2;
    const double g = h * std::exp(-2.0 * u * u / w2);
    e += g;
    force += 4.0 * u / w2 * g;
  }
  if (f.lattice_depth != 0.0) {
    const double k = constants::pi / f.lattice_spacing;
    const double s = std::sin(k * (x - f.lattice_offset));
    const double c = std::cos(k * (x - f.lattice_offset));
    e += f.lattice_depth * s * s;
    force -= f.lattice_depth * 2.0 * k * s * c;
  }
  return {e, force};
}

/// Forces (Hz/um) on every atom of a position-sorted chain.
inline void forces(const std::vector<double>& x, const Field& f, std::vector<double>& out) {
  const std::size_t n = x.size();
  out.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i] = external(x[i], f).second;
  if (f.c6 == 0.0) return;
  const std::size_t reach = f.neighbors > 0 ? static_cast<std::size_t>(f.neighbors) : n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n && j - i <= reach; ++j) {
      const double r = x[j] - x[i];
      const double r2 = r * r;
      const double p = 6.0 * f.c6 / (r2 * r2 * r2 * r);  // -dV/dr
      out[i] -= p;
      out[j] += p;
    }
}

struct EnergyParts {
  double kinetic = 0.0;   // Hz, total
  double pair = 0.0;      // Hz, total vdW
  double external = 0.0;  // Hz, total plugs + lattice
  double total() const { return kinetic + pair + external; }
};

inline double hz_per_um_to_accel(double mass) {
  // a[um/s^2] = F[Hz/um] * h / m * 1e12
  return constants::planck_h / mass * 1e12;
}

inline EnergyParts energy(const Chain& c, const Field& f, double mass) {
  EnergyParts e;
  const double k = 0.5 * mass * 1e-12 / constants::planck_h;  // Hz per (um/s)^2
  const std::size_t n = c.size();
  const std::size_t reach = f.neighbors > 0 ? static_cast<std::size_t>(f.neighbors) : n;
  for (std::size_t i = 0; i < n; ++i) {
    e.kinetic += k * c.v[i] * c.v[i];
    e.external += external(c.x[i], f).first;
    for (std::size_t j = i + 1; j < n && j - i <= reach; ++j) {
      const double r2 = (c.x[j] - c.x[i]) * (c.x[j] - c.x[i]);
      e.pair += f.c6 / (r2 * r2 * r2);
    }
  }
  return e;
}

/// Energy and force of atom i in the field of the others and the beams.
inline std::pair<double, double> potential(const std::vector<double>& x, std::size_t i, const Field& f) {
  auto [e, force] = external(x[i], f);
  const std::size_t n = x.size();
  const std::size_t reach = f.neighbors > 0 ? static_cast<std::size_t>(f.neighbors) : n;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i || (j > i ? j - i : i - j) > reach) continue;
    const double r = x[i] - x[j];
    e += f.c6 / std::pow(r, 6);
    force += 6.0 * f.c6 / std::pow(r, 7);
  }
  return {e, force};
}

/// Sixth-order symplectic Runge-Kutta-Nystrom scheme (Blanes & Moan 2002,
/// SRKN_11^b): 12 kicks and 11 drifts per step, kick first.
struct Rkn6 {
  static constexpr std::array<double, 6> b_half = {
      0.0414649985182624, 0.198128671918067, -0.0400061921041533, 0.0752539843015807,
      -0.0115113874206879,
      0.5 - (0.0414649985182624 + 0.198128671918067 - 0.0400061921041533 + 0.0752539843015807 -
             0.0115113874206879)};
  static constexpr std::array<double, 6> a_half = {
      0.123229775946271, 0.290553797799558, -0.127049212625417, -0.246331761062075,
      0.357208872795928,
      1.0 - 2.0 * (0.123229775946271 + 0.290553797799558 - 0.127049212625417 - 0.246331761062075 +
                   0.357208872795928)};

  static constexpr double kick(int i) { return i < 6 ? b_half[i] : b_half[11 - i]; }
  static constexpr double drift(int i) { return i < 6 ? a_half[i] : a_half[10 - i]; }
};

/// One RKN step of size h. field_of(t) returns the potential at time t.
template <class FieldOf>
void rkn6_step(Chain& c, double t, double h, double mass, const FieldOf& field_of, std::vector<double>& scratch) {
  const double acc = hz_per_um_to_accel(mass);
  const std::size_t n = c.size();
  double tau = t;
  for (int s = 0; s < 12; ++s) {
    forces(c.x, field_of(tau), scratch);
    const double kb = Rkn6::kick(s) * h * acc;
    for (std::size_t i = 0; i < n; ++i) c.v[i] += kb * scratch[i];
    if (s == 11) break;
    const double ka = Rkn6::drift(s) * h;
    for (std::size_t i = 0; i < n; ++i) c.x[i] += ka * c.v[i];
    tau += ka;
  }
}

/// Fixed-field integration, used for conservation and reversibility checks.
inline void integrate_frozen(Chain& c, const Field& f, double mass, double dt, long steps) {
  std::vector<double> scratch;
  auto fo = [&](double) -> const Field& { return f; };
  for (long s = 0; s < steps; ++s) rkn6_step(c, 0.0, dt, mass, fo, scratch);
}

struct Frame {
  double t = 0.0;
  double L = 0.0;
  std::vector<int> id;
  std::vector<double> x, v;
  double kinetic_per_atom = 0.0;  // Hz
  double pair_per_atom = 0.0;     // Hz
};

struct Ejection {
  double t = 0.0;
  int atom_id = -1;
  int side = 0;   // -1 left, +1 right
  double L = 0.0;
  double velocity = 0.0;  // um/s
};

/// One realization: sampled frames and ejection events.
struct Trajectory {
  std::vector<Frame> frames;
  std::vector<Ejection> ejections;
  Chain final_chain;
  double max_static_drift = 0.0;

  std::size_t survivors() const { return final_chain.size(); }
};

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Initial chain: hard-core spacings drawn from N(mean, sd), centred on 0,
/// Maxwell-Boltzmann velocities.
inline Chain initial_chain(const EvaporationConfig& cfg, std::mt19937_64& rng) {
  int n = cfg.initial_atoms;
  if (cfg.initial_atoms_sd > 0) {
    std::normal_distribution<double> g(cfg.initial_atoms, cfg.initial_atoms_sd);
    n = std::max(1, static_cast<int>(std::lround(g(rng))));
  }
  std::normal_distribution<double> sp(cfg.spacing_mean, cfg.spacing_sd);
  Chain c;
  double x = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i) {
      double d;
      do d = sp(rng);
      while (d < cfg.min_spacing);
      x += d;
    }
    c.x.push_back(x);
    c.id.push_back(i);
  }
  const double mid = 0.5 * (c.x.front() + c.x.back());
  for (double& xi : c.x) xi -= mid;
  const double sigma_v = std::sqrt(constants::boltzmann_k * cfg.temperature / cfg.mass) * 1e6;
  std::normal_distribution<double> vel(0.0, sigma_v);
  for (int i = 0; i < n; ++i) c.v.push_back(vel(rng));
  return c;
}

inline Frame make_frame(const Chain& c, double t, const Field& f, double mass) {
  Frame fr;
  fr.t = t;
  fr.L = f.L;
  fr.id = c.id;
  fr.x = c.x;
  fr.v = c.v;
  if (c.size()) {
    const auto e = energy(c, f, mass);
    fr.kinetic_per_atom = e.kinetic / c.size();
    fr.pair_per_atom = e.pair / c.size();
  }
  return fr;
}

/// Advances the chain from t0 to t1 under the schedule, removing atoms that
/// leave over a plug. Frames are recorded every record_interval.
inline Trajectory integrate(const EvaporationConfig& cfg, Chain chain, double t0, double t1,
                            double record_interval = -1.0) {
  if (record_interval <= 0) record_interval = cfg.record_interval;
  const auto& sched = cfg.schedule;
  Trajectory tr;
  std::vector<double> scratch;
  std::size_t lattice_atoms = chain.size();
  auto field_of = [&](double t) { return field_at(cfg, t, lattice_atoms); };
  tr.frames.push_back(make_frame(chain, t0, field_of(t0), cfg.mass));
  double next_record = t0 + record_interval;
  double t = t0;
  double ref_energy = energy(chain, field_of(t0), cfg.mass).total();
  bool have_ref = true;
  const double eps = 1e-12 * std::max(1.0, std::abs(t1));
  while (t < t1 - eps) {
    const Phase& ph = sched.phase_at(t);
    const double h = std::min({ph.dt, t1 - t, ph.t_end - t > eps ? ph.t_end - t : ph.dt,
                               next_record - t > eps ? next_record - t : ph.dt});
    // Lattice alignment follows the atom count until the lattice is on.
    if (sched.at(t).lattice_depth == 0.0) lattice_atoms = chain.size();
    rkn6_step(chain, t, h, cfg.mass, field_of, scratch);
    t += h;
    for (std::size_t i = 1; i < chain.size(); ++i)
      if (!(chain.x[i] > chain.x[i - 1]))
        throw IntegrationError("evaporation: atoms crossed at t = " + std::to_string(t) +
                               " s; step too large");
    // Ejections over either plug.
    const Field f = field_of(t);
    const double edge = f.L / 2 + cfg.ejection_margin * f.waist;
    bool ejected = false;
    for (std::size_t i = 0; i < chain.size();) {
      const int side = chain.x[i] > edge && chain.v[i] > 0 ? 1 : (chain.x[i] < -edge && chain.v[i] < 0 ? -1 : 0);
      if (side) {
        tr.ejections.push_back({t, chain.id[i], side, f.L, chain.v[i]});
        chain.id.erase(chain.id.begin() + i);
        chain.x.erase(chain.x.begin() + i);
        chain.v.erase(chain.v.begin() + i);
        ejected = true;
      } else {
        ++i;
      }
    }
    if (ejected || !sched.is_static(t - h, t)) {
      have_ref = false;
    } else if (chain.size() > 0) {
      const double E = energy(chain, f, cfg.mass).total();
      if (!have_ref) {
        ref_energy = E;
        have_ref = true;
      } else {
        const double drift = std::abs(E - ref_energy) / std::max(std::abs(ref_energy), 1e-300);
        tr.max_static_drift = std::max(tr.max_static_drift, drift);
        if (drift > cfg.max_energy_drift)
          throw IntegrationError("evaporation: energy drift " + std::to_string(drift) + " at t = " +
                                 std::to_string(t) + " s exceeds bound; reduce dt");
      }
    }
    if (t >= next_record - eps) {
      tr.frames.push_back(make_frame(chain, t, f, cfg.mass));
      next_record += record_interval;
    }
  }
  if (tr.frames.back().t < t1 - eps) tr.frames.push_back(make_frame(chain, t1, field_of(t1), cfg.mass));
  tr.final_chain = std::move(chain);
  return tr;
}

/// Full schedule for realization `index`.
inline Trajectory run_realization(const EvaporationConfig& cfg, std::uint64_t index) {
  cfg.validate();
  auto rng = job_rng(cfg.seed, index);
  return integrate(cfg, initial_chain(cfg, rng), cfg.schedule.t_begin(), cfg.schedule.t_end());
}

struct CurveRow {
  double L = 0.0;  // um
  double N_mean = 0.0;
  double N_var = 0.0;
};

struct EvaporationCurve {
  std::vector<CurveRow> rows;  // ordered by decreasing L (schedule order)
  int realizations = 0;

  /// Maximal runs of at least min_len consecutive rows with zero variance,
  /// counted once per atom number.
  std::vector<std::pair<int, std::pair<double, double>>> zero_variance_windows(int min_len = 3) const {
    std::vector<std::pair<int, std::pair<double, double>>> out;
    std::size_t i = 0;
    while (i < rows.size()) {
      if (rows[i].N_var != 0.0) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < rows.size() && rows[j + 1].N_var == 0.0 && rows[j + 1].N_mean == rows[i].N_mean) ++j;
      if (static_cast<int>(j - i + 1) >= min_len) {
        const int n = static_cast<int>(std::lround(rows[i].N_mean));
        if (out.empty() || out.back().first != n) out.push_back({n, {rows[j].L, rows[i].L}});
      }
      i = j + 1;
    }
    return out;
  }
};

/// Survivor statistics versus L over the frames of several realizations.
/// Frames are taken from the second phase on (the whole run for a single
/// phase schedule) while L decreases.
inline EvaporationCurve evaporation_curve(const EvaporationConfig& cfg, int realizations, int threads = 1,
                                          std::vector<Trajectory>* keep = nullptr) {
  if (realizations < 2) throw std::invalid_argument("evaporation_curve: need at least two realizations");
  cfg.validate();
  std::vector<Trajectory> runs(realizations);
  parallel_for(runs.size(), threads, [&](std::size_t k) { runs[k] = run_realization(cfg, k); });
  const std::size_t frames = runs.front().frames.size();
  for (const auto& r : runs)
    if (r.frames.size() != frames) throw std::logic_error("evaporation_curve: frame grids differ");
  EvaporationCurve curve;
  curve.realizations = realizations;
  double last_L = std::numeric_limits<double>::infinity();
  const double t_from = cfg.schedule.phases.size() > 1 ? cfg.schedule.phases[1].t_begin : cfg.schedule.t_begin();
  for (std::size_t f = 0; f < frames; ++f) {
    if (runs.front().frames[f].t < t_from - 1e-12) continue;
    const double L = runs.front().frames[f].L;
    if (L >= last_L) continue;  // only the compressing part of the schedule
    last_L = L;
    double s = 0, s2 = 0;
    for (const auto& r : runs) {
      const double n = static_cast<double>(r.frames[f].x.size());
      s += n;
      s2 += n * n;
    }
    const double mean = s / realizations;
    const double var = std::max(0.0, (s2 - s * mean) / (realizations - 1));
    curve.rows.push_back({L, mean, var < 1e-12 ? 0.0 : var});
  }
  if (keep) *keep = std::move(runs);
  return curve;
}

struct BondCouplings {
  BondSeries series;
  bool collapsed = false;  // some spacing fell below 0.5 d
  double min_spacing = std::numeric_limits<double>::infinity();
};

/// I_{j,j+1}(t) = d^6 / (x_{j+1} - x_j)^6 over frames in [t0, t1] with a
/// constant set of atoms.
inline BondCouplings bond_couplings(const Trajectory& tr, double d, double t0 = -1.0,
                                    double t1 = std::numeric_limits<double>::infinity()) {
  if (!(d > 0)) throw std::invalid_argument("bond_couplings: d must be positive");
  BondCouplings out;
  const std::vector<int>* ids = nullptr;
  for (const auto& fr : tr.frames) {
    if (fr.t < t0 - 1e-15 || fr.t > t1 + 1e-15) continue;
    if (!ids) {
      ids = &fr.id;
      if (fr.x.size() < 2) throw std::invalid_argument("bond_couplings: fewer than two atoms");
      out.series.values.assign(fr.x.size() - 1, {});
    } else if (fr.id != *ids) {
      throw std::invalid_argument("bond_couplings: atom set changes inside the window");
    }
    out.series.times.push_back(fr.t);
    for (std::size_t j = 0; j + 1 < fr.x.size(); ++j) {
      const double r = fr.x[j + 1] - fr.x[j];
      out.min_spacing = std::min(out.min_spacing, r);
      if (r < 0.5 * d) out.collapsed = true;
      out.series.values[j].push_back(std::pow(d / r, 6));
    }
  }
  if (!ids) throw std::invalid_argument("bond_couplings: no frames in window");
  return out;
}

/// Position of the end atom in front of a Gaussian plug where the plug slope
/// balances the chain pressure (stable side, beyond waist/2). Returns the
/// distance from the plug centre, or NaN if the plug cannot hold it.
inline double end_atom_offset(double pressure, double height, double waist) {
  const double w2 = waist * waist;
  auto slope = [&](double u) { return height * 4.0 * u / w2 * std::exp(-2.0 * u * u / w2); };
  double lo = waist / 2, hi = lo;
  if (slope(lo) < pressure) return std::numeric_limits<double>::quiet_NaN();
  while (slope(hi) > pressure) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (lo + hi);
    (slope(m) > pressure ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

/// Plug separation holding N atoms at nearest-neighbour spacing d in static
/// equilibrium.
inline double plug_length_for_spacing(int N, double d, double left_height, double right_height,
                                      double waist, double c6) {
  double p = 0.0;
  for (int k = N - 1; k >= 1; --k) p += 6.0 * c6 / std::pow(k * d, 7);
  const double ul = end_atom_offset(p, left_height, waist);
  const double ur = end_atom_offset(p, right_height, waist);
  if (std::isnan(ul) || std::isnan(ur))
    throw std::domain_error("plug_length_for_spacing: plugs too weak for this spacing");
  return (N - 1) * d + ul + ur;
}

/// Second derivative (Hz/um^2) of the single-atom external potential.
inline double external_curvature(double x, const Field& f) {
  double k2 = 0.0;
  const double w2 = f.waist * f.waist;
  for (int side : {-1, 1}) {
    const double h = side < 0 ? f.left_height : f.right_height;
    if (h == 0.0) continue;
    const double u = x - side * f.L / 2;
    const double g = h * std::exp(-2.0 * u * u / w2);
    k2 += g * (16.0 * u * u / (w2 * w2) - 4.0 / w2);
  }
  if (f.lattice_depth != 0.0) {
    const double k = constants::pi / f.lattice_spacing;
    k2 += 2.0 * f.lattice_depth * k * k * std::cos(2.0 * k * (x - f.lattice_offset));
  }
  return k2;
}

/// Stable static configuration of the atoms between the plugs, found by
/// damped Newton iteration from `guess`. Empty if none is reached (an end
/// atom passes a barrier top or the Hessian is not positive definite).
inline std::vector<double> static_equilibrium(const Field& f, std::vector<double> x, int max_iter = 200) {
  const std::size_t n = x.size();
  if (n == 0) return x;
  auto total = [&](const std::vector<double>& y) {
    Chain c;
    c.x = y;
    c.v.assign(y.size(), 0.0);
    return energy(c, f, 1.0).total();
  };
  const std::size_t reach = f.neighbors > 0 ? static_cast<std::size_t>(f.neighbors) : n;
  std::vector<double> F;
  for (int it = 0; it < max_iter; ++it) {
    forces(x, f, F);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      H(i, i) += external_curvature(x[i], f);
      for (std::size_t j = i + 1; j < n && j - i <= reach; ++j) {
        const double r = x[j] - x[i];
        const double c = 42.0 * f.c6 / std::pow(r, 8);
        H(i, i) += c;
        H(j, j) += c;
        H(i, j) -= c;
        H(j, i) -= c;
      }
    }
    Eigen::VectorXd g(n);
    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = -F[i];
      gmax = std::max(gmax, std::abs(F[i]));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    const bool pd = llt.info() == Eigen::Success;
    if (gmax < 1e-9 * (f.left_height + f.right_height + f.lattice_depth) / f.waist)
      return pd ? x : std::vector<double>{};
    Eigen::VectorXd step = pd ? Eigen::VectorXd(-llt.solve(g)) : Eigen::VectorXd(-g * (0.1 / H.diagonal().cwiseAbs().maxCoeff()));
    // Keep ordering and cap the move at a fraction of the smallest gap.
    double gap = f.waist;
    for (std::size_t i = 1; i < n; ++i) gap = std::min(gap, x[i] - x[i - 1]);
    const double smax = step.cwiseAbs().maxCoeff();
    if (smax > 0.25 * gap) step *= 0.25 * gap / smax;
    const double e0 = total(x);
    double lambda = 1.0;
    std::vector<double> y(n);
    for (int ls = 0; ls < 40; ++ls, lambda *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + lambda * step[i];
      if (total(y) <= e0 + 1e-12 * std::abs(e0)) break;
    }
    x = y;
    if (x.front() < -f.L / 2 || x.back() > f.L / 2) return {};
  }
  return {};
}

/// Plug separation at which a chain of N atoms stops having a static
/// configuration between the plugs, so that one atom leaves. Found by
/// continuation from a loose chain and bisection.
inline double ejection_threshold_length(int N, double left_height, double right_height, double waist,
                                        double c6, double tolerance = 1e-3) {
  if (N < 2) throw std::invalid_argument("ejection_threshold_length: need at least two atoms");
  Field f;
  f.left_height = left_height;
  f.right_height = right_height;
  f.waist = waist;
  f.c6 = c6;
  const double pmax = std::min(left_height, right_height) * 2.0 / waist * std::exp(-0.5);
  const double dstar = std::pow(6.0 * c6 / pmax, 1.0 / 7.0);
  double hi = 2.0 * (N - 1) * dstar + 4.0 * waist;
  std::vector<double> x(N);
  for (int i = 0; i < N; ++i) x[i] = (i - 0.5 * (N - 1)) * 1.5 * dstar;
  f.L = hi;
  x = static_equilibrium(f, x);
  if (x.empty()) throw std::runtime_error("ejection_threshold_length: no equilibrium for a loose chain");
  // Walk down in L until the configuration is lost.
  double lo = hi, step = 0.05 * hi;
  std::vector<double> good = x;
  while (step > tolerance) {
    f.L = lo - step;
    auto y = static_equilibrium(f, good);
    if (!y.empty()) {
      lo -= step;
      good = std::move(y);
    } else {
      step *= 0.5;
    }
  }
  return lo;
}

/// Angular frequency of small oscillations in a lattice well (rad/s).
inline double lattice_angular_frequency(double depth_hz, double spacing_um, double mass) {
  // V ~ depth (pi x / d)^2, k = 2 depth pi^2 / d^2 [Hz/um^2]
  return std::sqrt(2.0 * depth_hz * constants::pi * constants::pi / (spacing_um * spacing_um) *
                   hz_per_um_to_accel(mass));
}

/// Speed (um/s) of an atom that slid down from a barrier of the given height.
inline double ejection_speed(double height_hz, double mass) {
  return std::sqrt(2.0 * constants::planck_h * height_hz / mass) * 1e6;
}

/// Lattice depth (Hz) giving small-oscillation frequency nu (Hz).
inline double lattice_depth_for_frequency(double nu_hz, double spacing_um, double mass) {
  const double w = 2.0 * constants::pi * nu_hz;
  return w * w * spacing_um * spacing_um / (2.0 * constants::pi * constants::pi * hz_per_um_to_accel(mass));
}

/// Four-phase preparation: plug switch-on with fast compression, slow
/// evaporation, plug adjustment to the target spacing, lattice ramp-on.
struct SequenceParams {
  double L_start = 1000.0;      // um
  double L_compressed = 500.0;  // um, end of phase I
  double L_evaporated = 208.0;  // um, end of phase II
  double left_height = 4e6;     // Hz
  double right_height = 3e6;    // Hz
  double waist = 30.0;          // um
  double final_waist = 10.0;    // um
  int target_atoms = 40;
  double spacing = 5.0;         // um, final lattice spacing
  double lattice_depth = 0.0;   // Hz, 0 selects a 24 kHz well
  std::array<double, 4> durations = {0.1, 1.0, 0.1, 0.1};  // s
  double plug_rise = 0.0;       // s, plugs reach full height; 0 = end of phase I
  double dt = 1e-6;             // s, phases I-III
  double lattice_dt = 1e-7;     // s, phase IV
  bool stop_after_evaporation = false;
};

inline Schedule make_sequence(const SequenceParams& p, double c6, double mass = constants::rb87_mass) {
  for (double d : p.durations)
    if (!(d > 0)) throw std::invalid_argument("make_sequence: phase durations must be positive");
  Schedule s;
  s.lattice_spacing = p.spacing;
  double t = 0.0;
  s.knots.push_back({t, p.L_start, 0.0, 0.0, p.waist, 0.0});
  if (p.plug_rise > 0 && p.plug_rise < p.durations[0]) {
    const double w = p.plug_rise / p.durations[0];
    s.knots.push_back({p.plug_rise, (1 - w) * p.L_start + w * p.L_compressed, p.left_height, p.right_height,
                       p.waist, 0.0});
  }
  t += p.durations[0];
  s.knots.push_back({t, p.L_compressed, p.left_height, p.right_height, p.waist, 0.0});
  s.phases.push_back({"I", 0.0, t, p.dt});
  t += p.durations[1];
  s.knots.push_back({t, p.L_evaporated, p.left_height, p.right_height, p.waist, 0.0});
  s.phases.push_back({"II", t - p.durations[1], t, p.dt});
  if (p.stop_after_evaporation) return s;
  const double high = std::max(p.left_height, p.right_height);
  const double L3 = plug_length_for_spacing(p.target_atoms, p.spacing, high, high, p.final_waist, c6);
  t += p.durations[2];
  s.knots.push_back({t, L3, high, high, p.final_waist, 0.0});
  s.phases.push_back({"III", t - p.durations[2], t, p.dt});
  const double depth = p.lattice_depth > 0 ? p.lattice_depth : lattice_depth_for_frequency(24e3, p.spacing, mass);
  t += p.durations[3];
  s.knots.push_back({t, L3, high, high, p.final_waist, depth});
  s.phases.push_back({"IV", t - p.durations[3], t, p.lattice_dt});
  return s;
}

/// Holds the last knot of a schedule for an extra duration.
inline Schedule extend(Schedule s, double duration, double dt) {
  if (!(duration > 0)) throw std::invalid_argument("extend: duration must be positive");
  Knot k = s.knots.back();
  const double t0 = k.t;
  k.t += duration;
  s.knots.push_back(k);
  s.phases.push_back({"hold", t0, k.t, dt});
  return s;
}

/// Plug length halfway between the static thresholds for N and N + 1 atoms,
/// a stopping point for evaporation that targets N.
inline double evaporation_stop_length(int N, double left_height, double right_height, double waist,
                                      double c6) {
  const double lo = ejection_threshold_length(N, left_height, right_height, waist, c6);
  const double hi = ejection_threshold_length(N + 1, left_height, right_height, waist, c6);
  return 0.5 * (lo + hi);
}

/// Bond-coupling modulations I(t) from chains that were evaporated, compressed
/// to the target spacing and held in the lattice.
struct MotionalEnsemble {
  std::vector<BondSeries> series;       // time axis starts at 0 with the hold
  std::vector<std::uint64_t> accepted;  // realization indices kept
  std::vector<std::uint64_t> rejected;  // wrong atom number, collapse or loss in the hold
  double mean_I = 0.0;
  double min_spacing = std::numeric_limits<double>::infinity();  // um
};

/// cfg supplies the atom sampler and integrator settings; its schedule is
/// replaced by make_sequence(p) followed by a hold of the given duration.
/// Realizations are tried in index order until `count` are accepted.
inline MotionalEnsemble motional_ensemble(EvaporationConfig cfg, const SequenceParams& p, double hold,
                                          int count, double frame_interval = 2e-6, int threads = 1,
                                          int max_attempts = 0) {
  if (count < 1) throw std::invalid_argument("motional_ensemble: need at least one realization");
  if (!(frame_interval > 0)) throw std::invalid_argument("motional_ensemble: frame interval must be positive");
  if (p.stop_after_evaporation) throw std::invalid_argument("motional_ensemble: sequence must include the lattice");
  if (max_attempts <= 0) max_attempts = 10 * count;
  cfg.schedule = extend(make_sequence(p, cfg.c6, cfg.mass), hold, p.lattice_dt);
  cfg.validate();
  const double t_hold = cfg.schedule.t_end() - hold;

  struct Attempt {
    bool ok = false;
    BondCouplings bonds;
  };
  MotionalEnsemble out;
  double sum_I = 0.0;
  std::size_t n_I = 0;
  std::uint64_t next = 0;
  while (static_cast<int>(out.accepted.size()) < count) {
    if (next >= static_cast<std::uint64_t>(max_attempts))
      throw std::runtime_error("motional_ensemble: only " + std::to_string(out.accepted.size()) + " of " +
                               std::to_string(max_attempts) + " realizations reached " +
                               std::to_string(p.target_atoms) + " atoms");
    const std::size_t batch = static_cast<std::size_t>(std::max(count - static_cast<int>(out.accepted.size()), threads));
    std::vector<Attempt> tries(batch);
    parallel_for(batch, threads, [&](std::size_t k) {
      auto rng = job_rng(cfg.seed, next + k);
      const auto prep = integrate(cfg, initial_chain(cfg, rng), cfg.schedule.t_begin(), t_hold);
      if (static_cast<int>(prep.final_chain.size()) != p.target_atoms) return;
      const auto held = integrate(cfg, prep.final_chain, t_hold, cfg.schedule.t_end(), frame_interval);
      if (!held.ejections.empty()) return;
      tries[k].bonds = bond_couplings(held, p.spacing);
      tries[k].ok = !tries[k].bonds.collapsed;
    });
    for (std::size_t k = 0; k < batch && static_cast<int>(out.accepted.size()) < count; ++k) {
      const std::uint64_t index = next + k;
      if (!tries[k].ok) {
        out.rejected.push_back(index);
        continue;
      }
      auto& b = tries[k].bonds;
      for (double& t : b.series.times) t -= t_hold;
      for (const auto& bond : b.series.values)
        for (double v : bond) {
          sum_I += v;
          ++n_I;
        }
      out.min_spacing = std::min(out.min_spacing, b.min_spacing);
      out.series.push_back(std::move(b.series));
      out.accepted.push_back(index);
    }
    next += batch;
  }
  out.mean_I = n_I ? sum_I / static_cast<double>(n_I) : 1.0;
  return out;
}

}  // namespace rydsim::md
