#pragma once

// Ponderomotive trapping of circular Rydberg atoms: beam intensities, trap
// depths and frequencies, orbit-averaged offsets and spin-motion estimates.
//
// Lengths in um, powers in W, potentials as E/h in Hz unless noted.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/constants.hpp"

namespace rydsim::trap {

/// Ponderomotive energy e^2 I / (2 m_e eps0 c omega_L^2), returned as E/h in Hz.
/// intensity in W/m^2, wavelength in um.
inline double ponderomotive_energy(double intensity, double wavelength_um) {
  if (intensity < 0) throw std::invalid_argument("ponderomotive_energy: negative intensity");
  if (!(wavelength_um > 0)) throw std::invalid_argument("ponderomotive_energy: wavelength must be positive");
  using namespace constants;
  const double omega = 2.0 * pi * speed_of_light / (wavelength_um * 1e-6);
  const double e = elementary_charge * elementary_charge * intensity /
                   (2.0 * electron_mass * vacuum_permittivity * speed_of_light * omega * omega);
  return e / planck_h;
}

/// Peak intensity (W/m^2) of a Gaussian beam with 1/e^2 radii wa, wb (um).
inline double gaussian_peak_intensity(double power, double wa_um, double wb_um) {
  return 2.0 * power / (constants::pi * wa_um * wb_um * 1e-12);
}

enum class BeamKind { laguerre_gauss, gaussian, lattice_pair };

/// One trapping beam. Geometry:
///  - laguerre_gauss: LG(l=1, p=0) along OX, focal plane, waist w0 = waist.
///  - gaussian: plug beam along OY centred at X = center, round waist.
///  - lattice_pair: two beams in XOY at +-angle from OY, each of power
///    `power`, 1/e^2 radii `waist` along OZ and `waist_long` along OX;
///    intensity node at X = center.
struct BeamSpec {
  BeamKind kind = BeamKind::gaussian;
  double power = 0.0;        // W (per beam for lattice_pair)
  double waist = 7.0;        // um
  double waist_long = 200.0; // um, lattice_pair only
  double wavelength = 1.0;   // um
  double angle_deg = 5.7;    // lattice_pair only
  double center = 0.0;       // um, position along OX

  void validate() const {
    if (power < 0) throw std::invalid_argument("BeamSpec: power must be non-negative");
    if (!(waist > 0) || (kind == BeamKind::lattice_pair && !(waist_long > 0)))
      throw std::invalid_argument("BeamSpec: waists must be positive");
    if (!(wavelength > 0)) throw std::invalid_argument("BeamSpec: wavelength must be positive");
    if (kind == BeamKind::lattice_pair && !(angle_deg > 0 && angle_deg < 90))
      throw std::invalid_argument("BeamSpec: lattice angle must lie in (0, 90) degrees");
  }

  double lattice_spacing() const { return wavelength / (2.0 * std::sin(angle_deg * constants::pi / 180.0)); }
};

/// d = lambda / (2 sin theta), lengths in um.
inline double lattice_spacing(double wavelength_um, double angle_deg) {
  return BeamSpec{BeamKind::lattice_pair, 0.0, 1.0, 1.0, wavelength_um, angle_deg}.lattice_spacing();
}

/// Ponderomotive potential (Hz) of one beam at (x, y, z) in um.
inline double beam_potential(const BeamSpec& b, double x, double y, double z) {
  double intensity = 0.0;
  switch (b.kind) {
    case BeamKind::laguerre_gauss: {
      const double r2 = (y * y + z * z) / (b.waist * b.waist);
      intensity = gaussian_peak_intensity(b.power, b.waist, b.waist) * 2.0 * r2 * std::exp(-2.0 * r2);
      break;
    }
    case BeamKind::gaussian: {
      const double u = x - b.center;
      intensity = gaussian_peak_intensity(b.power, b.waist, b.waist) *
                  std::exp(-2.0 * (u * u + z * z) / (b.waist * b.waist));
      break;
    }
    case BeamKind::lattice_pair: {
      const double u = x - b.center;
      const double k = 2.0 * constants::pi / b.wavelength * std::sin(b.angle_deg * constants::pi / 180.0);
      const double env = std::exp(-2.0 * u * u / (b.waist_long * b.waist_long) - 2.0 * z * z / (b.waist * b.waist));
      intensity = gaussian_peak_intensity(b.power, b.waist, b.waist_long) * env * 2.0 * (1.0 - std::cos(2.0 * k * u));
      break;
    }
  }
  return ponderomotive_energy(intensity, b.wavelength);
}

inline double total_potential(const std::vector<BeamSpec>& beams, double x, double y, double z) {
  double v = 0.0;
  for (const auto& b : beams) v += beam_potential(b, x, y, z);
  return v;
}

struct TrapReport {
  bool bound = false;
  std::string diagnostic;        // why no bound minimum was found
  double x0 = 0, y0 = 0, z0 = 0; // um, located minimum
  double depth_longitudinal = 0; // Hz
  double depth_transverse = 0;   // Hz
  double nu_X = 0, nu_Y = 0, nu_Z = 0;  // Hz (omega / 2 pi)
  double lattice_spacing = 0;    // um, 0 without lattice
  double ground_extent_X = 0;    // nm, sqrt(hbar / 2 M omega_X)
  double orbit_offset = 0;       // Hz, n = 50
  double differential_offset = 0;  // Hz, n = 50 vs 48
  double eta = 0;                // 6 dX0 / d
  double beta = 0;               // 4 pi J eta / omega_X
  double fit_change = 0;         // largest relative frequency change on window halving
};

/// Ground-state rms extent (nm) of a harmonic oscillator.
inline double ground_state_extent(double nu_hz, double mass = constants::rb87_mass) {
  if (!(nu_hz > 0)) throw std::invalid_argument("ground_state_extent: frequency must be positive");
  return std::sqrt(constants::hbar / (2.0 * mass * 2.0 * constants::pi * nu_hz)) * 1e9;
}

/// Bohr-ring orbit-averaged offset M (omega_X^2 + omega_Y^2) r_n^2 / 4 (Hz),
/// with r_n = a0 n^2 and in-plane frequencies nu_X, nu_Y (Hz).
inline double orbit_offset(double nu_X, double nu_Y, int n, double mass = constants::rb87_mass) {
  if (n < 1) throw std::invalid_argument("orbit_offset: n must be >= 1");
  const double rn = constants::bohr_radius * n * n;
  const double wx = 2.0 * constants::pi * nu_X, wy = 2.0 * constants::pi * nu_Y;
  return mass * (wx * wx + wy * wy) * rn * rn / 4.0 / constants::planck_h;
}

struct OrbitAverage {
  double offset = 0;        // Hz, state n
  double differential = 0;  // Hz, offset(n) - offset(n_low)
};

inline OrbitAverage orbit_average(const TrapReport& r, int n = 50, int n_low = 48,
                                  double mass = constants::rb87_mass) {
  const double a = orbit_offset(r.nu_X, r.nu_Y, n, mass);
  return {a, a - orbit_offset(r.nu_X, r.nu_Y, n_low, mass)};
}

struct MotionalCoupling {
  double eta = 0;
  double beta = 0;
};

/// eta = 6 dX0 / d and beta = 4 pi J eta / Omega_X, with Omega_X = 2 pi nu_X.
inline MotionalCoupling motional_coupling(double J_hz, double d_um, double dX0_nm, double nu_X_hz) {
  if (!(d_um > 0) || !(dX0_nm > 0) || !(nu_X_hz > 0) || J_hz < 0)
    throw std::invalid_argument("motional_coupling: inputs must be positive");
  MotionalCoupling m;
  m.eta = 6.0 * dX0_nm * 1e-3 / d_um;
  m.beta = 4.0 * constants::pi * J_hz * m.eta / (2.0 * constants::pi * nu_X_hz);
  return m;
}

namespace detail {

/// Minimum of f on [a, b] by golden-section search.
inline double golden_min(const std::function<double(double)>& f, double a, double b, int iters = 120) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

inline double curvature(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

inline double max_on(const std::function<double(double)>& f, double a, double b, int samples = 4000) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= samples; ++i) m = std::max(m, f(a + (b - a) * i / samples));
  return m;
}

}  // namespace detail

struct TrapOptions {
  double fit_window = 0.05;  // um, finite-difference step for the harmonic fit
  double J_hz = 0.0;         // exchange frequency used for beta
  double mass = constants::rb87_mass;
};

/// Locates the trap minimum near the origin and characterizes it.
inline TrapReport trap_profile(const std::vector<BeamSpec>& beams, const TrapOptions& opt = {}) {
  if (beams.empty()) throw std::invalid_argument("trap_profile: no beams");
  for (const auto& b : beams) b.validate();
  TrapReport r;
  double w_trans = std::numeric_limits<double>::infinity();
  for (const auto& b : beams) {
    if (b.kind == BeamKind::lattice_pair && r.lattice_spacing == 0.0) r.lattice_spacing = b.lattice_spacing();
    if (b.kind == BeamKind::laguerre_gauss) w_trans = std::min(w_trans, b.waist);
  }
  if (!std::isfinite(w_trans)) w_trans = beams.front().waist;
  const double span_x = r.lattice_spacing > 0 ? 0.5 * r.lattice_spacing : w_trans;
  auto V = [&](double x, double y, double z) { return total_potential(beams, x, y, z); };
  // Coordinate descent from the origin.
  double x = 0, y = 0, z = 0;
  for (int sweep = 0; sweep < 4; ++sweep) {
    x = detail::golden_min([&](double s) { return V(s, y, z); }, x - span_x, x + span_x);
    y = detail::golden_min([&](double s) { return V(x, s, z); }, y - 0.5 * w_trans, y + 0.5 * w_trans);
    z = detail::golden_min([&](double s) { return V(x, y, s); }, z - 0.5 * w_trans, z + 0.5 * w_trans);
  }
  r.x0 = x;
  r.y0 = y;
  r.z0 = z;
  const double acc = constants::planck_h / opt.mass * 1e12;  // (Hz/um^2) -> s^-2
  auto freqs = [&](double h) {
    std::array<double, 3> k = {detail::curvature([&](double s) { return V(s, y, z); }, x, h),
                               detail::curvature([&](double s) { return V(x, s, z); }, y, h),
                               detail::curvature([&](double s) { return V(x, y, s); }, z, h)};
    return k;
  };
  const auto k1 = freqs(opt.fit_window);
  const auto k2 = freqs(0.5 * opt.fit_window);
  const char* axis = "XYZ";
  for (int a = 0; a < 3; ++a)
    if (!(k1[a] > 0) || !(k2[a] > 0)) {
      r.diagnostic = std::string("no bound minimum: potential curvature along ") + axis[a] + " is not positive";
      return r;
    }
  std::array<double, 3> nu{};
  for (int a = 0; a < 3; ++a) {
    nu[a] = std::sqrt(k2[a] * acc) / (2.0 * constants::pi);
    const double nu1 = std::sqrt(k1[a] * acc) / (2.0 * constants::pi);
    r.fit_change = std::max(r.fit_change, std::abs(nu1 - nu[a]) / nu[a]);
  }
  r.bound = true;
  r.nu_X = nu[0];
  r.nu_Y = nu[1];
  r.nu_Z = nu[2];
  const double vmin = V(x, y, z);
  const double px = r.lattice_spacing > 0 ? r.lattice_spacing : 3.0 * w_trans;
  r.depth_longitudinal = detail::max_on([&](double s) { return V(s, y, z); }, x - px, x + px) - vmin;
  r.depth_transverse = detail::max_on([&](double s) { return V(x, s, z); }, y, y + 3.0 * w_trans) - vmin;
  r.ground_extent_X = ground_state_extent(r.nu_X, opt.mass);
  const auto oa = orbit_average(r, 50, 48, opt.mass);
  r.orbit_offset = oa.offset;
  r.differential_offset = oa.differential;
  if (r.lattice_spacing > 0) {
    const auto mc = motional_coupling(opt.J_hz, r.lattice_spacing, r.ground_extent_X, r.nu_X);
    r.eta = mc.eta;
    r.beta = mc.beta;
  }
  return r;
}

/// Potential averaged over a Bohr ring of radius a0 n^2 in the XOY plane
/// centred on (x, y, z), by uniform quadrature in the orbital angle.
inline double ring_average(const std::vector<BeamSpec>& beams, int n, double x, double y, double z,
                           int points = 256) {
  const double rn = constants::bohr_radius * n * n * 1e6;  // um
  double s = 0.0;
  for (int k = 0; k < points; ++k) {
    const double phi = 2.0 * constants::pi * k / points;
    s += total_potential(beams, x + rn * std::cos(phi), y + rn * std::sin(phi), z);
  }
  return s / points;
}

struct AnharmonicShift {
  double curvature = 0;    // Hz/nm^2, quadratic coefficient of the transition shift
  double shift_at = 0;     // Hz, shift at the requested displacement
};

/// Quadratic-in-X fit of the differential (n_up - n_down) orbit-averaged
/// potential along OX around the trap minimum, over +-fit_range.
inline AnharmonicShift anharmonic_shift(const std::vector<BeamSpec>& beams, const TrapReport& r, double X_nm,
                                        int n_up = 50, int n_down = 48, double fit_range_nm = 100.0,
                                        int samples = 41) {
  if (!r.bound) throw std::invalid_argument("anharmonic_shift: trap has no bound minimum");
  auto delta = [&](double dx_nm) {
    const double x = r.x0 + dx_nm * 1e-3;
    return ring_average(beams, n_up, x, r.y0, r.z0) - ring_average(beams, n_down, x, r.y0, r.z0);
  };
  // Least squares for delta = c0 + c2 X^2.
  const double d0 = delta(0.0);
  double sxx = 0, sxy = 0;
  for (int i = 0; i < samples; ++i) {
    const double X = -fit_range_nm + 2.0 * fit_range_nm * i / (samples - 1);
    const double u = X * X;
    sxx += u * u;
    sxy += u * (delta(X) - d0);
  }
  AnharmonicShift a;
  a.curvature = sxy / sxx;
  a.shift_at = a.curvature * X_nm * X_nm;
  return a;
}

/// Potential map on the XOZ plane (y = 0) as CSV x_um,z_um,potential_MHz.
inline void write_potential_map(std::ostream& os, const std::vector<BeamSpec>& beams, double x_min, double x_max,
                                int nx, double z_min, double z_max, int nz) {
  if (nx < 2 || nz < 2) throw std::invalid_argument("write_potential_map: need at least 2 points per axis");
  os << "x_um,z_um,potential_MHz\n";
  for (int i = 0; i < nx; ++i) {
    const double x = x_min + (x_max - x_min) * i / (nx - 1);
    for (int k = 0; k < nz; ++k) {
      const double z = z_min + (z_max - z_min) * k / (nz - 1);
      os << x << ',' << z << ',' << total_potential(beams, x, 0.0, z) * 1e-6 << '\n';
    }
  }
}

/// Beam set for the chain trap: LG guide plus lattice pair.
inline std::vector<BeamSpec> chain_trap_beams(double spacing_um = 5.0) {
  const bool wide = spacing_um > 6.0;
  BeamSpec lg{BeamKind::laguerre_gauss, 0.5, 7.0, 0.0, 1.0, 0.0, 0.0};
  BeamSpec lat{BeamKind::lattice_pair, wide ? 2.8 : 1.45, 7.0, 200.0, 1.0, wide ? 4.1 : 5.7, 0.0};
  return {lg, lat};
}

}  // namespace rydsim::trap
