#pragma once

// Loss channels of trapped circular atoms: capacitor inhibition factors,
// blackbody occupation, photoionization, background-gas collisions and the
// combined lifetime budget.

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/constants.hpp"

namespace rydsim::lifetime {

struct InhibitionFactors {
  double C_sigma = 0.0;
  double C_pi = 0.0;
};

/// Emission-rate modification factors for an atom midway between ideal
/// infinite plates at separation D, transition wavelength lambda (same units).
inline InhibitionFactors inhibition_factors(double D, double lambda) {
  if (!(D > 0) || !(lambda > 0)) throw std::invalid_argument("inhibition_factors: D and lambda must be positive");
  const long nmax = static_cast<long>(std::floor(2.0 * D / lambda));
  InhibitionFactors f;
  f.C_pi = 3.0 * lambda / (4.0 * D);
  for (long n = 1; n <= nmax; ++n) {
    const double u = n * lambda / (2.0 * D);
    if (n % 2 == 1)
      f.C_sigma += 3.0 * lambda / (4.0 * D) * (1.0 + u * u);  // sin^2(n pi / 2) = 1
    else
      f.C_pi += 3.0 * lambda / (2.0 * D) * (1.0 - u * u);  // cos^2(n pi / 2) = 1
  }
  return f;
}

/// Mean blackbody photon number per mode at frequency nu (Hz), temperature T (K).
/// Approximate helper for rescaling fixed blackbody channels with temperature.
inline double blackbody_occupation(double nu, double T) {
  if (!(nu > 0)) throw std::invalid_argument("blackbody_occupation: frequency must be positive");
  if (T < 0) throw std::invalid_argument("blackbody_occupation: negative temperature");
  if (T == 0) return 0.0;
  return 1.0 / std::expm1(constants::planck_h * nu / (constants::boltzmann_k * T));
}

namespace detail {

/// ln K_nu(x) for x > 0; large arguments use the asymptotic series so that
/// results far below the double range stay finite.
inline double log_bessel_k(double nu, double x) {
  if (!(x > 0)) throw std::domain_error("log_bessel_k: argument must be positive");
  if (x < 600.0) return std::log(std::cyl_bessel_k(nu, x));
  const double mu = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 8; ++k) {
    term *= (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * x);
    sum += term;
  }
  return 0.5 * std::log(constants::pi / (2.0 * x)) - x + std::log(sum);
}

inline double log_add(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

/// Photoionization cross-section of hydrogenic |n, l> in an optical field.
/// Values are carried as log10 of m^2 since circular states underflow.
struct PhotoionizationCrossSection {
  double bessel_argument = 0.0;  // omega l^3 / 3 (atomic units)
  double log10_bessel = 0.0;     // full modified-Bessel expression
  double log10_asymptotic = 0.0; // leading-order large-argument limit of the same
  double log10_printed = 0.0;    // asymptotic expression with a single 1/omega' factor

  double value() const { return std::pow(10.0, log10_bessel); }  // m^2, may underflow to 0
};

/// omega_au: photon angular frequency in atomic units (hbar omega / E_h).
inline PhotoionizationCrossSection photoionization_cross_section(int n, int l, double omega_au) {
  if (l < 1) throw std::invalid_argument("photoionization_cross_section: l must be >= 1");
  if (n <= l) throw std::invalid_argument("photoionization_cross_section: need n > l");
  if (!(omega_au > 0)) throw std::invalid_argument("photoionization_cross_section: omega must be positive");
  const double c = constants::c_atomic;
  const double L = static_cast<double>(l);
  const double x = omega_au * L * L * L / 3.0;
  const double ln_a0sq = 2.0 * std::log(constants::bohr_radius);
  const double ln10 = std::log(10.0);
  PhotoionizationCrossSection s;
  s.bessel_argument = x;
  const double lk = detail::log_add(2.0 * detail::log_bessel_k(2.0 / 3.0, x), 2.0 * detail::log_bessel_k(1.0 / 3.0, x));
  const double pre = std::log(4.0 * std::pow(L, 4) / (9.0 * c * std::pow(n, 3) * omega_au));
  s.log10_bessel = (pre + lk + ln_a0sq) / ln10;
  const double common = std::log(4.0 * constants::pi / 3.0 * constants::fine_structure * L / std::pow(n, 3)) -
                        2.0 * omega_au * L * L * L / 3.0 + ln_a0sq;
  s.log10_asymptotic = (common - 2.0 * std::log(omega_au)) / ln10;
  s.log10_printed = (common - std::log(omega_au)) / ln10;
  return s;
}

/// hbar omega / E_h for a photon of the given wavelength (m).
inline double photon_omega_au(double wavelength_m) {
  return constants::planck_h * constants::speed_of_light / wavelength_m / constants::hartree_energy;
}

/// Mean thermal speed sqrt(8 k T / pi m) in m/s.
inline double mean_thermal_speed(double T, double mass) {
  if (!(T > 0) || !(mass > 0)) throw std::invalid_argument("mean_thermal_speed: inputs must be positive");
  return std::sqrt(8.0 * constants::boltzmann_k * T / (constants::pi * mass));
}

/// 1 / (n sigma v) in s; sigma in units of a0^2, density in m^-3.
/// Zero density gives an infinite lifetime.
inline double collision_lifetime(double sigma_a0sq, double density, double T_gas, double gas_mass = constants::he4_mass) {
  if (sigma_a0sq < 0 || density < 0) throw std::invalid_argument("collision_lifetime: negative input");
  const double rate = density * sigma_a0sq * constants::bohr_radius * constants::bohr_radius *
                      mean_thermal_speed(T_gas, gas_mass);
  return rate > 0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

enum class Origin { computed, fixed_input };

struct LossChannel {
  std::string name;
  double lifetime = std::numeric_limits<double>::infinity();  // s
  Origin origin = Origin::fixed_input;
  std::string note;  // where a fixed value comes from

  double rate() const { return std::isinf(lifetime) ? 0.0 : 1.0 / lifetime; }
};

struct LifetimeBudget {
  std::vector<LossChannel> channels;
  double combined = 0.0;  // s, single atom
  int atoms = 1;
  double chain = 0.0;     // s, combined / atoms

  void write_csv(std::ostream& os) const {
    os << "channel,lifetime_s\n";
    auto num = [](double v) { return std::isinf(v) ? std::string("inf") : std::to_string(v); };
    for (const auto& c : channels) os << c.name << ',' << num(c.lifetime) << '\n';
    os << "combined," << num(combined) << '\n';
    os << "chain_" << atoms << "," << num(chain) << '\n';
  }
};

/// Total rate is the sum of channel rates; infinite lifetimes contribute 0.
inline LifetimeBudget combine(std::vector<LossChannel> channels, int atoms = 1) {
  if (channels.empty()) throw std::invalid_argument("combine: need at least one channel");
  if (atoms < 1) throw std::invalid_argument("combine: atom count must be >= 1");
  double rate = 0.0;
  for (const auto& c : channels) {
    if (!(c.lifetime > 0) || std::isnan(c.lifetime))
      throw std::invalid_argument("combine: channel '" + c.name + "' has a non-positive lifetime");
    rate += c.rate();
  }
  LifetimeBudget b;
  b.channels = std::move(channels);
  b.atoms = atoms;
  b.combined = rate > 0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
  b.chain = b.combined / atoms;
  return b;
}

/// Channels for a 48C pair at d = 5 um, F = 6 V/cm, B = 13 G, with the
/// collision row recomputed from the cross-section estimate when asked.
inline std::vector<LossChannel> reference_channels(bool compute_collisions = false) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<LossChannel> c = {
      {"residual_spontaneous_emission", 2500.0, Origin::fixed_input, "finite gold capacitor, D = 2 mm"},
      {"blackbody", 630.0, Origin::fixed_input, "48C excitation at 0.4 K"},
      {"level_mixing", 88.0, Origin::fixed_input, "pair diagonalization at F = 6 V/cm, B = 13 G"},
      {"dipolar_relaxation", inf, Origin::fixed_input, "negligible matrix element"},
      {"photoionization", inf, Origin::fixed_input, "circular state, cross-section below 1e-100 m^2"},
      {"background_collisions", 400.0, Origin::fixed_input, "5e4 a0^2 at 2e11 m^-3"},
      {"compton_diffusion", 180.0, Origin::fixed_input, "worst case, Thomson model"},
  };
  if (compute_collisions) {
    c[5].lifetime = collision_lifetime(5e4, 2e11, 1.0);
    c[5].origin = Origin::computed;
    c[5].note = "He at 1 K, mean thermal speed";
  }
  return c;
}

}  // namespace rydsim::lifetime
