#pragma once

// Physical constants (CODATA 2018, SI) and unit helpers shared by all modules.
// Energies inside the spin and trap models are frequencies (E/h, in Hz).

#include <numbers>

namespace rydsim::constants {

inline constexpr double pi = std::numbers::pi;

inline constexpr double planck_h = 6.62607015e-34;            // J s
inline constexpr double hbar = planck_h / (2.0 * pi);         // J s
inline constexpr double boltzmann_k = 1.380649e-23;           // J / K
inline constexpr double speed_of_light = 299792458.0;         // m / s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double electron_mass = 9.1093837015e-31;     // kg
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F / m
inline constexpr double bohr_radius = 5.29177210903e-11;      // m
inline constexpr double fine_structure = 7.2973525693e-3;
inline constexpr double hartree_energy = 4.3597447222071e-18;  // J (= 2 Ry)
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg

inline constexpr double rb87_mass = 86.909180527 * atomic_mass_unit;
inline constexpr double he4_mass = 4.002603254 * atomic_mass_unit;

// Speed of light in atomic units (1 / alpha).
inline constexpr double c_atomic = 1.0 / fine_structure;

inline constexpr double um = 1e-6;
inline constexpr double mm = 1e-3;
inline constexpr double kHz = 1e3;
inline constexpr double MHz = 1e6;
inline constexpr double GHz = 1e9;

}  // namespace rydsim::constants
