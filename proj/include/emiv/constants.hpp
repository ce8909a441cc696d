#pragma once

#include <complex>

namespace emiv {

using cplx = std::complex<double>;

constexpr double c0 = 299792458.0;             // vacuum speed of light [m/s]
constexpr double pi = 3.14159265358979323846;
constexpr double mu0 = 4.0 * pi * 1.0e-7;      // vacuum permeability [H/m]
constexpr double eps0 = 1.0 / (mu0 * c0 * c0); // vacuum permittivity [F/m]

constexpr cplx iu{0.0, 1.0};

/// Angular frequency for a frequency in Hz.
inline double omega_of(double freqHz) { return 2.0 * pi * freqHz; }

/// Background (free-space) wavenumber at a frequency in Hz.
inline double k0_of(double freqHz) { return omega_of(freqHz) / c0; }

}  // namespace emiv
