// units.hpp - unit conventions.
//
// hbar = 1. Energies are wavenumbers (cm^-1), times are ps, rates are ps^-1.
// The only conversion in the engine is cm^-1 -> rad/ps, applied once inside
// the commutator and the closed-system phase factors.

#pragma once

#include <numbers>

namespace vibsync::units {

/// Speed of light in cm/ps: converts cm^-1 to cycles per ps.
inline constexpr double kCyclesPerPsPerWavenumber = 0.0299792458;

/// 2*pi*c: converts cm^-1 to angular frequency in rad/ps.
inline constexpr double kAngularPerWavenumber = 2.0 * std::numbers::pi * kCyclesPerPsPerWavenumber;

inline constexpr double to_angular(double wavenumber) noexcept {
    return kAngularPerWavenumber * wavenumber;
}

inline constexpr double angular_to_wavenumber(double rad_per_ps) noexcept {
    return rad_per_ps / kAngularPerWavenumber;
}

inline constexpr double cycles_to_wavenumber(double cycles_per_ps) noexcept {
    return cycles_per_ps / kCyclesPerPsPerWavenumber;
}

/// Oscillation period (ps) of a coherence at the given wavenumber.
inline constexpr double period_ps(double wavenumber) noexcept {
    return 1.0 / (kCyclesPerPsPerWavenumber * wavenumber);
}

}  // namespace vibsync::units
