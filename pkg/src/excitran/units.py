"""Unit conventions.

All Hamiltonian inputs (site energies, couplings) are wavenumbers in cm^-1.
Time is picoseconds everywhere; every rate (dephasing, recombination,
trapping) is ps^-1. Wavenumbers are converted to angular frequency exactly
once, at the dynamics boundary, via omega = 2*pi*c*x with c in cm/ps, so
hbar never appears explicitly (hbar = 1 in rad/ps units).
"""

import math

# speed of light in cm/ps
C_CM_PER_PS = 0.0299792458

# rad/ps per cm^-1
TWO_PI_C = 2.0 * math.pi * C_CM_PER_PS

# k_B/(h*c): thermal energy as a wavenumber, cm^-1 per kelvin
KB_CM1_PER_K = 0.6950348004


def rad_per_ps(wavenumber_cm1):
    """Angular frequency (rad/ps) of a wavenumber given in cm^-1."""
    return TWO_PI_C * wavenumber_cm1


def thermal_wavenumber(temperature_k):
    """k_B*T expressed as a wavenumber in cm^-1."""
    return KB_CM1_PER_K * temperature_k
