"""Physical constants (CODATA 2018, SI units)."""

import math

# Exact by SI definition.
PLANCK_H = 6.62607015e-34  # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
SPEED_OF_LIGHT = 299_792_458.0  # m / s

VACUUM_PERMITTIVITY = 8.8541878128e-12  # F / m

# Magnetic flux quantum h / 2e, kept at full double precision.
FLUX_QUANTUM = PLANCK_H / (2.0 * ELEMENTARY_CHARGE)  # Wb

# Reduced flux quantum, the inductive energy scale of a Josephson element.
REDUCED_FLUX_QUANTUM = FLUX_QUANTUM / (2.0 * math.pi)  # Wb
