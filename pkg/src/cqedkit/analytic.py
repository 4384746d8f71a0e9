"""Closed-form CPW properties: solver-free oracle for defaults and checks.

Conformal-mapping results for a coplanar waveguide on a thick substrate
with zero-thickness metal: the capacitance per unit length follows from
complete elliptic integrals of the modulus k = W / (W + 2s), and the
effective permittivity is the air/substrate average (eps_r + 1) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import SPEED_OF_LIGHT, VACUUM_PERMITTIVITY

__all__ = ["AnalyticError", "CpwAnalytic", "ellipk", "ellipe", "cpw_caps",
           "quarter_wave_freq"]

_AGM_RTOL = 1e-15


class AnalyticError(Exception):
    pass


def _agm_scan(k: float):
    """Arithmetic-geometric mean of (1, k') with the c_n deficit sequence."""
    a, b = 1.0, math.sqrt((1.0 - k) * (1.0 + k))
    c = k
    c2_sum = 0.5 * c * c
    n = 0
    while abs(c) > _AGM_RTOL * a and n < 64:
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        n += 1
        c2_sum += math.ldexp(c * c, n - 1)
    return a, c2_sum


def ellipk(k: float) -> float:
    """Complete elliptic integral of the first kind, modulus convention.

    K(k) = pi / (2 agm(1, sqrt(1 - k^2))), converged to ~1e-14 relative.
    """
    if not 0.0 <= k < 1.0:
        raise AnalyticError(f"modulus must satisfy 0 <= k < 1, got {k}")
    a, _ = _agm_scan(k)
    return math.pi / (2.0 * a)


def ellipe(k: float) -> float:
    """Complete elliptic integral of the second kind, modulus convention."""
    if not 0.0 <= k < 1.0:
        raise AnalyticError(f"modulus must satisfy 0 <= k < 1, got {k}")
    a, c2_sum = _agm_scan(k)
    return math.pi / (2.0 * a) * (1.0 - c2_sum)


@dataclass
class CpwAnalytic:
    trace_width: float
    gap: float
    permittivity: float
    modulus: float       # k = W / (W + 2s)
    eps_eff: float       # (eps_r + 1) / 2
    cap_per_len: float   # F / m
    phase_velocity: float  # m / s


def cpw_caps(trace_width: float, gap: float, permittivity: float) -> CpwAnalytic:
    """Per-length capacitance and effective permittivity of a CPW."""
    if trace_width <= 0 or gap <= 0:
        raise AnalyticError("trace width and gap must be positive")
    if permittivity < 1:
        raise AnalyticError("relative permittivity must be >= 1")
    k = trace_width / (trace_width + 2.0 * gap)
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    eps_eff = 0.5 * (permittivity + 1.0)
    cap = 4.0 * VACUUM_PERMITTIVITY * eps_eff * ellipk(k) / ellipk(kp)
    return CpwAnalytic(
        trace_width=trace_width,
        gap=gap,
        permittivity=permittivity,
        modulus=k,
        eps_eff=eps_eff,
        cap_per_len=cap,
        phase_velocity=SPEED_OF_LIGHT / math.sqrt(eps_eff),
    )


def quarter_wave_freq(length: float, eps_eff: float) -> float:
    """Fundamental resonance c / (4 l sqrt(eps_eff)) of a quarter-wave line."""
    if length <= 0:
        raise AnalyticError("resonator length must be positive")
    if eps_eff < 1:
        raise AnalyticError("effective permittivity must be >= 1")
    return SPEED_OF_LIGHT / (4.0 * length * math.sqrt(eps_eff))
