"""Resonance parameter fitting and mesh-convergence extrapolation.

The transmission dip of a feedline-coupled (notch) resonator is fitted
with the diameter-corrected model

    S21(f) = A e^{i theta} e^{-2 pi i f tau}
             [1 - (Q_l / |Q_e|) e^{i phi} / (1 + 2 i Q_l (f - f_r) / f_r)]

where the complex prefactor absorbs the instrument background and phi the
impedance-mismatch rotation. The external coupling rate is reported as
kappa = f_r / Q_e in Hz.

Convergence studies fit f(r) = f_inf + B 2^{-p r} over refinement points
at fixed element order, mirroring the factor-of-two mesh-size law, and
judge a candidate point against the extrapolated asymptote.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .results import SParamSet

__all__ = ["FitError", "FitResult", "ConvergencePoint", "notch_model",
           "fit_notch", "kappa_from_q", "richardson_extrapolate",
           "check_convergence_criterion"]

# Optimizer contract: stop on relative parameter steps below this or after
# the iteration budget.
FIT_XTOL = 1e-10
FIT_MAX_ITER = 200
CONVERGENCE_LIMIT = 0.003  # inclusive pass threshold on |f - f_inf| / f_inf


class FitError(Exception):
    pass


def notch_model(f: np.ndarray, f_r: float, q_l: float, q_e_mag: float,
                phi: float = 0.0, amplitude: float = 1.0, theta: float = 0.0,
                delay: float = 0.0) -> np.ndarray:
    """Evaluate the notch transmission model at frequencies f (Hz)."""
    f = np.asarray(f, dtype=float)
    resonator = 1.0 - (q_l / q_e_mag) * np.exp(1j * phi) / (
        1.0 + 2j * q_l * (f - f_r) / f_r)
    background = amplitude * np.exp(1j * (theta - 2.0 * np.pi * f * delay))
    return background * resonator


def kappa_from_q(f_r: float, q_e: float) -> float:
    """External coupling rate kappa = f_r / Q_e in Hz."""
    if q_e == 0:
        raise FitError("external quality factor must be nonzero")
    return f_r / q_e


@dataclass
class FitResult:
    f_r: float
    q_l: float
    q_e_mag: float
    phi: float
    kappa: float
    amplitude: float
    theta: float
    delay: float
    residual_rms: float
    covariance: np.ndarray
    param_names: tuple[str, ...] = ("amplitude", "theta", "delay", "q_l",
                                    "q_e_mag", "phi", "f_r")

    def __post_init__(self):
        if self.kappa <= 0:
            raise FitError("fitted coupling rate must be positive")
        if self.q_l > 1.05 * self.q_e_mag:
            warnings.warn(
                f"loaded Q {self.q_l:.0f} exceeds |Q_e| {self.q_e_mag:.0f}; "
                "check the fit window", stacklevel=2)

    def model(self, f: np.ndarray) -> np.ndarray:
        return notch_model(f, self.f_r, self.q_l, self.q_e_mag, self.phi,
                           self.amplitude, self.theta, self.delay)


def _initial_guess(f: np.ndarray, z: np.ndarray) -> np.ndarray:
    edge = max(len(f) // 10, 2)
    off = np.r_[0:edge, len(f) - edge:len(f)]
    phase = np.unwrap(np.angle(z))
    slope = np.polyfit(f[off], phase[off], 1)[0]
    delay = -slope / (2.0 * np.pi)
    z_flat = z * np.exp(2j * np.pi * f * delay)
    amplitude = float(np.median(np.abs(z_flat[off])))
    theta = float(np.angle(np.mean(z_flat[off] / np.abs(z_flat[off]))))

    mag = np.abs(z_flat)
    k_min = int(np.argmin(mag))
    f_r = f[k_min]
    depth = 1.0 - mag[k_min] / amplitude
    depth = min(max(depth, 1e-3), 0.999)
    half = amplitude * (1.0 - 0.5 * depth)
    above = np.nonzero(mag > half)[0]
    lo = above[above < k_min]
    hi = above[above > k_min]
    if len(lo) and len(hi):
        fwhm = f[hi[0]] - f[lo[-1]]
    else:
        fwhm = (f[-1] - f[0]) / 10.0
    q_l = f_r / max(fwhm, (f[1] - f[0]))
    q_e = q_l / depth
    return np.array([amplitude, theta, delay, q_l, q_e, 0.0, f_r])


def fit_notch(sweep: SParamSet, through_pair: tuple[int, int],
              window: tuple[float, float]) -> FitResult:
    """Least-squares notch fit of one through-transmission entry.

    Needs at least 20 samples inside the window and a visible dip
    (min |S21| below 99% of the window median). Raises on a missing dip,
    divergence, or a resonance pinned to the window edge.
    """
    lo, hi = window
    mask = (sweep.frequencies >= lo) & (sweep.frequencies <= hi)
    f = sweep.frequencies[mask]
    z = sweep.s(*through_pair)[mask]
    if len(f) < 20:
        raise FitError(f"only {len(f)} samples in the fit window; need >= 20")
    mag = np.abs(z)
    if mag.min() >= 0.99 * np.median(mag):
        raise FitError("no transmission dip found in the fit window")

    x0 = _initial_guess(f, z)
    scale = np.array([max(x0[0], 1e-3), 1.0, 1.0 / (f[-1] - f[0]),
                      max(x0[3], 1.0), max(x0[4], 1.0), 1.0, x0[6]])

    def residuals(x):
        model = notch_model(f, x[6], x[3], x[4], x[5], x[0], x[1], x[2])
        d = model - z
        return np.concatenate([d.real, d.imag])

    try:
        res = least_squares(residuals, x0, method="lm", x_scale=scale,
                            xtol=FIT_XTOL, ftol=FIT_XTOL, gtol=None,
                            max_nfev=FIT_MAX_ITER * (len(x0) + 1))
    except Exception as exc:
        raise FitError(f"notch fit diverged: {exc}") from exc
    if not np.all(np.isfinite(res.x)):
        raise FitError("notch fit diverged to non-finite parameters")
    amplitude, theta, delay, q_l, q_e, phi, f_r = res.x
    q_l, q_e = abs(q_l), abs(q_e)
    if not lo <= f_r <= hi:
        raise FitError(f"fitted resonance {f_r:.6e} Hz escaped the window")
    grid = float(np.median(np.diff(f)))
    if f_r - lo < grid or hi - f_r < grid:
        raise FitError("fitted resonance pinned to the window edge")

    dof = max(2 * len(f) - len(res.x), 1)
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj) * (2.0 * res.cost / dof)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj) * (2.0 * res.cost / dof)
    rms = float(np.sqrt(np.mean(np.abs(residuals(res.x)) ** 2))) / amplitude
    return FitResult(
        f_r=float(f_r), q_l=float(q_l), q_e_mag=float(q_e), phi=float(phi),
        kappa=kappa_from_q(float(f_r), float(q_e)),
        amplitude=float(amplitude), theta=float(theta), delay=float(delay),
        residual_rms=rms, covariance=cov,
    )


# ---------------------------------------------------------------------------
# Convergence extrapolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergencePoint:
    r: float
    order: int
    dofs: int
    frequency: float  # Hz
    elapsed: float = 0.0  # s


@dataclass
class Extrapolation:
    f_inf: float
    rate: float
    amplitude: float
    deviations: list[float] = field(default_factory=list)  # |f - f_inf| / f_inf


def _model(r: np.ndarray, f_inf: float, b: float, p: float) -> np.ndarray:
    return f_inf + b * np.exp2(-p * r)


def richardson_extrapolate(points: list[ConvergencePoint]) -> Extrapolation:
    """Fit f(r) = f_inf + B 2^{-p r} over a fixed-order refinement sequence.

    Needs at least 3 distinct refinement ratios; the frequency sequence
    must approach its limit monotonically (up to ~1e-12 relative noise).
    Initialization uses the geometric ratio of the last three points.
    """
    pts = sorted(points, key=lambda q: q.r)
    r = np.array([q.r for q in pts])
    f = np.array([q.frequency for q in pts])
    if len(set(r.tolist())) < 3:
        raise FitError("convergence extrapolation needs >= 3 distinct r values")
    orders = {q.order for q in pts}
    if len(orders) != 1:
        raise FitError("convergence extrapolation mixes element orders")
    dofs = [q.dofs for q in pts]
    if all(d > 0 for d in dofs) and any(b <= a for a, b in zip(dofs, dofs[1:])):
        raise FitError("degrees of freedom do not increase with refinement")

    scale = float(np.abs(f).max())
    d = np.diff(f)
    noise = 1e-12 * scale
    signs = {int(np.sign(x)) for x in d if abs(x) > noise}
    if len(signs) > 1:
        raise FitError("frequency sequence is not monotone beyond noise tolerance")
    if not signs:
        return Extrapolation(f_inf=float(np.mean(f)), rate=0.0, amplitude=0.0,
                             deviations=[0.0] * len(f))

    ra, rb, rc = r[-3:]
    fa, fb, fc = f[-3:]
    h = 0.5 * ((rb - ra) + (rc - rb))
    ratio = (fa - fb) / (fb - fc) if abs(fb - fc) > noise else 2.0
    p0 = np.log2(abs(ratio)) / h if ratio > 0 else 1.0
    p0 = min(max(p0, 0.05), 64.0)
    denom = np.exp2(-p0 * rb) - np.exp2(-p0 * rc)
    b0 = (fb - fc) / denom if abs(denom) > 0 else d[-1]
    f0 = fc - b0 * np.exp2(-p0 * rc)

    def residuals(x):
        return _model(r, x[0], x[1], x[2]) - f

    res = least_squares(residuals, np.array([f0, b0, p0]), method="lm",
                        x_scale=np.array([scale, max(abs(b0), 1e-9 * scale), 1.0]),
                        xtol=1e-15, ftol=1e-15, gtol=None, max_nfev=4000)
    f_inf, b, p = res.x
    if not np.isfinite(f_inf) or f_inf <= 0:
        raise FitError("convergence extrapolation diverged")
    deviations = [float(abs(q.frequency - f_inf) / f_inf) for q in pts]
    return Extrapolation(f_inf=float(f_inf), rate=float(p), amplitude=float(b),
                         deviations=deviations)


def check_convergence_criterion(points: list[ConvergencePoint],
                                candidate: tuple[float, int],
                                f_inf: float) -> tuple[bool, float]:
    """Deviation of one (r, order) point from the extrapolated asymptote.

    Passes iff |f - f_inf| / f_inf <= 0.003, boundary inclusive.
    """
    r, order = candidate
    match = [q for q in points if q.r == r and q.order == order]
    if not match:
        raise FitError(f"no convergence point at r={r}, order={order}")
    deviation = abs(match[0].frequency - f_inf) / f_inf
    return deviation <= CONVERGENCE_LIMIT, float(deviation)
