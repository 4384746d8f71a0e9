"""Quantized circuit Hamiltonians from EM outputs.

Two routes:

* Energy-participation quantization: leading-order (quartic junction
  expansion) dispersive shifts from modal participations,
  chi_mn = f_m f_n sum_j p_mj p_nj / (4 E_Jj / h), alpha_m = chi_mm / 2.
* Lumped-oscillator reduction of the Maxwell capacitance matrix:
  charging energies from the total node capacitance and capacitive-divider
  couplings g = (C_c / (2 sqrt(C_1 C_2))) sqrt(f_1 f_2).

Sign convention: alpha and chi are reported as positive magnitudes of
downward dispersive shifts; the dressed frequencies subtract them. This
matches the transmon limit alpha ~ E_C > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import ELEMENTARY_CHARGE, PLANCK_H, REDUCED_FLUX_QUANTUM
from .results import MaxwellCapMatrix, ModeResult

__all__ = ["QuantizeError", "HamiltonianSpec", "josephson_energy",
           "charging_energy", "transmon_frequency", "epr_kerr", "lom_reduce"]


class QuantizeError(Exception):
    pass


def josephson_energy(inductance: float) -> float:
    """Josephson energy (Phi_0 / 2 pi)^2 / L_J of a linearized junction, in J."""
    if inductance <= 0:
        raise QuantizeError(f"junction inductance must be positive, got {inductance}")
    return REDUCED_FLUX_QUANTUM**2 / inductance


def charging_energy(total_capacitance: float) -> float:
    """Single-electron charging energy e^2 / (2 C_Sigma), in J."""
    if total_capacitance <= 0:
        raise QuantizeError(
            f"total capacitance must be positive, got {total_capacitance}")
    return ELEMENTARY_CHARGE**2 / (2.0 * total_capacitance)


def transmon_frequency(e_j: float, e_c: float) -> float:
    """Leading-order transmon 0-1 frequency (sqrt(8 E_J E_C) - E_C) / h, in Hz."""
    if e_j <= 0 or e_c <= 0:
        raise QuantizeError("transmon energies must be positive")
    return (np.sqrt(8.0 * e_j * e_c) - e_c) / PLANCK_H


@dataclass
class HamiltonianSpec:
    """Quantized-circuit summary: frequencies, Kerr matrix, couplings.

    Frequencies in Hz; ``chi`` is symmetric with ``2 * alpha`` on the
    diagonal on the participation route; ``g`` holds pairwise couplings on
    the lumped-model route. Energies in joules.
    """

    mode_names: list[str]
    frequencies: np.ndarray                # bare, Hz
    alpha: np.ndarray                      # Hz
    chi: np.ndarray                        # Hz, symmetric
    dressed_frequencies: np.ndarray        # Hz
    g: np.ndarray = None                   # Hz, pairwise couplings
    e_j: dict[str, float] = field(default_factory=dict)   # J per junction
    e_c: dict[str, float] = field(default_factory=dict)   # J per subsystem

    def __post_init__(self):
        n = len(self.mode_names)
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.chi = np.asarray(self.chi, dtype=float)
        self.dressed_frequencies = np.asarray(self.dressed_frequencies, dtype=float)
        if self.g is None:
            self.g = np.zeros((n, n))
        self.g = np.asarray(self.g, dtype=float)
        if np.any(self.frequencies <= 0):
            raise QuantizeError("mode frequencies must be positive")
        if not np.array_equal(self.chi, self.chi.T):
            raise QuantizeError("chi matrix must be symmetric")

    def report_rows(self) -> list[dict]:
        rows = []
        for i, name in enumerate(self.mode_names):
            rows.append({
                "mode": name,
                "f_ghz": self.frequencies[i] / 1e9,
                "f_dressed_ghz": self.dressed_frequencies[i] / 1e9,
                "alpha_mhz": self.alpha[i] / 1e6,
                "chi_mhz": [self.chi[i, j] / 1e6 for j in range(len(self.mode_names))],
                "g_mhz": [self.g[i, j] / 1e6 for j in range(len(self.mode_names))],
            })
        return rows


def epr_kerr(modes: list[ModeResult], junction_energies: dict[str, float]) -> HamiltonianSpec:
    """Energy-participation quantization of solved modes.

    Every junction must have a participation entry in every mode (a mode
    with no junctions at all is a bare resonator and contributes zeros).
    ``junction_energies`` maps junction name to E_J in joules.
    """
    n = len(modes)
    if n == 0:
        raise QuantizeError("no modes to quantize")
    for e_j in junction_energies.values():
        if e_j <= 0:
            raise QuantizeError("junction energies must be positive")
    f = np.array([m.frequency for m in modes])
    p = np.zeros((n, max(len(junction_energies), 1)))
    names = sorted(junction_energies)
    for i, mode in enumerate(modes):
        for j, junction in enumerate(names):
            if junction not in mode.participations:
                raise QuantizeError(
                    f"mode {mode.index} lacks a participation for junction "
                    f"{junction!r}")
            p[i, j] = mode.participations[junction]

    ej_hz = np.array([junction_energies[j] / PLANCK_H for j in names]) \
        if names else np.zeros(1)
    chi = np.zeros((n, n))
    for i in range(n):
        for k in range(i, n):
            val = f[i] * f[k] * float(np.sum(p[i] * p[k] / (4.0 * ej_hz))) \
                if names else 0.0
            chi[i, k] = chi[k, i] = val
    alpha = np.diag(chi) / 2.0
    dressed = f - alpha - 0.5 * (chi.sum(axis=1) - np.diag(chi))
    return HamiltonianSpec(
        mode_names=[f"mode_{m.index}" for m in modes],
        frequencies=f,
        alpha=alpha,
        chi=chi,
        dressed_frequencies=dressed,
        e_j={j: junction_energies[j] for j in names},
    )


def _merge_terminals(m: MaxwellCapMatrix, groups: list[list[str]]) -> np.ndarray:
    """Collapse terminal groups into single nodes by summing rows/columns."""
    index = {name: i for i, name in enumerate(m.terminal_names)}
    merged = np.zeros((len(groups), len(groups)))
    for a, ga in enumerate(groups):
        for b, gb in enumerate(groups):
            merged[a, b] = sum(m.matrix[index[x], index[y]] for x in ga for y in gb)
    return merged


def lom_reduce(m: MaxwellCapMatrix, node_map: dict[str, dict],
               resonator_frequencies: dict[str, float] | None = None) -> HamiltonianSpec:
    """Lumped-oscillator reduction of a Maxwell capacitance matrix.

    ``node_map`` maps subsystem name to ``{"terminals": [...], "kind":
    "qubit" | "resonator", "e_j": joules (qubits only)}``. Multi-terminal
    subsystems are merged into one node first. Per subsystem the total
    capacitance is the merged Maxwell diagonal; qubits get E_C and the
    transmon frequency estimate, resonators take their frequency from
    ``resonator_frequencies``. Couplings use the capacitive divider
    g = (C_c / (2 sqrt(C_1 C_2))) sqrt(f_1 f_2).
    """
    if not node_map:
        raise QuantizeError("node map is empty")
    names = list(node_map)
    known = set(m.terminal_names)
    for name, sub in node_map.items():
        for t in sub.get("terminals", []):
            if t not in known:
                raise QuantizeError(f"subsystem {name!r} references unknown "
                                    f"terminal {t!r}")
    seen: set[str] = set()
    for sub in node_map.values():
        for t in sub.get("terminals", []):
            if t in seen:
                raise QuantizeError(f"terminal {t!r} assigned to two subsystems")
            seen.add(t)

    merged = _merge_terminals(m, [node_map[k]["terminals"] for k in names])
    c_sigma = np.diag(merged).copy()
    resonator_frequencies = resonator_frequencies or {}

    f = np.zeros(len(names))
    alpha = np.zeros(len(names))
    e_c: dict[str, float] = {}
    e_j: dict[str, float] = {}
    for i, name in enumerate(names):
        sub = node_map[name]
        if c_sigma[i] <= 0:
            raise QuantizeError(f"subsystem {name!r} has no capacitance")
        if sub.get("kind", "qubit") == "qubit":
            if "e_j" not in sub:
                raise QuantizeError(f"qubit subsystem {name!r} needs an e_j entry")
            ec = charging_energy(c_sigma[i])
            f[i] = transmon_frequency(sub["e_j"], ec)
            alpha[i] = ec / PLANCK_H
            e_c[name] = ec
            e_j[name] = sub["e_j"]
        else:
            if name not in resonator_frequencies:
                raise QuantizeError(
                    f"resonator subsystem {name!r} needs a frequency")
            f[i] = resonator_frequencies[name]

    g = np.zeros((len(names), len(names)))
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            c_c = -merged[i, j]
            g[i, j] = g[j, i] = (c_c / (2.0 * np.sqrt(c_sigma[i] * c_sigma[j]))
                                 * np.sqrt(f[i] * f[j]))
    return HamiltonianSpec(
        mode_names=names,
        frequencies=f,
        alpha=alpha,
        chi=np.zeros((len(names), len(names))),
        dressed_frequencies=f.copy(),
        g=g,
        e_j=e_j,
        e_c=e_c,
    )
