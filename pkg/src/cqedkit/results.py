"""Typed parsing of solver output tables.

Covers the four CSV shapes the post-processing consumes: the Maxwell
capacitance matrix, the eigenfrequency table, the per-junction energy
participation table, and the port S-parameter sweep. Column headers vary
across solver versions; matching is case-insensitive and prefix-based
against a small alias table, with units declared in the header like
``f (GHz)`` or ``C (fF)``.
"""

from __future__ import annotations

import cmath
import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ResultsError", "MaxwellCapMatrix", "ModeResult", "SParamSet",
    "parse_cap_csv", "maxwell_to_mutual", "mutual_to_maxwell",
    "parse_eig_csv", "parse_epr_csv", "join_modes", "load_modes",
    "filter_modes", "parse_sparams_csv",
]

SYMMETRY_RTOL = 1e-6
EPR_SLACK = 1e-6
PASSIVITY_SLACK = 1e-3

_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "thz": 1e12}
_CAP_UNITS = {"f": 1.0, "mf": 1e-3, "uf": 1e-6, "nf": 1e-9, "pf": 1e-12,
              "ff": 1e-15, "af": 1e-18}


class ResultsError(Exception):
    pass


def _read_rows(path: str | Path) -> list[list[str]]:
    text = Path(path).read_text()
    rows = []
    for row in csv.reader(text.splitlines(), skipinitialspace=True):
        cells = [c.strip() for c in row]
        if any(cells):
            rows.append(cells)
    if not rows:
        raise ResultsError(f"{path}: file holds no table rows")
    return rows


def _split_unit(header: str) -> tuple[str, str]:
    """'Re{f} (GHz)' -> ('re{f}', 'ghz'); '|S[2][1]| (dB)' -> ('|s[2][1]|', 'db')."""
    m = re.match(r"^(.*?)\s*[(\[]([^)\]]*)[)\]]\s*$", header.strip())
    if m:
        return m.group(1).strip().lower(), m.group(2).strip().lower().rstrip(".")
    return header.strip().lower(), ""


def _column(headers: list[str], aliases: tuple[str, ...]) -> int | None:
    for i, h in enumerate(headers):
        name, _ = _split_unit(h)
        if any(name == a or name.startswith(a) for a in aliases):
            return i
    return None


def _floats(row: list[str], path, line: int) -> list[float]:
    try:
        return [float(c) for c in row]
    except ValueError as exc:
        raise ResultsError(f"{path}:{line}: non-numeric cell ({exc})") from exc


# ---------------------------------------------------------------------------
# Capacitance matrix
# ---------------------------------------------------------------------------

@dataclass
class MaxwellCapMatrix:
    """Maxwell (terminal charge vs voltage) capacitance matrix in farads.

    Symmetrized on load; positive diagonal, non-positive off-diagonal,
    non-negative row sums (capacitance to ground).
    """

    terminal_names: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        n = len(self.terminal_names)
        if self.matrix.shape != (n, n):
            raise ResultsError("capacitance matrix shape does not match terminals")
        scale = float(np.abs(self.matrix).max()) or 1.0
        asym = float(np.abs(self.matrix - self.matrix.T).max())
        if asym > SYMMETRY_RTOL * scale:
            raise ResultsError(
                f"capacitance matrix asymmetry {asym / scale:.2e} exceeds "
                f"{SYMMETRY_RTOL:.0e} relative tolerance")
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        diag = np.diag(self.matrix)
        if np.any(diag <= 0):
            raise ResultsError("capacitance matrix diagonal must be positive")
        off = self.matrix - np.diag(diag)
        if np.any(off > SYMMETRY_RTOL * scale):
            raise ResultsError(
                "positive off-diagonal entry violates the Maxwell sign convention")
        if np.any(self.matrix.sum(axis=1) < -SYMMETRY_RTOL * scale):
            raise ResultsError("negative row sum (capacitance to ground)")


def parse_cap_csv(path: str | Path) -> MaxwellCapMatrix:
    """Parse a terminal capacitance table; unit from the header, e.g. (fF)."""
    rows = _read_rows(path)
    headers = rows[0]
    if len(headers) < 2:
        raise ResultsError(f"{path}: capacitance table needs a terminal header row")
    unit_scale = None
    names = []
    for h in headers[1:]:
        name, unit = _split_unit(h)
        names.append(name)
        if unit:
            if unit not in _CAP_UNITS:
                raise ResultsError(f"{path}: unknown capacitance unit {unit!r}")
            unit_scale = _CAP_UNITS[unit]
    if unit_scale is None:
        raise ResultsError(f"{path}: header declares no capacitance unit")
    if len(rows) - 1 != len(names):
        raise ResultsError(f"{path}: expected {len(names)} matrix rows, "
                           f"got {len(rows) - 1}")
    matrix = np.zeros((len(names), len(names)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(names) + 1:
            raise ResultsError(f"{path}: row {i + 2} has {len(row)} cells, "
                               f"expected {len(names) + 1}")
        matrix[i] = _floats(row[1:], path, i + 2)
    return MaxwellCapMatrix(terminal_names=names, matrix=matrix * unit_scale)


def maxwell_to_mutual(m: MaxwellCapMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Maxwell matrix to lumped-circuit values.

    Mutual capacitances C_ij = -M_ij for i != j; self capacitance to
    ground C_i = sum_j M_ij. Returns (mutual matrix with zero diagonal,
    self vector), all non-negative within tolerance.
    """
    mat = m.matrix
    mutual = -(mat - np.diag(np.diag(mat)))
    self_cap = mat.sum(axis=1)
    scale = float(np.abs(mat).max()) or 1.0
    if np.any(self_cap < -SYMMETRY_RTOL * scale):
        raise ResultsError("negative self capacitance beyond tolerance")
    return mutual, self_cap


def mutual_to_maxwell(terminal_names: list[str], mutual: np.ndarray,
                      self_cap: np.ndarray) -> MaxwellCapMatrix:
    """Exact inverse of :func:`maxwell_to_mutual`."""
    mutual = np.asarray(mutual, dtype=float)
    diag = np.asarray(self_cap, dtype=float) + mutual.sum(axis=1)
    return MaxwellCapMatrix(terminal_names=terminal_names,
                            matrix=np.diag(diag) - mutual)


# ---------------------------------------------------------------------------
# Eigenmodes and participations
# ---------------------------------------------------------------------------

@dataclass
class ModeResult:
    index: int
    frequency: float  # Hz
    q_factor: float
    participations: dict[str, float] = field(default_factory=dict)
    signs: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.frequency <= 0:
            raise ResultsError(f"mode {self.index}: frequency must be positive")
        if self.q_factor <= 0:
            raise ResultsError(f"mode {self.index}: quality factor must be positive")
        total = 0.0
        for name, p in list(self.participations.items()):
            if p < -EPR_SLACK or p > 1.0 + EPR_SLACK:
                raise ResultsError(
                    f"mode {self.index}: participation {name}={p} outside [0, 1]")
            self.participations[name] = min(max(p, 0.0), 1.0)
            total += self.participations[name]
            self.signs.setdefault(name, 1)
        if total > 1.0 + EPR_SLACK:
            raise ResultsError(
                f"mode {self.index}: participations sum to {total} > 1")


def parse_eig_csv(path: str | Path) -> list[tuple[int, float, float]]:
    """Parse the eigenfrequency table into (index, f in Hz, Q) rows."""
    rows = _read_rows(path)
    headers = rows[0]
    i_m = _column(headers, ("m", "mode", "index"))
    i_f = _column(headers, ("re{f}", "f", "freq"))
    i_q = _column(headers, ("q",))
    i_imf = _column(headers, ("im{f}",))
    if i_m is None or i_f is None:
        raise ResultsError(f"{path}: eigenmode table needs mode and frequency columns")
    _, unit = _split_unit(headers[i_f])
    scale = _FREQ_UNITS.get(unit or "hz")
    if scale is None:
        raise ResultsError(f"{path}: unknown frequency unit {unit!r}")
    out = []
    for ln, row in enumerate(rows[1:], start=2):
        vals = _floats(row, path, ln)
        f = vals[i_f] * scale
        if i_q is not None:
            q = vals[i_q]
        elif i_imf is not None and vals[i_imf] != 0:
            q = abs(vals[i_f] / (2.0 * vals[i_imf]))
        else:
            raise ResultsError(f"{path}: no way to derive Q (no Q or Im{{f}} column)")
        out.append((int(vals[i_m]), f, q))
    return out


def parse_epr_csv(path: str | Path) -> dict[int, dict[str, tuple[float, int]]]:
    """Parse the participation table: mode index -> {junction: (p, sign)}."""
    rows = _read_rows(path)
    headers = rows[0]
    i_m = _column(headers, ("m", "mode", "index"))
    if i_m is None:
        raise ResultsError(f"{path}: participation table needs a mode column")
    p_cols, s_cols = {}, {}
    for i, h in enumerate(headers):
        name = h.strip()  # raw: the bracket is a junction key, not a unit
        m = re.match(r"^[pP]\[(.+)\]$", name)
        if m:
            p_cols[i] = m.group(1)
        m = re.match(r"^[sS]\[(.+)\]$", name)
        if m:
            s_cols[m.group(1)] = i
    if not p_cols:
        raise ResultsError(f"{path}: participation table has no p[...] columns")
    out: dict[int, dict[str, tuple[float, int]]] = {}
    for ln, row in enumerate(rows[1:], start=2):
        vals = _floats(row, path, ln)
        entry = {}
        for col, junction in p_cols.items():
            sign = 1
            if junction in s_cols:
                sign = 1 if vals[s_cols[junction]] >= 0 else -1
            entry[junction] = (vals[col], sign)
        out[int(vals[i_m])] = entry
    return out


def join_modes(eig_rows: list[tuple[int, float, float]],
               epr: dict[int, dict[str, tuple[float, int]]] | None) -> list[ModeResult]:
    """Join eigenfrequencies with participations on the mode index.

    A missing participation table yields bare-resonator modes; a partial
    one (index mismatch) is an error.
    """
    modes = []
    for index, f, q in eig_rows:
        if epr is None:
            modes.append(ModeResult(index=index, frequency=f, q_factor=q))
            continue
        if index not in epr:
            raise ResultsError(
                f"mode index {index} present in the eigenmode table but not "
                "in the participation table")
        entry = epr[index]
        modes.append(ModeResult(
            index=index, frequency=f, q_factor=q,
            participations={k: p for k, (p, _) in entry.items()},
            signs={k: s for k, (_, s) in entry.items()},
        ))
    if epr is not None:
        extra = set(epr) - {i for i, _, _ in eig_rows}
        if extra:
            raise ResultsError(
                f"participation table has modes {sorted(extra)} missing from "
                "the eigenmode table")
    return modes


def load_modes(eig_path: str | Path, epr_path: str | Path | None = None) -> list[ModeResult]:
    """Parse and join the eigenmode and (optional) participation tables."""
    eig_rows = parse_eig_csv(eig_path)
    epr = None
    if epr_path is not None and Path(epr_path).exists():
        epr = parse_epr_csv(epr_path)
    return join_modes(eig_rows, epr)


def filter_modes(modes: list[ModeResult], f_window: tuple[float, float],
                 q_min: float = 0.0) -> list[ModeResult]:
    """Keep modes inside the frequency window with Q at or above q_min."""
    lo, hi = f_window
    return [m for m in modes if lo <= m.frequency <= hi and m.q_factor >= q_min]


# ---------------------------------------------------------------------------
# S-parameters
# ---------------------------------------------------------------------------

@dataclass
class SParamSet:
    frequencies: np.ndarray                  # Hz, strictly increasing
    entries: dict[tuple[int, int], np.ndarray]  # (i, j) -> complex per frequency
    reference_impedance: float = 50.0
    passivity_violations: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        if np.any(np.diff(self.frequencies) <= 0):
            raise ResultsError("frequency column must be strictly increasing")
        for key, vals in self.entries.items():
            vals = np.asarray(vals, dtype=complex)
            self.entries[key] = vals
            if np.any(np.abs(vals) > 1.0 + PASSIVITY_SLACK):
                self.passivity_violations.append(key)
                warnings.warn(
                    f"|S{key}| exceeds 1 beyond tolerance (non-passive data?)",
                    stacklevel=2)

    def s(self, i: int, j: int) -> np.ndarray:
        return self.entries[(i, j)]


_S_KEY = re.compile(r"s\[?(\w+)\]?\[(\w+)\]|s(\d)(\d)")


def _s_indices(name: str) -> tuple[int, int] | None:
    m = re.search(r"s\[(\d+)\]\[(\d+)\]", name)
    if m:
        return int(m.group(1)), int(m.group(2))
    m = re.fullmatch(r"s(\d)(\d)", name)
    if m:
        return int(m.group(1)), int(m.group(2))
    return None


def parse_sparams_csv(path: str | Path) -> SParamSet:
    """Parse an S-parameter sweep in either header convention.

    Magnitude/phase columns (``|S[2][1]| (dB)``, ``arg{S[2][1]} (deg.)``)
    or real/imaginary pairs (``Re{S[2][1]}``, ``Im{S[2][1]}``) are detected
    from the headers; values are returned as linear-scale complex numbers.
    """
    rows = _read_rows(path)
    headers = rows[0]
    i_f = _column(headers, ("f", "freq"))
    if i_f is None:
        raise ResultsError(f"{path}: S-parameter table needs a frequency column")
    _, unit = _split_unit(headers[i_f])
    f_scale = _FREQ_UNITS.get(unit or "hz")
    if f_scale is None:
        raise ResultsError(f"{path}: unknown frequency unit {unit!r}")

    mag_cols, arg_cols, re_cols, im_cols = {}, {}, {}, {}
    for i, h in enumerate(headers):
        if i == i_f:
            continue
        name, unit = _split_unit(h)
        if name.startswith("|") and name.endswith("|"):
            key = _s_indices(name[1:-1])
            if key:
                if unit not in ("db", ""):
                    raise ResultsError(f"{path}: magnitude column {h!r} must be in dB")
                mag_cols[key] = i
        elif name.startswith("arg{") and name.endswith("}"):
            key = _s_indices(name[4:-1])
            if key:
                if unit not in ("deg", "deg.", ""):
                    raise ResultsError(f"{path}: phase column {h!r} must be in degrees")
                arg_cols[key] = i
        elif name.startswith("re{") and name.endswith("}"):
            key = _s_indices(name[3:-1])
            if key:
                re_cols[key] = i
        elif name.startswith("im{") and name.endswith("}"):
            key = _s_indices(name[3:-1])
            if key:
                im_cols[key] = i
    if mag_cols and set(mag_cols) == set(arg_cols):
        convention = "db_deg"
        keys = sorted(mag_cols)
    elif re_cols and set(re_cols) == set(im_cols):
        convention = "re_im"
        keys = sorted(re_cols)
    else:
        raise ResultsError(
            f"{path}: cannot detect the S-parameter column convention "
            "(need matched |S|/arg{S} dB-deg pairs or Re{S}/Im{S} pairs)")

    freqs, data = [], {k: [] for k in keys}
    for ln, row in enumerate(rows[1:], start=2):
        vals = _floats(row, path, ln)
        freqs.append(vals[i_f] * f_scale)
        for k in keys:
            if convention == "db_deg":
                mag = 10.0 ** (vals[mag_cols[k]] / 20.0)
                data[k].append(mag * cmath.exp(1j * math.radians(vals[arg_cols[k]])))
            else:
                data[k].append(vals[re_cols[k]] + 1j * vals[im_cols[k]])
    return SParamSet(frequencies=np.asarray(freqs),
                     entries={k: np.asarray(v) for k, v in data.items()})
