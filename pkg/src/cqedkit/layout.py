"""Annotated EM layout: healed metal polygons, ports, junctions, CPW metadata.

Port and junction sites are not encoded in GDSII; they come from a sidecar
annotation document (YAML, schema in the README) or from a dedicated GDS
layer mapped to sites.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import unary_union

from .constants import FLUX_QUANTUM

__all__ = [
    "LayoutError",
    "PortSite",
    "JunctionSite",
    "CpwSpec",
    "LayoutModel",
    "heal_curves",
    "junction_inductance",
    "infer_cpw",
    "load_annotations",
    "build_layout",
]


class LayoutError(Exception):
    pass


def junction_inductance(critical_current: float) -> float:
    """Linearized Josephson inductance Phi_0 / (2 pi I_c) in henries."""
    if critical_current <= 0:
        raise LayoutError(f"critical current must be positive, got {critical_current}")
    return FLUX_QUANTUM / (2.0 * math.pi * critical_current)


@dataclass
class PortSite:
    """Lumped-port location: a rectangle spanning a CPW gap."""

    name: str
    rectangle: np.ndarray  # 4 corners, meters
    impedance: float = 50.0
    excited: bool = False

    def __post_init__(self):
        self.rectangle = np.asarray(self.rectangle, dtype=float).reshape(4, 2)
        if self.impedance <= 0:
            raise LayoutError(f"port {self.name!r}: impedance must be positive")


@dataclass
class JunctionSite:
    """Josephson junction location plus its linearized inductance."""

    name: str
    rectangle: np.ndarray
    critical_current: float

    def __post_init__(self):
        self.rectangle = np.asarray(self.rectangle, dtype=float).reshape(4, 2)
        if self.critical_current <= 0:
            raise LayoutError(f"junction {self.name!r}: critical current must be positive")

    @property
    def inductance(self) -> float:
        return junction_inductance(self.critical_current)


@dataclass
class CpwSpec:
    """Coplanar waveguide cross-section: center trace width and gap."""

    trace_width: float
    gap: float
    centerline: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=float).reshape(-1, 2)
        if self.trace_width <= 0 or self.gap <= 0:
            raise LayoutError("CPW trace width and gap must be positive")

    @property
    def length(self) -> float:
        if len(self.centerline) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(self.centerline, axis=0).T)))


@dataclass
class LayoutModel:
    metal_polygons: list[np.ndarray]
    chip_extent: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    ports: list[PortSite] = field(default_factory=list)
    junctions: list[JunctionSite] = field(default_factory=list)
    cpw_specs: list[CpwSpec] = field(default_factory=list)

    def metal_union(self):
        return unary_union([Polygon(p) for p in self.metal_polygons])

    def validate(self) -> None:
        xmin, ymin, xmax, ymax = self.chip_extent
        if not (xmax > xmin and ymax > ymin):
            raise LayoutError("chip extent must have positive area")
        for poly in self.metal_polygons:
            if not Polygon(poly).is_simple:
                raise LayoutError("metal polygon is self-intersecting after healing")
        metal = self.metal_union()
        for site in list(self.ports) + list(self.junctions):
            rect = Polygon(site.rectangle)
            if rect.area <= 0:
                raise LayoutError(f"site {site.name!r}: rectangle has no area")
            overlap = rect.intersection(metal).area
            if overlap > 1e-6 * rect.area:
                raise LayoutError(
                    f"site {site.name!r} overlaps the metal interior; "
                    "sites must sit in the gap region"
                )


# ---------------------------------------------------------------------------
# Curve healing
# ---------------------------------------------------------------------------

def _dedupe_ring(pts: np.ndarray, tol: float) -> np.ndarray:
    """Drop zero-length edges (consecutive vertices closer than tol)."""
    keep = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - keep[-1])) > tol:
            keep.append(p)
    if len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= tol:
        keep.pop()
    return np.asarray(keep)


def _sagitta_simplify(pts: np.ndarray, tol: float) -> np.ndarray:
    """Douglas-Peucker on an open polyline: every removed vertex deviates
    from the surviving chord by at most tol."""
    if len(pts) <= 2:
        return pts
    a, b = pts[0], pts[-1]
    ab = b - a
    dots = (pts - a) @ ab
    length2 = ab @ ab
    if length2 == 0:
        dists = np.hypot(*(pts - a).T)
    else:
        t = np.clip(dots / length2, 0.0, 1.0)
        proj = a + t[:, None] * ab
        dists = np.hypot(*(pts - proj).T)
    k = int(np.argmax(dists))
    if dists[k] <= tol:
        return np.vstack([a, b])
    left = _sagitta_simplify(pts[: k + 1], tol)
    right = _sagitta_simplify(pts[k:], tol)
    return np.vstack([left[:-1], right])


def _canonical_roll(ring: np.ndarray) -> np.ndarray:
    """Start the ring at its lexicographically smallest vertex."""
    start = int(np.lexsort((ring[:, 1], ring[:, 0]))[0])
    return np.roll(ring, -start, axis=0)


def _heal_ring(pts: np.ndarray, tol: float) -> np.ndarray:
    dedupe_tol = max(tol * 1e-9, 1e-15)
    ring = _dedupe_ring(pts, dedupe_tol)
    while True:
        if len(ring) < 3:
            raise LayoutError("polygon degenerated to fewer than 3 vertices while healing")
        # Canonical anchors make repeated healing a no-op: split the ring at
        # its first vertex and the vertex farthest from it.
        ring = _canonical_roll(ring)
        split = int(np.argmax(np.hypot(*(ring - ring[0]).T)))
        if split == 0:
            raise LayoutError("polygon degenerated to a point while healing")
        first = _sagitta_simplify(ring[: split + 1], tol)
        second = _sagitta_simplify(np.vstack([ring[split:], ring[:1]]), tol)
        healed = _dedupe_ring(np.vstack([first[:-1], second[:-1]]), dedupe_tol)
        if len(healed) == len(ring):
            break
        ring = healed
    if len(ring) < 3:
        raise LayoutError("polygon degenerated to fewer than 3 vertices while healing")
    return _canonical_roll(ring)


def heal_curves(polygons: list[np.ndarray], chord_tolerance: float) -> list[np.ndarray]:
    """Merge collinear runs and re-sample curved outlines.

    Vertices whose removal keeps every chord's sagitta at or below
    ``chord_tolerance`` are dropped; duplicate vertices and zero-length
    edges are removed. Output rings are open (no repeated last point),
    simple, and the operation is idempotent.
    """
    if chord_tolerance <= 0:
        raise LayoutError("chord tolerance must be positive")
    healed = []
    for poly in polygons:
        pts = np.asarray(poly, dtype=float).reshape(-1, 2)
        if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        ring = _heal_ring(pts, chord_tolerance)
        if not Polygon(ring).is_simple:
            raise LayoutError("polygon is self-intersecting after healing")
        healed.append(ring)
    return healed


# ---------------------------------------------------------------------------
# CPW inference
# ---------------------------------------------------------------------------

def infer_cpw(polygons: list[np.ndarray], centerline_hint: np.ndarray,
              stations: int = 16, asymmetry_warn: float = 0.05) -> CpwSpec:
    """Measure CPW trace width and gap by sectioning perpendicular to a hint.

    At sampled stations along the hint polyline, a section line is cast
    normal to the local tangent; the metal interval containing the station
    gives the trace width and the clearances to the neighboring metal give
    the gaps. Reported values are medians over stations.
    """
    hint = np.asarray(centerline_hint, dtype=float).reshape(-1, 2)
    if len(hint) < 2:
        raise LayoutError("centerline hint needs at least 2 points")
    metal = unary_union([Polygon(np.asarray(p, dtype=float)) for p in polygons])
    minx, miny, maxx, maxy = metal.bounds
    reach = 2.0 * math.hypot(maxx - minx, maxy - miny)

    line = LineString(hint)
    widths, gaps = [], []
    for i in range(stations):
        s = (i + 0.5) / stations * line.length
        station = np.asarray(line.interpolate(s).coords[0])
        ahead = np.asarray(line.interpolate(min(s + 1e-3 * line.length, line.length)).coords[0])
        tangent = ahead - station
        norm = np.hypot(*tangent)
        if norm == 0:
            continue
        normal = np.array([-tangent[1], tangent[0]]) / norm
        if not metal.intersects(Point(station)):
            raise LayoutError("centerline hint leaves the metal trace")
        section = LineString([station - reach * normal, station + reach * normal])
        cut = section.intersection(metal)
        segments = list(getattr(cut, "geoms", [cut]))
        # Signed interval of each metal crossing along the section normal.
        intervals = sorted(
            (float(np.asarray(g.coords[0]) @ normal - station @ normal),
             float(np.asarray(g.coords[-1]) @ normal - station @ normal))
            for g in segments if not g.is_empty
        )
        intervals = [(min(a, b), max(a, b)) for a, b in intervals]
        trace_idx = next((k for k, (a, b) in enumerate(intervals) if a - 1e-12 <= 0 <= b + 1e-12), None)
        if trace_idx is None:
            raise LayoutError("centerline hint leaves the metal trace")
        if trace_idx == 0 or trace_idx == len(intervals) - 1:
            raise LayoutError("no ground metal on both sides of the hinted trace")
        a, b = intervals[trace_idx]
        widths.append(b - a)
        gap_lo = a - intervals[trace_idx - 1][1]
        gap_hi = intervals[trace_idx + 1][0] - b
        if abs(gap_hi - gap_lo) > asymmetry_warn * max(gap_hi, gap_lo):
            warnings.warn(
                f"asymmetric CPW gaps at station {i}: {gap_lo:.3e} vs {gap_hi:.3e}",
                stacklevel=2,
            )
        gaps.extend([gap_lo, gap_hi])
    if not widths:
        raise LayoutError("no usable stations along the centerline hint")
    return CpwSpec(trace_width=float(np.median(widths)), gap=float(np.median(gaps)),
                   centerline=hint)


# ---------------------------------------------------------------------------
# Annotation sidecar
# ---------------------------------------------------------------------------

def _rect(entry, name: str) -> np.ndarray:
    rect = np.asarray(entry, dtype=float)
    if rect.shape != (4, 2):
        raise LayoutError(f"site {name!r}: rect must be 4 corner points")
    return rect


def load_annotations(path: str | Path) -> dict:
    """Load the sidecar annotation document (ports, junctions, CPW hints)."""
    path = Path(path)
    if not path.exists():
        raise LayoutError(f"annotation file not found: {path}")
    doc = yaml.safe_load(path.read_text()) or {}
    ports = [
        PortSite(
            name=str(p["name"]),
            rectangle=_rect(p["rect"], p.get("name", "?")),
            impedance=float(p.get("impedance", 50.0)),
            excited=bool(p.get("excited", False)),
        )
        for p in doc.get("ports", [])
    ]
    junctions = [
        JunctionSite(
            name=str(j["name"]),
            rectangle=_rect(j["rect"], j.get("name", "?")),
            critical_current=float(j["critical_current"]),
        )
        for j in doc.get("junctions", [])
    ]
    cpw_hints = [np.asarray(c["centerline"], dtype=float) for c in doc.get("cpw", [])]
    return {"ports": ports, "junctions": junctions, "cpw_hints": cpw_hints}


def build_layout(flat_polygons: list[tuple[int, np.ndarray]], metal_layer: int,
                 annotations: dict | None = None,
                 chord_tolerance: float | None = None,
                 chip_margin: float = 0.0) -> LayoutModel:
    """Assemble a validated LayoutModel from flattened polygons.

    ``chord_tolerance`` defaults to a quarter of the finest plausible mesh
    size later derived from the CPW, or 1 um when no CPW hint is given, so
    curve faceting never limits mesh quality.
    """
    polys = [poly for layer, poly in flat_polygons if layer == metal_layer]
    if not polys:
        raise LayoutError(f"no polygons on metal layer {metal_layer}")
    annotations = annotations or {"ports": [], "junctions": [], "cpw_hints": []}

    cpw_specs = [infer_cpw(polys, hint) for hint in annotations.get("cpw_hints", [])]
    if chord_tolerance is None:
        if cpw_specs:
            # S_min/4 at the paper-style operating point r = 1.5.
            chord_tolerance = 1.5 * cpw_specs[0].trace_width * 2.0**-1.5 / 4.0
        else:
            chord_tolerance = 1e-6
    metal = heal_curves(polys, chord_tolerance)

    stacked = np.vstack(metal)
    m = chip_margin
    extent = (
        float(stacked[:, 0].min() - m), float(stacked[:, 1].min() - m),
        float(stacked[:, 0].max() + m), float(stacked[:, 1].max() + m),
    )
    model = LayoutModel(
        metal_polygons=metal,
        chip_extent=extent,
        ports=list(annotations.get("ports", [])),
        junctions=list(annotations.get("junctions", [])),
        cpw_specs=cpw_specs,
    )
    model.validate()
    return model
