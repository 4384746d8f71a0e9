"""Mesh-size law, 3D domain plan, and Gmsh .geo script emission.

The minimum element size follows S_min = 1.5 * W_tr * 2^(-r) with W_tr the
CPW center trace width and r the dimensionless refinement ratio. The plan
places the chip substrate below the z = 0 metal plane inside a padded air
box; metal polygons become zero-thickness PEC sheets, ports and junctions
dedicated surface groups, and a distance/threshold size field grades from
S_min at the gap edges up to S_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from shapely.geometry import Polygon
from shapely.ops import unary_union

from .layout import LayoutModel

__all__ = ["MeshError", "MeshControls", "MeshPlan", "min_mesh_size",
           "build_plan", "emit_mesh_script"]


class MeshError(Exception):
    pass


def min_mesh_size(trace_width: float, r: float) -> float:
    """Refinement law S_min = 1.5 * W_tr * 2^(-r).

    Split into fractional and integer powers of two so that incrementing r
    by one halves the result exactly in floating point (exact whenever
    r + 1 is itself exactly representable, e.g. any dyadic r like 1.5).
    """
    if trace_width <= 0:
        raise MeshError(f"trace width must be positive, got {trace_width}")
    n = math.floor(r)
    frac = r - n
    return math.ldexp(1.5 * trace_width * 2.0 ** (-frac), -n)


@dataclass
class MeshControls:
    """Mesh generation knobs. S_min is derived from (trace_width, r)."""

    trace_width: float
    r: float = 1.5
    order: int = 4
    s_max: float | None = None          # defaults to 20 * S_min
    growth_rate: float = 1.3
    substrate_thickness: float = 525e-6
    air_padding: tuple[float, float, float] = (1e-3, 1e-3, 3e-3)  # x, y, z

    def __post_init__(self):
        if not 1 <= self.order <= 8:
            raise MeshError(f"element order must be in [1, 8], got {self.order}")
        if self.growth_rate <= 1:
            raise MeshError("growth rate must exceed 1")
        if self.substrate_thickness <= 0:
            raise MeshError("substrate thickness must be positive")
        if self.s_max is None:
            self.s_max = 20.0 * self.s_min
        if self.s_max < self.s_min:
            raise MeshError("S_max must be at least S_min")

    @property
    def s_min(self) -> float:
        return min_mesh_size(self.trace_width, self.r)

    def at(self, r: float, order: int) -> "MeshControls":
        """Copy with a new refinement point, re-deriving S_min and S_max."""
        return replace(self, r=r, order=order, s_max=None)


@dataclass(frozen=True)
class SurfaceGroup:
    name: str
    tag: int  # physical tag carried into solver configs


@dataclass
class MeshPlan:
    controls: MeshControls
    layout: LayoutModel
    domains: dict            # name -> (xmin, ymin, zmin, xmax, ymax, zmax)
    metal_groups: list[SurfaceGroup]   # one per connected metal island
    port_groups: list[SurfaceGroup]
    junction_groups: list[SurfaceGroup]
    far_field: SurfaceGroup
    ground_island: int       # index into metal_groups (largest area)
    size_field: dict         # s_min, s_max, dist_min, dist_max, growth_rate
    islands: list = field(default_factory=list, repr=False)  # polygons per metal group

    @property
    def boundary_groups(self) -> list[SurfaceGroup]:
        return self.metal_groups + self.port_groups + self.junction_groups + [self.far_field]

    def terminal_groups(self) -> list[SurfaceGroup]:
        """Metal islands designated for capacitance extraction (non-ground)."""
        return [g for i, g in enumerate(self.metal_groups) if i != self.ground_island]

    def gap_distance(self, point) -> float:
        """Distance from a point to the nearest metal edge (gap edge)."""
        from shapely.geometry import Point
        boundary = unary_union(
            [Polygon(p).boundary for p in self.layout.metal_polygons])
        return float(boundary.distance(Point(point)))

    def size_at(self, point) -> float:
        """Target element size at an in-plane point, per the threshold field."""
        d = self.gap_distance(point)
        f = self.size_field
        if d <= f["dist_min"]:
            return f["s_min"]
        if d >= f["dist_max"]:
            return f["s_max"]
        t = (d - f["dist_min"]) / (f["dist_max"] - f["dist_min"])
        return f["s_min"] + t * (f["s_max"] - f["s_min"])


# Physical tags, stable across runs.
_TAG_SUBSTRATE = 1
_TAG_AIR = 2
_TAG_FAR_FIELD = 9
_TAG_METAL_BASE = 300
_TAG_PORT_BASE = 400
_TAG_JUNCTION_BASE = 500


def _metal_islands(layout: LayoutModel) -> list[list[np.ndarray]]:
    """Group metal polygons into connected islands (touching metal merges)."""
    polys = [Polygon(p) for p in layout.metal_polygons]
    n = len(polys)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if polys[i].intersects(polys[j]):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    islands = [[layout.metal_polygons[i] for i in members]
               for members in groups.values()]
    # Deterministic order: by (min x, min y) of the island.
    islands.sort(key=lambda ps: (min(float(p[:, 0].min()) for p in ps),
                                 min(float(p[:, 1].min()) for p in ps)))
    return islands


def build_plan(layout: LayoutModel, controls: MeshControls) -> MeshPlan:
    """Derive domains, boundary groups and the size field from a layout."""
    layout.validate()
    px, py, pz = controls.air_padding
    if px <= 0 or py <= 0 or pz <= 0:
        raise MeshError("air padding must be positive on every axis "
                        "(the far-field surface would touch the metal)")
    xmin, ymin, xmax, ymax = layout.chip_extent
    t = controls.substrate_thickness
    domains = {
        "substrate": (xmin, ymin, -t, xmax, ymax, 0.0),
        "air": (xmin - px, ymin - py, -t - pz, xmax + px, ymax + py, pz),
    }

    chip = Polygon([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)])
    for site in list(layout.ports) + list(layout.junctions):
        if not Polygon(site.rectangle).covered_by(chip):
            raise MeshError(
                f"site {site.name!r} lies outside the air/substrate interface")
    sites = list(layout.ports) + list(layout.junctions)
    for i in range(len(sites)):
        for j in range(i + 1, len(sites)):
            a, b = Polygon(sites[i].rectangle), Polygon(sites[j].rectangle)
            if a.intersection(b).area > 0:
                raise MeshError(
                    f"sites {sites[i].name!r} and {sites[j].name!r} overlap")

    islands = _metal_islands(layout)
    metal_groups = [SurfaceGroup(name=f"metal_{i + 1}", tag=_TAG_METAL_BASE + i + 1)
                    for i in range(len(islands))]
    areas = [sum(Polygon(p).area for p in isl) for isl in islands]
    ground = int(np.argmax(areas)) if areas else 0
    port_groups = [SurfaceGroup(name=f"port_{p.name}", tag=_TAG_PORT_BASE + i + 1)
                   for i, p in enumerate(layout.ports)]
    junction_groups = [SurfaceGroup(name=f"junction_{j.name}", tag=_TAG_JUNCTION_BASE + i + 1)
                       for i, j in enumerate(layout.junctions)]

    gap = layout.cpw_specs[0].gap if layout.cpw_specs else controls.s_min
    g = controls.growth_rate
    size_field = {
        "s_min": controls.s_min,
        "s_max": controls.s_max,
        # S_min holds within one gap width of a gap edge, then grows at
        # growth_rate per element layer until S_max is reached.
        "dist_min": gap,
        "dist_max": gap + (controls.s_max - controls.s_min) / (g - 1.0),
        "growth_rate": g,
    }
    return MeshPlan(
        controls=controls,
        layout=layout,
        domains=domains,
        metal_groups=metal_groups,
        port_groups=port_groups,
        junction_groups=junction_groups,
        far_field=SurfaceGroup(name="far_field", tag=_TAG_FAR_FIELD),
        ground_island=ground,
        size_field=size_field,
        islands=islands,
    )


# ---------------------------------------------------------------------------
# .geo emission
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".12g")


class _GeoWriter:
    """Accumulates built-in-kernel .geo statements with explicit ids."""

    def __init__(self):
        self.lines: list[str] = []
        self.next_point = 1
        self.next_curve = 1
        self.next_loop = 1
        self.next_surface = 1

    def point(self, x, y, z) -> int:
        pid = self.next_point
        self.next_point += 1
        self.lines.append(f"Point({pid}) = {{{_fmt(x)}, {_fmt(y)}, {_fmt(z)}, 0}};")
        return pid

    def line(self, a: int, b: int) -> int:
        cid = self.next_curve
        self.next_curve += 1
        self.lines.append(f"Line({cid}) = {{{a}, {b}}};")
        return cid

    def loop(self, curves: list[int]) -> int:
        lid = self.next_loop
        self.next_loop += 1
        ids = ", ".join(str(c) for c in curves)
        self.lines.append(f"Curve Loop({lid}) = {{{ids}}};")
        return lid

    def surface(self, loops: list[int]) -> int:
        sid = self.next_surface
        self.next_surface += 1
        ids = ", ".join(str(l) for l in loops)
        self.lines.append(f"Plane Surface({sid}) = {{{ids}}};")
        return sid

    def ring(self, pts: np.ndarray, z: float) -> tuple[int, list[int]]:
        """Emit a closed polygon at height z; returns (loop id, curve ids)."""
        pids = [self.point(x, y, z) for x, y in pts]
        curves = [self.line(pids[i], pids[(i + 1) % len(pids)]) for i in range(len(pids))]
        return self.loop(curves), curves


def emit_mesh_script(plan: MeshPlan) -> str:
    """Render the plan as a deterministic, self-contained Gmsh .geo script.

    Built-in kernel, explicit entity ids, named physical groups with the
    plan's stable tags, and a distance/threshold background size field.
    Identical plans produce byte-identical scripts.
    """
    c = plan.controls
    xmin, ymin, xmax, ymax = plan.layout.chip_extent
    ax0, ay0, az0, ax1, ay1, az1 = plan.domains["air"]
    t = c.substrate_thickness
    w = _GeoWriter()
    header = [
        "// Mesh plan for planar superconducting circuit EM analysis.",
        f"// refinement: r={_fmt(c.r)}, order={c.order}",
        f"// size field: s_min={_fmt(c.s_min)}, s_max={_fmt(c.s_max)}, "
        f"growth={_fmt(c.growth_rate)}",
        "// units: meters",
        "",
    ]

    def box(x0, y0, z0, x1, y1, z1):
        """Emit a box; returns its 6 surface ids (z0, z1, then 4 sides)."""
        lo = [w.point(x0, y0, z0), w.point(x1, y0, z0),
              w.point(x1, y1, z0), w.point(x0, y1, z0)]
        hi = [w.point(x0, y0, z1), w.point(x1, y0, z1),
              w.point(x1, y1, z1), w.point(x0, y1, z1)]
        lo_e = [w.line(lo[i], lo[(i + 1) % 4]) for i in range(4)]
        hi_e = [w.line(hi[i], hi[(i + 1) % 4]) for i in range(4)]
        up_e = [w.line(lo[i], hi[i]) for i in range(4)]
        faces = [w.surface([w.loop([lo_e[0], lo_e[1], lo_e[2], lo_e[3]])]),
                 w.surface([w.loop([hi_e[0], hi_e[1], hi_e[2], hi_e[3]])])]
        for i in range(4):
            j = (i + 1) % 4
            faces.append(w.surface([w.loop([lo_e[i], up_e[j], -hi_e[i], -up_e[i]])]))
        return faces, (lo, hi, lo_e, hi_e, up_e)

    # Outer air box (6 far-field faces).
    air_faces, _ = box(ax0, ay0, az0, ax1, ay1, az1)

    # Chip box below z = 0: bottom, 4 sides, and a decomposed top face.
    chip_lo = [w.point(xmin, ymin, -t), w.point(xmax, ymin, -t),
               w.point(xmax, ymax, -t), w.point(xmin, ymax, -t)]
    chip_hi = [w.point(xmin, ymin, 0.0), w.point(xmax, ymin, 0.0),
               w.point(xmax, ymax, 0.0), w.point(xmin, ymax, 0.0)]
    lo_e = [w.line(chip_lo[i], chip_lo[(i + 1) % 4]) for i in range(4)]
    hi_e = [w.line(chip_hi[i], chip_hi[(i + 1) % 4]) for i in range(4)]
    up_e = [w.line(chip_lo[i], chip_hi[i]) for i in range(4)]
    chip_bottom = w.surface([w.loop(lo_e)])
    chip_sides = [w.surface([w.loop([lo_e[i], up_e[(i + 1) % 4], -hi_e[i], -up_e[i]])])
                  for i in range(4)]
    chip_top_loop = w.loop(hi_e)

    # Metal sheets, port and junction rectangles at z = 0.
    metal_curves: list[int] = []
    group_surfaces: dict[str, list[int]] = {}
    for group, island in zip(plan.metal_groups, plan.islands):
        sids = group_surfaces.setdefault(group.name, [])
        for poly in island:
            loop, curves = w.ring(np.asarray(poly, dtype=float), 0.0)
            sids.append(w.surface([loop]))
            metal_curves.extend(curves)
    for group, site in zip(plan.port_groups + plan.junction_groups,
                           list(plan.layout.ports) + list(plan.layout.junctions)):
        loop, _ = w.ring(site.rectangle, 0.0)
        group_surfaces.setdefault(group.name, []).append(w.surface([loop]))

    # Remaining exposed dielectric at z = 0: chip rect minus metal and sites.
    hole_loops = list(range(chip_top_loop + 1, w.next_loop))  # all rings above
    gap_surface = w.surface([chip_top_loop] + hole_loops)

    sheet_ids = [sid for g in plan.boundary_groups if g.name in group_surfaces
                 for sid in group_surfaces[g.name]]
    chip_shell = [chip_bottom] + chip_sides + [gap_surface] + sheet_ids

    body = list(w.lines)
    body.append("")

    def ids(vals):
        return ", ".join(str(v) for v in vals)

    body.append(f"Surface Loop(1) = {{{ids(chip_shell)}}};")
    body.append("Volume(1) = {1};")
    body.append(f"Surface Loop(2) = {{{ids(air_faces)}}};")
    body.append(f"Surface Loop(3) = {{{ids(chip_shell)}}};")
    body.append("Volume(2) = {2, 3};")
    body.append("")
    body.append(f'Physical Volume("substrate", {_TAG_SUBSTRATE}) = {{1}};')
    body.append(f'Physical Volume("air", {_TAG_AIR}) = {{2}};')
    body.append(f'Physical Surface("{plan.far_field.name}", {plan.far_field.tag}) '
                f"= {{{ids(air_faces)}}};")
    for g in plan.metal_groups + plan.port_groups + plan.junction_groups:
        body.append(f'Physical Surface("{g.name}", {g.tag}) = '
                    f"{{{ids(group_surfaces[g.name])}}};")
    body.append("")
    f = plan.size_field
    body.extend([
        "Field[1] = Distance;",
        f"Field[1].CurvesList = {{{ids(metal_curves)}}};",
        "Field[1].Sampling = 100;",
        "Field[2] = Threshold;",
        "Field[2].InField = 1;",
        f"Field[2].SizeMin = {_fmt(f['s_min'])};",
        f"Field[2].SizeMax = {_fmt(f['s_max'])};",
        f"Field[2].DistMin = {_fmt(f['dist_min'])};",
        f"Field[2].DistMax = {_fmt(f['dist_max'])};",
        "Background Field = 2;",
        f"Mesh.MeshSizeMax = {_fmt(f['s_max'])};",
        "Mesh.MeshSizeFromPoints = 0;",
        "Mesh.MeshSizeExtendFromBoundary = 0;",
        "",
    ])
    return "\n".join(header + body)
