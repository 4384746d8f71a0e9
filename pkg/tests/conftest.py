"""Shared fixtures: a miniature feedline + resonator + transmon chip, random
library builders for round-trip checks, and the mock solver command."""

from __future__ import annotations

import random
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from cqedkit.gdsii import GdsElement, GdsLibrary, GdsStructure
from cqedkit.layout import CpwSpec, JunctionSite, LayoutModel, PortSite, build_layout
from cqedkit.gdsii import flatten

TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"
MOCK_SOLVER = TESTS_DIR / "mock_solver.py"

UM = 1000  # db units per micrometer at 1 nm per db unit


def rect_element(x0, y0, x1, y1, layer=1):
    return GdsElement(kind="boundary", layer=layer,
                      xy=((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)))


def chip_library() -> GdsLibrary:
    """One feedline CPW with two ports, a quarter-wave stub, and a two-pad
    transmon. 1 db unit = 1 nm."""
    top = GdsStructure(name="TOP")
    top.elements.append(GdsElement(  # feed center trace
        kind="path", layer=1, path_width=10 * UM,
        xy=((150 * UM, 1200 * UM), (1850 * UM, 1200 * UM))))
    top.elements.append(rect_element(  # lower feed ground (largest island)
        150 * UM, 989 * UM, 1850 * UM, 1189 * UM))
    top.elements.append(rect_element(  # upper feed ground
        150 * UM, 1211 * UM, 1850 * UM, 1391 * UM))
    top.elements.append(GdsElement(  # quarter-wave stub
        kind="path", layer=1, path_width=10 * UM,
        xy=((1000 * UM, 979 * UM), (1000 * UM, 400 * UM))))
    top.elements.append(rect_element(900 * UM, 250 * UM, 980 * UM, 330 * UM))
    top.elements.append(rect_element(1020 * UM, 250 * UM, 1100 * UM, 330 * UM))
    return GdsLibrary(name="CHIP", user_unit_per_db_unit=1e-3,
                      meters_per_db_unit=1e-9, structures=[top])


def chip_annotation_doc() -> dict:
    """Annotation document matching chip_library, in YAML-ready form."""
    return {
        "ports": [
            {"name": "P1", "rect": [[151e-6, 1205e-6], [161e-6, 1205e-6],
                                    [161e-6, 1211e-6], [151e-6, 1211e-6]],
             "impedance": 50.0, "excited": True},
            {"name": "P2", "rect": [[1839e-6, 1205e-6], [1849e-6, 1205e-6],
                                    [1849e-6, 1211e-6], [1839e-6, 1211e-6]],
             "impedance": 50.0, "excited": False},
        ],
        "junctions": [
            {"name": "J1", "rect": [[985e-6, 282e-6], [1015e-6, 282e-6],
                                    [1015e-6, 298e-6], [985e-6, 298e-6]],
             "critical_current": 30e-9},
        ],
        "cpw": [
            {"centerline": [[300e-6, 1200e-6], [1700e-6, 1200e-6]]},
        ],
    }


def chip_annotations() -> dict:
    doc = chip_annotation_doc()
    return {
        "ports": [PortSite(name=p["name"], rectangle=p["rect"],
                           impedance=p["impedance"], excited=p["excited"])
                  for p in doc["ports"]],
        "junctions": [JunctionSite(name=j["name"], rectangle=j["rect"],
                                   critical_current=j["critical_current"])
                      for j in doc["junctions"]],
        "cpw_hints": [np.asarray(c["centerline"]) for c in doc["cpw"]],
    }


def chip_layout() -> LayoutModel:
    flat = flatten(chip_library(), "TOP")
    return build_layout(flat, metal_layer=1, annotations=chip_annotations())


def straight_cpw_polygons(width: float, gap: float, length: float = 1e-3,
                          ground: float = 60e-6) -> list[np.ndarray]:
    """Trace plus two flanking ground strips, in meters, centered on y=0."""
    h = width / 2.0
    return [
        np.array([[0, -h], [length, -h], [length, h], [0, h]]),
        np.array([[0, -h - gap - ground], [length, -h - gap - ground],
                  [length, -h - gap], [0, -h - gap]]),
        np.array([[0, h + gap], [length, h + gap],
                  [length, h + gap + ground], [0, h + gap + ground]]),
    ]


def simple_cpw_layout(width: float = 10e-6, gap: float = 6e-6,
                      length: float = 1.2e-3) -> LayoutModel:
    polys = straight_cpw_polygons(width, gap, length)
    centerline = np.array([[0.1 * length, 0.0], [0.9 * length, 0.0]])
    h = width / 2.0
    port = PortSite(name="P1",
                    rectangle=np.array([[0.02 * length, h], [0.04 * length, h],
                                        [0.04 * length, h + gap],
                                        [0.02 * length, h + gap]]),
                    excited=True)
    model = LayoutModel(
        metal_polygons=polys,
        chip_extent=(-1e-4, -2e-4, length + 1e-4, 2e-4),
        ports=[port],
        junctions=[],
        cpw_specs=[CpwSpec(trace_width=width, gap=gap, centerline=centerline)],
    )
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Random library generation (round-trip checks)
# ---------------------------------------------------------------------------

def random_library(rng: random.Random) -> GdsLibrary:
    n_structs = rng.randint(1, 4)
    structures = []
    for i in range(n_structs):
        st = GdsStructure(name=f"S{i}")
        for _ in range(rng.randint(1, 5)):
            kind = rng.choice(["boundary", "path", "ref", "aref"]
                              if i > 0 else ["boundary", "path"])
            if kind == "boundary":
                pts = [(rng.randint(-10000, 10000), rng.randint(-10000, 10000))
                       for _ in range(rng.randint(3, 8))]
                st.elements.append(GdsElement(
                    kind="boundary", layer=rng.randint(0, 255),
                    datatype=rng.randint(0, 3), xy=tuple(pts) + (pts[0],)))
            elif kind == "path":
                pts = tuple((rng.randint(-10000, 10000), rng.randint(-10000, 10000))
                            for _ in range(rng.randint(2, 5)))
                st.elements.append(GdsElement(
                    kind="path", layer=rng.randint(0, 255),
                    path_width=rng.randint(1, 500),
                    path_type=rng.choice([0, 2]), xy=pts))
            elif kind == "ref":
                st.elements.append(GdsElement(
                    kind="structure_ref", ref_name=f"S{rng.randrange(i)}",
                    xy=((rng.randint(-10000, 10000), rng.randint(-10000, 10000)),),
                    rotation_deg=rng.choice([0.0, 45.0, 90.0, 123.456]),
                    magnification=rng.choice([1.0, 0.5, 2.0, 3.25]),
                    reflect_x=rng.random() < 0.5))
            else:
                cols, rows = rng.randint(1, 4), rng.randint(1, 3)
                ox, oy = rng.randint(-10000, 10000), rng.randint(-10000, 10000)
                sx, sy = rng.randint(10, 400), rng.randint(10, 400)
                st.elements.append(GdsElement(
                    kind="array_ref", ref_name=f"S{rng.randrange(i)}",
                    columns=cols, rows=rows,
                    xy=((ox, oy), (ox + cols * sx, oy), (ox, oy + rows * sy))))
        structures.append(st)
    return GdsLibrary(name="RND", user_unit_per_db_unit=1e-3,
                      meters_per_db_unit=1e-9, structures=structures)


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def mock_solver_cmd() -> list[str]:
    return [sys.executable, str(MOCK_SOLVER)]


@pytest.fixture
def chip_model() -> LayoutModel:
    return chip_layout()


@pytest.fixture
def chip_project(tmp_path, mock_solver_cmd):
    """Write a complete project (GDS, annotations, YAML) under tmp_path."""
    from cqedkit.gdsii import write_gds

    gds_path = tmp_path / "chip.gds"
    gds_path.write_bytes(write_gds(chip_library()))
    annot_path = tmp_path / "chip.yaml"
    annot_path.write_text(yaml.safe_dump(chip_annotation_doc()))
    project = {
        "gds": "chip.gds",
        "top": "TOP",
        "annotations": "chip.yaml",
        "metal_layer": 1,
        "material": {"name": "silicon", "permittivity": 11.49,
                     "loss_tangent": 2.3e-6},
        "mesh": {"r": 1.5, "order": 4},
        "passes": ["electrostatic", "eigenmode", "driven"],
        "driven": {"f_min": 7.39e9, "f_max": 7.41e9, "tolerance": 1e-9},
        "eigenmode": {"target_count": 3},
        "solver": mock_solver_cmd,
        "output": "out",
        "fit_windows": [
            {"name": "R1", "window": [7.395e9, 7.405e9], "pair": [2, 1],
             "csv": "driven/csv/port-S.csv"},
        ],
        "targets": {
            "R1": {"frequency": 7.4074e9, "coupling": 0.407e6},
        },
    }
    project_path = tmp_path / "project.yaml"
    project_path.write_text(yaml.safe_dump(project))
    return project_path
