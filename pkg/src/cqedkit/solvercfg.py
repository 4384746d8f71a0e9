"""Solver configuration documents for the three EM problem classes.

Emits Palace-schema JSON (top-level sections Problem, Model, Domains,
Boundaries, Solver; schema version pinned in the README). Boundary
entries reference the mesh plan's stable physical tags and carry a
``Label`` key with the group name; :func:`strip_labels` is the single
adapter point for solver versions that reject unknown keys.

Metals are perfect electric conductors in all three problem classes.
Junctions appear as lumped inductors; ports default to 50 ohms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .analytic import cpw_caps, quarter_wave_freq
from .meshplan import MeshPlan

__all__ = [
    "ConfigError", "Material", "PortSpec", "InductorSpec", "EigenParams",
    "DrivenParams", "SolveSpec", "make_electrostatic", "make_eigenmode",
    "make_driven", "serialize_spec", "parse_spec", "strip_labels",
    "default_eigen_shift",
]

SCHEMA_NOTE = "palace-json-0.13"

DEFAULT_SUBSTRATE_PERMITTIVITY = 11.49
DEFAULT_SUBSTRATE_LOSS_TANGENT = 2.3e-6
DEFAULT_DRIVEN_TOLERANCE = 1e-9


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Material:
    name: str
    permittivity: float
    loss_tangent: float = 0.0

    def __post_init__(self):
        if self.permittivity < 1:
            raise ConfigError(f"material {self.name!r}: permittivity must be >= 1")
        if self.loss_tangent < 0:
            raise ConfigError(f"material {self.name!r}: loss tangent must be >= 0")


def silicon() -> Material:
    """Cryogenic float-zone silicon defaults."""
    return Material("silicon", DEFAULT_SUBSTRATE_PERMITTIVITY,
                    DEFAULT_SUBSTRATE_LOSS_TANGENT)


def vacuum() -> Material:
    return Material("vacuum", 1.0, 0.0)


@dataclass(frozen=True)
class PortSpec:
    name: str
    attribute: int
    impedance: float = 50.0
    excited: bool = False


@dataclass(frozen=True)
class InductorSpec:
    name: str
    attribute: int
    inductance: float


@dataclass(frozen=True)
class EigenParams:
    """Eigenmode solve parameters. The shift is held as the GHz document
    value so that serialization round trips are exact; construct from Hz."""

    target_count: int
    shift_ghz: float

    def __post_init__(self):
        if self.target_count < 1:
            raise ConfigError("eigenmode target count must be >= 1")
        if self.shift_ghz <= 0:
            raise ConfigError("eigenmode frequency shift must be positive")

    @classmethod
    def from_hz(cls, target_count: int, frequency_shift: float) -> "EigenParams":
        return cls(target_count=target_count, shift_ghz=frequency_shift / 1e9)

    @property
    def frequency_shift(self) -> float:  # Hz
        return self.shift_ghz * 1e9


@dataclass(frozen=True)
class DrivenParams:
    """Driven sweep parameters, band held as GHz document values."""

    f_min_ghz: float
    f_max_ghz: float
    adaptive_tolerance: float = DEFAULT_DRIVEN_TOLERANCE

    def __post_init__(self):
        if not self.f_min_ghz < self.f_max_ghz:
            raise ConfigError("driven sweep needs f_min < f_max")
        if self.adaptive_tolerance <= 0:
            raise ConfigError("adaptive sweep tolerance must be positive")

    @classmethod
    def from_hz(cls, f_min: float, f_max: float,
                tolerance: float = DEFAULT_DRIVEN_TOLERANCE) -> "DrivenParams":
        return cls(f_min_ghz=f_min / 1e9, f_max_ghz=f_max / 1e9,
                   adaptive_tolerance=tolerance)

    @property
    def f_min(self) -> float:  # Hz
        return self.f_min_ghz * 1e9

    @property
    def f_max(self) -> float:  # Hz
        return self.f_max_ghz * 1e9


@dataclass
class SolveSpec:
    problem: str                      # electrostatic | eigenmode | driven
    mesh_ref: str
    materials: dict                   # domain name -> Material
    material_attributes: dict         # domain name -> physical tag
    pec_attributes: list[int]
    pec_names: list[str]
    element_order: int
    terminals: list[tuple[str, int]] = field(default_factory=list)
    ports: list[PortSpec] = field(default_factory=list)
    inductors: list[InductorSpec] = field(default_factory=list)
    eigen: EigenParams | None = None
    driven: DrivenParams | None = None
    absorbing_attributes: list[int] = field(default_factory=list)

    def validate(self) -> None:
        if self.problem not in ("electrostatic", "eigenmode", "driven"):
            raise ConfigError(f"unknown problem class {self.problem!r}")
        if (self.problem == "eigenmode") != (self.eigen is not None):
            raise ConfigError("eigen parameters are required iff problem is eigenmode")
        if (self.problem == "driven") != (self.driven is not None):
            raise ConfigError("driven parameters are required iff problem is driven")
        if self.problem == "driven":
            excited = [p for p in self.ports if p.excited]
            if len(excited) != 1:
                raise ConfigError(
                    f"driven problem needs exactly one excited port, got {len(excited)}")
        if not 1 <= self.element_order <= 8:
            raise ConfigError("element order must be in [1, 8]")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _base_spec(plan: MeshPlan, materials: dict[str, Material] | None,
               mesh_ref: str) -> dict:
    materials = dict(materials) if materials else {"substrate": silicon(),
                                                   "air": vacuum()}
    if set(materials) != {"substrate", "air"}:
        raise ConfigError("materials must be given for exactly 'substrate' and 'air'")
    return {
        "mesh_ref": mesh_ref,
        "materials": materials,
        "material_attributes": {"substrate": 1, "air": 2},
        "element_order": plan.controls.order,
    }


def default_eigen_shift(plan: MeshPlan,
                        materials: dict[str, Material] | None = None) -> float:
    """Geometry-aware eigensolver shift: 0.8x the analytic estimate of the
    lowest quarter-wave resonance of the plan's primary CPW."""
    specs = plan.layout.cpw_specs
    if not specs or specs[0].length <= 0:
        raise ConfigError(
            "no CPW centerline available; pass the eigenmode shift explicitly")
    cpw = specs[0]
    eps_r = (materials["substrate"].permittivity if materials
             else DEFAULT_SUBSTRATE_PERMITTIVITY)
    eps_eff = cpw_caps(cpw.trace_width, cpw.gap, eps_r).eps_eff
    return 0.8 * quarter_wave_freq(cpw.length, eps_eff)


def make_electrostatic(plan: MeshPlan, materials: dict[str, Material] | None = None,
                       mesh_ref: str = "mesh.geo") -> SolveSpec:
    """Capacitance-matrix extraction: every non-ground metal island becomes
    a unit-voltage terminal; ground and far field stay PEC."""
    terminals = plan.terminal_groups()
    if len(terminals) < 2:
        raise ConfigError(
            f"capacitance extraction needs at least 2 terminals, got {len(terminals)}")
    ground = plan.metal_groups[plan.ground_island]
    spec = SolveSpec(
        problem="electrostatic",
        pec_attributes=[ground.tag, plan.far_field.tag],
        pec_names=[ground.name, plan.far_field.name],
        terminals=[(g.name, g.tag) for g in terminals],
        **_base_spec(plan, materials, mesh_ref),
    )
    spec.validate()
    return spec


def make_eigenmode(plan: MeshPlan, materials: dict[str, Material] | None = None,
                   target_count: int = 3, shift: float | None = None,
                   mesh_ref: str = "mesh.geo") -> SolveSpec:
    """Eigenfrequency extraction with junctions as lumped inductors.

    Energy participation output is requested per junction element; ports
    are kept as resistive lumped elements so external quality factors are
    reported alongside.
    """
    if shift is None:
        shift = default_eigen_shift(plan)
    inductors = [
        InductorSpec(name=g.name, attribute=g.tag, inductance=site.inductance)
        for g, site in zip(plan.junction_groups, plan.layout.junctions)
    ]
    for ind in inductors:
        if not (ind.inductance > 0):
            raise ConfigError(f"junction {ind.name!r} has no positive inductance")
    ports = [PortSpec(name=g.name, attribute=g.tag, impedance=p.impedance)
             for g, p in zip(plan.port_groups, plan.layout.ports)]
    spec = SolveSpec(
        problem="eigenmode",
        pec_attributes=[g.tag for g in plan.metal_groups] + [plan.far_field.tag],
        pec_names=[g.name for g in plan.metal_groups] + [plan.far_field.name],
        ports=ports,
        inductors=inductors,
        eigen=EigenParams.from_hz(target_count, shift),
        **_base_spec(plan, materials, mesh_ref),
    )
    spec.validate()
    return spec


def make_driven(plan: MeshPlan, materials: dict[str, Material] | None = None,
                f_min: float = 0.0, f_max: float = 0.0,
                tolerance: float = DEFAULT_DRIVEN_TOLERANCE,
                mesh_ref: str = "mesh.geo") -> SolveSpec:
    """Scattering-parameter sweep with lumped-port excitation.

    Exactly one layout port must be marked excited; the far-field boundary
    is absorbing for this problem class.
    """
    if not plan.port_groups:
        raise ConfigError("driven problem needs at least one port")
    ports = [
        PortSpec(name=g.name, attribute=g.tag, impedance=p.impedance,
                 excited=p.excited)
        for g, p in zip(plan.port_groups, plan.layout.ports)
    ]
    spec = SolveSpec(
        problem="driven",
        pec_attributes=[g.tag for g in plan.metal_groups],
        pec_names=[g.name for g in plan.metal_groups],
        ports=ports,
        driven=DrivenParams.from_hz(f_min, f_max, tolerance),
        absorbing_attributes=[plan.far_field.tag],
        **_base_spec(plan, materials, mesh_ref),
    )
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# Serialization (Palace JSON schema)
# ---------------------------------------------------------------------------

_PROBLEM_TYPES = {"electrostatic": "Electrostatic", "eigenmode": "Eigenmode",
                  "driven": "Driven"}


def _materials_section(spec: SolveSpec) -> list[dict]:
    out = []
    for domain in ("substrate", "air"):
        m = spec.materials[domain]
        out.append({
            "Attributes": [spec.material_attributes[domain]],
            "Label": m.name,
            "Permittivity": m.permittivity,
            "LossTan": m.loss_tangent,
        })
    return out


def serialize_spec(spec: SolveSpec) -> str:
    """Render a SolveSpec as a deterministic solver configuration document."""
    spec.validate()
    doc: dict = {
        "Problem": {
            "Type": _PROBLEM_TYPES[spec.problem],
            "Verbose": 2,
            "Output": "csv",
        },
        "Model": {"Mesh": spec.mesh_ref, "L0": 1.0},
        "Domains": {"Materials": _materials_section(spec)},
        "Boundaries": {
            "PEC": {"Attributes": list(spec.pec_attributes),
                    "Label": list(spec.pec_names)},
        },
        "Solver": {"Order": spec.element_order},
    }
    bnd = doc["Boundaries"]
    if spec.absorbing_attributes:
        bnd["Absorbing"] = {"Attributes": list(spec.absorbing_attributes), "Order": 1}
    if spec.terminals:
        bnd["Terminal"] = [{"Index": i + 1, "Attributes": [tag], "Label": name}
                           for i, (name, tag) in enumerate(spec.terminals)]
    lumped = []
    for i, p in enumerate(spec.ports):
        entry = {"Index": i + 1, "Attributes": [p.attribute], "R": p.impedance,
                 "Label": p.name}
        if p.excited:
            entry["Excitation"] = True
        lumped.append(entry)
    for j, ind in enumerate(spec.inductors):
        lumped.append({"Index": len(spec.ports) + j + 1,
                       "Attributes": [ind.attribute], "L": ind.inductance,
                       "Label": ind.name})
    if lumped:
        bnd["LumpedPort"] = lumped

    solver = doc["Solver"]
    if spec.problem == "electrostatic":
        solver["Electrostatic"] = {"Save": len(spec.terminals)}
    elif spec.problem == "eigenmode":
        solver["Eigenmode"] = {
            "N": spec.eigen.target_count,
            "Target": spec.eigen.shift_ghz,
            "Save": 0,
        }
    else:
        solver["Driven"] = {
            "MinFreq": spec.driven.f_min_ghz,
            "MaxFreq": spec.driven.f_max_ghz,
            "AdaptiveTol": spec.driven.adaptive_tolerance,
        }
    return json.dumps(doc, indent=2) + "\n"


def parse_spec(text: str) -> SolveSpec:
    """Inverse of :func:`serialize_spec`: parse_spec(serialize_spec(s)) == s."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration document is not valid JSON: {exc}") from exc
    for section in ("Problem", "Model", "Domains", "Boundaries", "Solver"):
        if section not in doc:
            raise ConfigError(f"configuration document lacks the {section} section")
    problem = {v: k for k, v in _PROBLEM_TYPES.items()}.get(doc["Problem"].get("Type"))
    if problem is None:
        raise ConfigError(f"unknown problem type {doc['Problem'].get('Type')!r}")

    materials, attrs = {}, {}
    entries = doc["Domains"]["Materials"]
    for domain, entry in zip(("substrate", "air"), entries):
        materials[domain] = Material(
            name=entry.get("Label", domain),
            permittivity=entry["Permittivity"],
            loss_tangent=entry.get("LossTan", 0.0),
        )
        attrs[domain] = entry["Attributes"][0]

    bnd = doc["Boundaries"]
    ports, inductors = [], []
    for entry in bnd.get("LumpedPort", []):
        label = entry.get("Label", f"element_{entry['Index']}")
        if "L" in entry:
            inductors.append(InductorSpec(name=label,
                                          attribute=entry["Attributes"][0],
                                          inductance=entry["L"]))
        else:
            ports.append(PortSpec(name=label, attribute=entry["Attributes"][0],
                                  impedance=entry.get("R", 50.0),
                                  excited=bool(entry.get("Excitation", False))))
    solver = doc["Solver"]
    eigen = driven = None
    if problem == "eigenmode":
        eigen = EigenParams(target_count=solver["Eigenmode"]["N"],
                            shift_ghz=solver["Eigenmode"]["Target"])
    if problem == "driven":
        driven = DrivenParams(f_min_ghz=solver["Driven"]["MinFreq"],
                              f_max_ghz=solver["Driven"]["MaxFreq"],
                              adaptive_tolerance=solver["Driven"]["AdaptiveTol"])
    spec = SolveSpec(
        problem=problem,
        mesh_ref=doc["Model"]["Mesh"],
        materials=materials,
        material_attributes=attrs,
        pec_attributes=list(bnd["PEC"]["Attributes"]),
        pec_names=list(bnd["PEC"].get("Label", [])),
        element_order=solver["Order"],
        terminals=[(e.get("Label", f"terminal_{e['Index']}"), e["Attributes"][0])
                   for e in bnd.get("Terminal", [])],
        ports=ports,
        inductors=inductors,
        eigen=eigen,
        driven=driven,
        absorbing_attributes=list(bnd.get("Absorbing", {}).get("Attributes", [])),
    )
    spec.validate()
    return spec


def strip_labels(doc_text: str) -> str:
    """Adapter for solver versions that reject non-schema keys: removes the
    Label annotations, leaving pure Palace-schema JSON."""
    doc = json.loads(doc_text)

    def scrub(node):
        if isinstance(node, dict):
            node.pop("Label", None)
            for v in node.values():
                scrub(v)
        elif isinstance(node, list):
            for v in node:
                scrub(v)

    scrub(doc)
    return json.dumps(doc, indent=2) + "\n"
