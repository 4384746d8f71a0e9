"""Solver configuration generation and serialization."""

import json

import numpy as np
import pytest

from cqedkit.layout import CpwSpec, JunctionSite, LayoutModel, PortSite
from cqedkit.meshplan import MeshControls, build_plan
from cqedkit.solvercfg import (ConfigError, Material, make_driven,
                               make_eigenmode, make_electrostatic, parse_spec,
                               serialize_spec, silicon, strip_labels, vacuum)
from conftest import FIXTURES_DIR, chip_layout, simple_cpw_layout


def two_island_transmon_plan():
    """Ground plane plus two floating pads: the minimal capacitance case."""
    ground = np.array([[0, 0], [2000e-6, 0], [2000e-6, 500e-6], [0, 500e-6]])
    pad_a = np.array([[800e-6, 700e-6], [950e-6, 700e-6],
                      [950e-6, 800e-6], [800e-6, 800e-6]])
    pad_b = np.array([[1050e-6, 700e-6], [1200e-6, 700e-6],
                      [1200e-6, 800e-6], [1050e-6, 800e-6]])
    model = LayoutModel(
        metal_polygons=[ground, pad_a, pad_b],
        chip_extent=(0.0, 0.0, 2000e-6, 900e-6),
        cpw_specs=[CpwSpec(trace_width=10e-6, gap=6e-6)],
    )
    model.validate()
    return build_plan(model, MeshControls(trace_width=10e-6))


@pytest.fixture
def chip_plan(chip_model):
    return build_plan(chip_model, MeshControls(trace_width=10e-6, r=1.5, order=4))


class TestElectrostatic:
    def test_two_island_transmon(self):
        spec = make_electrostatic(two_island_transmon_plan())
        assert len(spec.terminals) == 2
        assert len(spec.pec_attributes) == 2  # ground island + far field

    def test_single_terminal_rejected(self):
        ground = np.array([[0, 0], [1e-3, 0], [1e-3, 1e-3], [0, 1e-3]])
        pad = np.array([[2e-3, 0], [2.1e-3, 0], [2.1e-3, 1e-4], [2e-3, 1e-4]])
        model = LayoutModel(metal_polygons=[ground, pad],
                            chip_extent=(0, 0, 2.2e-3, 1e-3),
                            cpw_specs=[CpwSpec(trace_width=10e-6, gap=6e-6)])
        plan = build_plan(model, MeshControls(trace_width=10e-6))
        with pytest.raises(ConfigError, match="at least 2 terminals"):
            make_electrostatic(plan)

    def test_roundtrip(self, chip_plan):
        spec = make_electrostatic(chip_plan)
        assert parse_spec(serialize_spec(spec)) == spec


class TestEigenmode:
    def test_junction_and_modes(self, chip_plan):
        spec = make_eigenmode(chip_plan, target_count=3, shift=3e9)
        assert len(spec.inductors) == 1
        assert spec.inductors[0].inductance == pytest.approx(10.970e-9, rel=1e-4)
        assert spec.eigen.target_count == 3
        assert spec.eigen.frequency_shift == pytest.approx(3e9)

    def test_bare_resonator_without_junctions(self):
        plan = build_plan(simple_cpw_layout(), MeshControls(trace_width=10e-6))
        spec = make_eigenmode(plan, target_count=2)
        assert spec.inductors == []

    def test_negative_shift_rejected(self, chip_plan):
        with pytest.raises(ConfigError):
            make_eigenmode(chip_plan, shift=-1e9)

    def test_default_shift_from_oracle(self, chip_plan):
        spec = make_eigenmode(chip_plan)
        # 0.8x the quarter-wave estimate of the 1.4 mm feed hint.
        assert spec.eigen.frequency_shift == pytest.approx(0.8 * 21.42e9, rel=1e-3)

    def test_roundtrip(self, chip_plan):
        spec = make_eigenmode(chip_plan, target_count=4, shift=5.1e9)
        assert parse_spec(serialize_spec(spec)) == spec

    def test_golden_document(self):
        plan = build_plan(simple_cpw_layout(),
                          MeshControls(trace_width=10e-6, r=1.5, order=4))
        spec = make_eigenmode(plan, target_count=3)
        golden = (FIXTURES_DIR / "golden" / "eigenmode_config.json").read_text()
        assert serialize_spec(spec) == golden


class TestDriven:
    def test_two_port_band(self, chip_plan):
        spec = make_driven(chip_plan, f_min=7.0e9, f_max=7.8e9)
        assert len(spec.ports) == 2
        assert sum(p.excited for p in spec.ports) == 1
        assert spec.driven.f_min == pytest.approx(7.0e9)
        assert spec.driven.f_max == pytest.approx(7.8e9)

    def test_default_impedance_is_50(self, chip_plan):
        spec = make_driven(chip_plan, f_min=7.0e9, f_max=7.8e9)
        assert all(p.impedance == 50.0 for p in spec.ports)

    def test_both_ports_excited_rejected(self, chip_model):
        for p in chip_model.ports:
            p.excited = True
        plan = build_plan(chip_model, MeshControls(trace_width=10e-6))
        with pytest.raises(ConfigError, match="exactly one excited"):
            make_driven(plan, f_min=7.0e9, f_max=7.8e9)

    def test_empty_band_rejected(self, chip_plan):
        with pytest.raises(ConfigError):
            make_driven(chip_plan, f_min=7.8e9, f_max=7.0e9)

    def test_roundtrip(self, chip_plan):
        spec = make_driven(chip_plan, f_min=7.03e9, f_max=7.81e9, tolerance=1e-8)
        assert parse_spec(serialize_spec(spec)) == spec


class TestDocuments:
    def test_identical_materials_block(self, chip_plan):
        docs = [
            json.loads(serialize_spec(make_electrostatic(chip_plan))),
            json.loads(serialize_spec(make_eigenmode(chip_plan, shift=3e9))),
            json.loads(serialize_spec(make_driven(chip_plan, f_min=7e9, f_max=8e9))),
        ]
        blocks = [d["Domains"]["Materials"] for d in docs]
        assert blocks[0] == blocks[1] == blocks[2]

    def test_pec_covers_metal_in_all_classes(self, chip_plan):
        metal_tags = {g.tag for g in chip_plan.metal_groups}
        for spec in (make_electrostatic(chip_plan),
                     make_eigenmode(chip_plan, shift=3e9),
                     make_driven(chip_plan, f_min=7e9, f_max=8e9)):
            doc = json.loads(serialize_spec(spec))
            pec = set(doc["Boundaries"]["PEC"]["Attributes"])
            if spec.problem == "electrostatic":
                # Non-ground islands are terminals; ground stays PEC and
                # every island appears in exactly one of the two.
                terminals = {a for t in doc["Boundaries"]["Terminal"]
                             for a in t["Attributes"]}
                assert metal_tags == terminals | (pec & metal_tags)
            else:
                assert metal_tags <= pec

    def test_material_values_verbatim(self, chip_plan):
        doc = serialize_spec(make_eigenmode(chip_plan, shift=3e9))
        assert '"Permittivity": 11.49' in doc
        assert '"LossTan": 2.3e-06' in doc

    def test_absorbing_far_field_only_for_driven(self, chip_plan):
        driven = json.loads(serialize_spec(
            make_driven(chip_plan, f_min=7e9, f_max=8e9)))
        eigen = json.loads(serialize_spec(make_eigenmode(chip_plan, shift=3e9)))
        assert driven["Boundaries"]["Absorbing"]["Attributes"] == [9]
        assert "Absorbing" not in eigen["Boundaries"]
        assert 9 in eigen["Boundaries"]["PEC"]["Attributes"]

    def test_serialization_injective(self, chip_plan):
        a = serialize_spec(make_eigenmode(chip_plan, target_count=3, shift=3e9))
        b = serialize_spec(make_eigenmode(chip_plan, target_count=4, shift=3e9))
        c = serialize_spec(make_eigenmode(chip_plan, target_count=3, shift=3.1e9))
        assert len({a, b, c}) == 3

    def test_strip_labels_adapter(self, chip_plan):
        doc = serialize_spec(make_driven(chip_plan, f_min=7e9, f_max=8e9))
        stripped = json.loads(strip_labels(doc))
        assert "Label" not in json.dumps(stripped)
        assert stripped["Boundaries"]["LumpedPort"][0]["R"] == 50.0

    def test_parse_rejects_malformed(self):
        with pytest.raises(ConfigError, match="JSON"):
            parse_spec("not json")
        with pytest.raises(ConfigError, match="section"):
            parse_spec('{"Problem": {}}')

    def test_materials_validation(self):
        with pytest.raises(ConfigError):
            Material("bad", permittivity=0.5)
        with pytest.raises(ConfigError):
            Material("bad", permittivity=2.0, loss_tangent=-1e-6)
        assert silicon().permittivity == 11.49
        assert vacuum().loss_tangent == 0.0
