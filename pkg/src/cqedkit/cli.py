"""Command-line pipeline: parse -> plan -> configure -> run -> fit -> report.

One YAML project file drives everything (schema in the README); every stage
is also exposed as its own subcommand. Exit codes: 0 success, 1 stage
error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import gdsii, layout as layout_mod, meshplan, orchestrate, quantize, report, results, solvercfg, specfit

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2


class ProjectError(Exception):
    pass


@dataclass
class ProjectConfig:
    gds_path: Path
    top_structure: str
    annotations_path: Path | None
    metal_layer: int
    material: solvercfg.Material
    mesh: dict
    passes: list[str]
    output: Path
    solver: list[str] | None
    driven: dict
    eigenmode: dict
    fit_windows: list[dict]
    targets: dict
    node_map: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ProjectConfig":
        path = Path(path)
        if not path.exists():
            raise ProjectError(f"project file not found: {path}")
        doc = yaml.safe_load(path.read_text()) or {}
        base = path.parent

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        try:
            gds_path = resolve(doc["gds"])
            top = doc["top"]
        except KeyError as exc:
            raise ProjectError(f"project file lacks required key {exc}") from exc
        if not gds_path.exists():
            raise ProjectError(f"layout file not found: {gds_path}")
        annotations = doc.get("annotations")
        if annotations is not None:
            annotations = resolve(annotations)
            if not annotations.exists():
                raise ProjectError(f"annotation file not found: {annotations}")
        mesh = dict(doc.get("mesh", {}))
        if mesh.get("r", 1.5) <= 0:
            raise ProjectError("mesh refinement ratio r must be positive")
        passes = list(doc.get("passes", ["eigenmode"]))
        if not passes:
            raise ProjectError("pass list must not be empty")
        unknown = set(passes) - {"electrostatic", "eigenmode", "driven"}
        if unknown:
            raise ProjectError(f"unknown passes: {sorted(unknown)}")
        mat = doc.get("material", {})
        solver = doc.get("solver")
        if isinstance(solver, str):
            solver = [solver]
        return cls(
            gds_path=gds_path,
            top_structure=top,
            annotations_path=annotations,
            metal_layer=int(doc.get("metal_layer", 1)),
            material=solvercfg.Material(
                name=mat.get("name", "substrate"),
                permittivity=float(mat.get("permittivity",
                                           solvercfg.DEFAULT_SUBSTRATE_PERMITTIVITY)),
                loss_tangent=float(mat.get("loss_tangent",
                                           solvercfg.DEFAULT_SUBSTRATE_LOSS_TANGENT)),
            ),
            mesh=mesh,
            passes=passes,
            output=resolve(doc.get("output", "out")),
            solver=solver,
            driven=dict(doc.get("driven", {})),
            eigenmode=dict(doc.get("eigenmode", {})),
            fit_windows=list(doc.get("fit_windows", [])),
            targets=dict(doc.get("targets", {})),
            node_map=dict(doc.get("node_map", {})),
        )


def _load_layout(cfg: ProjectConfig) -> layout_mod.LayoutModel:
    lib = gdsii.parse_gds(cfg.gds_path.read_bytes())
    flat = gdsii.flatten(lib, cfg.top_structure)
    annot = None
    if cfg.annotations_path is not None:
        annot = layout_mod.load_annotations(cfg.annotations_path)
    return layout_mod.build_layout(flat, metal_layer=cfg.metal_layer,
                                   annotations=annot)


def _controls(cfg: ProjectConfig, model: layout_mod.LayoutModel) -> meshplan.MeshControls:
    mesh = cfg.mesh
    if model.cpw_specs:
        trace_width = model.cpw_specs[0].trace_width
    elif "trace_width" in mesh:
        trace_width = float(mesh["trace_width"])
    else:
        raise ProjectError("no CPW annotation and no mesh.trace_width override")
    kwargs = {}
    for key in ("s_max", "growth_rate", "substrate_thickness"):
        if key in mesh:
            kwargs[key] = float(mesh[key])
    if "air_padding" in mesh:
        kwargs["air_padding"] = tuple(float(v) for v in mesh["air_padding"])
    return meshplan.MeshControls(
        trace_width=trace_width,
        r=float(mesh.get("r", 1.5)),
        order=int(mesh.get("order", 4)),
        **kwargs,
    )


def _materials(cfg: ProjectConfig) -> dict[str, solvercfg.Material]:
    return {"substrate": cfg.material, "air": solvercfg.vacuum()}


def _make_spec(cfg: ProjectConfig, plan, pass_name: str) -> solvercfg.SolveSpec:
    materials = _materials(cfg)
    if pass_name == "electrostatic":
        return solvercfg.make_electrostatic(plan, materials)
    if pass_name == "eigenmode":
        eig = cfg.eigenmode
        return solvercfg.make_eigenmode(
            plan, materials,
            target_count=int(eig.get("target_count", 3)),
            shift=float(eig["shift"]) if "shift" in eig else None)
    drv = cfg.driven
    if "f_min" not in drv or "f_max" not in drv:
        raise ProjectError("driven pass needs driven.f_min and driven.f_max")
    return solvercfg.make_driven(
        plan, materials, f_min=float(drv["f_min"]), f_max=float(drv["f_max"]),
        tolerance=float(drv.get("tolerance", solvercfg.DEFAULT_DRIVEN_TOLERANCE)))


def _run_pass(cfg: ProjectConfig, plan, pass_name: str, dry_run: bool) -> orchestrate.Job:
    spec = _make_spec(cfg, plan, pass_name)
    job = orchestrate.Job(
        id=pass_name,
        kind="solve",
        inputs={"config.json": solvercfg.serialize_spec(spec),
                "mesh.geo": meshplan.emit_mesh_script(plan)},
        workdir=cfg.output / pass_name,
    )
    return orchestrate.run_job(job, executable=cfg.solver, dry_run=dry_run)


def _fit_sweeps(cfg: ProjectConfig, sweep_dir: Path) -> dict[str, specfit.FitResult]:
    fits = {}
    for entry in cfg.fit_windows:
        name = entry["name"]
        window = tuple(float(v) for v in entry["window"])
        pair = tuple(int(v) for v in entry.get("pair", (2, 1)))
        sweep_csv = Path(entry["csv"]) if "csv" in entry \
            else sweep_dir / "csv" / "port-S.csv"
        if not sweep_csv.is_absolute():
            sweep_csv = cfg.output / sweep_csv
        sweep = results.parse_sparams_csv(sweep_csv)
        fits[name] = specfit.fit_notch(sweep, pair, window)
    return fits


def _write_fit_outputs(cfg: ProjectConfig, fits: dict[str, specfit.FitResult]) -> None:
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    lines = ["resonator,f_r (Hz),Q_l,|Q_e|,phi (rad),kappa (Hz),residual_rms"]
    for name in sorted(fits):
        x = fits[name]
        lines.append(f"{name},{x.f_r!r},{x.q_l!r},{x.q_e_mag!r},{x.phi!r},"
                     f"{x.kappa!r},{x.residual_rms!r}")
    (out / "fits.csv").write_text("\n".join(lines) + "\n")
    for name in sorted(fits):
        x = fits[name]
        entry = next(e for e in cfg.fit_windows if e["name"] == name)
        sweep_csv = Path(entry["csv"]) if "csv" in entry else out / "driven/csv/port-S.csv"
        if not sweep_csv.is_absolute():
            sweep_csv = cfg.output / sweep_csv
        sweep = results.parse_sparams_csv(sweep_csv)
        lo, hi = (float(v) for v in entry["window"])
        mask = (sweep.frequencies >= lo) & (sweep.frequencies <= hi)
        f = sweep.frequencies[mask]
        pair = tuple(int(v) for v in entry.get("pair", (2, 1)))
        data = abs(sweep.s(*pair)[mask])
        model = abs(x.model(f))
        rows = [f"{fi!r} {di!r} {mi!r}" for fi, di, mi in zip(f, data, model)]
        (out / f"fit_{name}.dat").write_text(
            "# f(Hz) |S21|_data |S21|_model\n" + "\n".join(rows) + "\n")


def _write_report(cfg: ProjectConfig, fits: dict[str, specfit.FitResult]) -> str:
    rows = report.build_report(fits, cfg.targets)
    text = report.render_report_text(rows)
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "report.csv").write_text(report.render_report_csv(rows))
    (cfg.output / "report.txt").write_text(text)
    return text


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_parse_gds(args) -> int:
    lib = gdsii.parse_gds(Path(args.gds).read_bytes())
    print(f"library {lib.name!r}: {len(lib.structures)} structures, "
          f"{lib.meters_per_db_unit:g} m per db unit")
    for s in lib.structures:
        print(f"  {s.name}: {len(s.elements)} elements")
    return EXIT_OK


def cmd_plan_mesh(args) -> int:
    cfg = ProjectConfig.load(args.project)
    model = _load_layout(cfg)
    plan = meshplan.build_plan(model, _controls(cfg, model))
    script = meshplan.emit_mesh_script(plan)
    out = Path(args.out) if args.out else cfg.output / "mesh.geo"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(script)
    print(f"wrote {out} (S_min = {plan.controls.s_min:g} m, "
          f"{len(plan.boundary_groups)} boundary groups)")
    return EXIT_OK


def cmd_emit_config(args) -> int:
    cfg = ProjectConfig.load(args.project)
    model = _load_layout(cfg)
    plan = meshplan.build_plan(model, _controls(cfg, model))
    cfg.output.mkdir(parents=True, exist_ok=True)
    for pass_name in cfg.passes:
        spec = _make_spec(cfg, plan, pass_name)
        out = cfg.output / f"{pass_name}.json"
        out.write_text(solvercfg.serialize_spec(spec))
        print(f"wrote {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ProjectConfig.load(args.project)
    model = _load_layout(cfg)
    plan = meshplan.build_plan(model, _controls(cfg, model))
    for pass_name in cfg.passes:
        job = _run_pass(cfg, plan, pass_name, dry_run=args.dry_run)
        state = "reused" if job.reused else job.status
        print(f"{pass_name}: {state} ({len(job.artifacts)} artifacts)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = ProjectConfig.load(args.project)
    model = _load_layout(cfg)
    controls = _controls(cfg, model)
    grid = [(float(r), int(o)) for r, o in
            (point.split(":") for point in args.points.split(","))]
    result = orchestrate.run_sweep(
        model, controls, grid, parallelism=args.parallelism,
        workroot=cfg.output / "sweep", executable=cfg.solver,
        materials=_materials(cfg))
    table_path = cfg.output / "sweep" / "results.csv"
    table_path.parent.mkdir(parents=True, exist_ok=True)
    table_path.write_text(result.table())
    print(result.table(), end="")
    for point, error in result.failures:
        print(f"failed {point}: {error}", file=sys.stderr)
    return EXIT_OK


def cmd_postprocess(args) -> int:
    cfg = ProjectConfig.load(args.project)
    csv_dir = cfg.output / "eigenmode" / "csv"
    modes = results.load_modes(csv_dir / "eig.csv", csv_dir / "port-EPR.csv")
    window = tuple(float(v) for v in args.window.split(":")) if args.window \
        else (0.0, float("inf"))
    modes = results.filter_modes(modes, window, q_min=args.q_min)
    for m in modes:
        parts = " ".join(f"p[{k}]={v:.4g}" for k, v in m.participations.items())
        print(f"mode {m.index}: f = {m.frequency / 1e9:.6f} GHz, "
              f"Q = {m.q_factor:.4g} {parts}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = ProjectConfig.load(args.project)
    fits = _fit_sweeps(cfg, cfg.output / "driven")
    _write_fit_outputs(cfg, fits)
    for name in sorted(fits):
        x = fits[name]
        print(f"{name}: f_r = {x.f_r / 1e9:.6f} GHz, Q_l = {x.q_l:.1f}, "
              f"|Q_e| = {x.q_e_mag:.1f}, kappa = {x.kappa / 1e6:.4f} MHz")
    return EXIT_OK


def cmd_hamiltonian(args) -> int:
    cfg = ProjectConfig.load(args.project)
    model = _load_layout(cfg)
    csv_dir = cfg.output / "eigenmode" / "csv"
    modes = results.load_modes(csv_dir / "eig.csv", csv_dir / "port-EPR.csv")
    energies = {f"junction_{j.name}": quantize.josephson_energy(j.inductance)
                for j in model.junctions}
    spec = quantize.epr_kerr(modes, energies)
    cfg.output.mkdir(parents=True, exist_ok=True)
    payload = {
        "modes": spec.mode_names,
        "f_ghz": [v / 1e9 for v in spec.frequencies],
        "f_dressed_ghz": [v / 1e9 for v in spec.dressed_frequencies],
        "alpha_mhz": [v / 1e6 for v in spec.alpha],
        "chi_mhz": (spec.chi / 1e6).tolist(),
    }
    (cfg.output / "hamiltonian.json").write_text(json.dumps(payload, indent=2) + "\n")
    for i, name in enumerate(spec.mode_names):
        print(f"{name}: f = {payload['f_ghz'][i]:.6f} GHz, "
              f"alpha = {payload['alpha_mhz'][i]:.4f} MHz")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = ProjectConfig.load(args.project)
    fits = _fit_sweeps(cfg, cfg.output / "driven")
    print(_write_report(cfg, fits), end="")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = ProjectConfig.load(args.project)
    model = _load_layout(cfg)
    plan = meshplan.build_plan(model, _controls(cfg, model))
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "mesh.geo").write_text(meshplan.emit_mesh_script(plan))
    for pass_name in cfg.passes:
        job = _run_pass(cfg, plan, pass_name, dry_run=args.dry_run)
        state = "reused" if job.reused else job.status
        print(f"{pass_name}: {state}")
    if args.dry_run:
        return EXIT_OK
    if "eigenmode" in cfg.passes and model.junctions:
        cmd_hamiltonian(args)
    if "driven" in cfg.passes and cfg.fit_windows:
        fits = _fit_sweeps(cfg, cfg.output / "driven")
        _write_fit_outputs(cfg, fits)
        print(_write_report(cfg, fits), end="")
    return EXIT_OK


_STAGE_ERRORS = (
    gdsii.GdsError, layout_mod.LayoutError, meshplan.MeshError,
    solvercfg.ConfigError, orchestrate.JobError, results.ResultsError,
    quantize.QuantizeError, specfit.FitError, OSError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqedkit",
        description="Layouts to EM solver inputs; solver outputs to Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse-gds", help="summarize a GDSII file")
    p.add_argument("gds")
    p.set_defaults(func=cmd_parse_gds)

    for name, func, extras in [
        ("plan-mesh", cmd_plan_mesh, [("--out", {"default": None})]),
        ("emit-config", cmd_emit_config, []),
        ("run", cmd_run, [("--dry-run", {"action": "store_true"})]),
        ("sweep", cmd_sweep, [
            ("--points", {"default": "0.5:4,1:4,1.5:4", "help": "r:order,..."}),
            ("--parallelism", {"type": int, "default": 1})]),
        ("postprocess", cmd_postprocess, [
            ("--window", {"default": None, "help": "f_lo:f_hi in Hz"}),
            ("--q-min", {"type": float, "default": 0.0})]),
        ("fit", cmd_fit, []),
        ("hamiltonian", cmd_hamiltonian, []),
        ("report", cmd_report, []),
        ("pipeline", cmd_pipeline, [("--dry-run", {"action": "store_true"})]),
    ]:
        p = sub.add_parser(name)
        p.add_argument("project", help="project YAML file")
        for flag, kwargs in extras:
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProjectError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _STAGE_ERRORS as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
