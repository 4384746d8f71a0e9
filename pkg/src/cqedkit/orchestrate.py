"""External executable orchestration: jobs, work directories, sweeps.

The solver is invoked as a subprocess: configuration path as the first
argument, exit 0 on success, CSV outputs under the job's ``csv/``
directory. Nothing links against EM software; a test double stands in for
the real solver in the regular suite. Finished jobs are identified by a
content hash of their inputs, so reruns with unchanged inputs perform no
subprocess invocations.
"""

from __future__ import annotations

import hashlib
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .layout import LayoutModel
from .meshplan import MeshControls, build_plan, emit_mesh_script
from .results import load_modes
from .solvercfg import Material, make_eigenmode, serialize_spec
from .specfit import ConvergencePoint

__all__ = ["JobError", "Job", "SweepGrid", "SweepResult", "run_job", "run_sweep",
           "SOLVER_ENV_VAR"]

SOLVER_ENV_VAR = "CQEDKIT_SOLVER"
DEFAULT_TIMEOUT = 600.0
_HASH_FILE = "inputs.sha256"
_CSV_DIR = "csv"


class JobError(Exception):
    pass


@dataclass
class Job:
    id: str
    kind: str                      # "mesh" | "solve"
    inputs: dict[str, str]         # file name -> text content
    workdir: Path
    status: str = "pending"        # pending | running | done | failed
    artifacts: list[Path] = field(default_factory=list)
    exit_code: int | None = None
    wall_time: float = 0.0
    log_path: Path | None = None
    error: str = ""
    reused: bool = False

    @property
    def config_path(self) -> Path:
        return self.workdir / "config.json"


def _inputs_digest(inputs: dict[str, str]) -> str:
    digest = hashlib.sha256()
    for name in sorted(inputs):
        digest.update(name.encode())
        digest.update(b"\x00")
        digest.update(inputs[name].encode())
        digest.update(b"\x00")
    return digest.hexdigest()


def _collect_artifacts(workdir: Path) -> list[Path]:
    return sorted((workdir / _CSV_DIR).glob("*.csv"))


def resolve_solver(executable=None):
    """Solver command from the argument or the environment override."""
    exe = executable or os.environ.get(SOLVER_ENV_VAR)
    if exe is None:
        return None
    return list(exe) if isinstance(exe, (list, tuple)) else [str(exe)]


def run_job(job: Job, executable=None, timeout: float = DEFAULT_TIMEOUT,
            dry_run: bool = False) -> Job:
    """Write the job's inputs and runment the solver over them.

    Reruns with unchanged inputs are no-ops (the content hash is stamped in
    the work directory). ``dry_run`` writes the inputs and stops. On
    failure the job is returned with status ``failed`` and a
    :class:`JobError` is raised.
    """
    job.workdir = Path(job.workdir)
    job.workdir.mkdir(parents=True, exist_ok=True)
    for name, content in job.inputs.items():
        (job.workdir / name).write_text(content)
    digest = _inputs_digest(job.inputs)

    stamp = job.workdir / _HASH_FILE
    if stamp.exists() and stamp.read_text().strip() == digest:
        artifacts = _collect_artifacts(job.workdir)
        if artifacts or dry_run:
            job.status = "done"
            job.reused = True
            job.artifacts = artifacts or [job.workdir / n for n in sorted(job.inputs)]
            return job

    if dry_run:
        job.status = "done"
        job.artifacts = [job.workdir / name for name in sorted(job.inputs)]
        stamp.write_text(digest + "\n")
        return job

    cmd = resolve_solver(executable)
    if cmd is None or not (Path(cmd[0]).exists() or _on_path(cmd[0])):
        job.status = "failed"
        job.error = f"solver executable not found: {cmd[0] if cmd else '(unset)'}"
        raise JobError(job.error)

    (job.workdir / _CSV_DIR).mkdir(exist_ok=True)
    job.log_path = job.workdir / "solver.log"
    job.status = "running"
    started = time.monotonic()
    try:
        with open(job.log_path, "w") as log:
            proc = subprocess.run(
                cmd + [str(job.config_path)], cwd=job.workdir,
                stdout=log, stderr=subprocess.STDOUT, timeout=timeout)
    except subprocess.TimeoutExpired:
        job.status = "failed"
        job.wall_time = time.monotonic() - started
        job.error = f"solver timed out after {timeout} s"
        raise JobError(job.error) from None
    job.wall_time = time.monotonic() - started
    job.exit_code = proc.returncode
    if proc.returncode != 0:
        job.status = "failed"
        job.error = f"solver exited with status {proc.returncode}"
        raise JobError(f"{job.error}; see {job.log_path}")
    job.artifacts = _collect_artifacts(job.workdir)
    if not job.artifacts:
        job.status = "failed"
        job.error = "solver produced no CSV artifacts"
        raise JobError(job.error)
    job.status = "done"
    stamp.write_text(digest + "\n")
    return job


def _on_path(name: str) -> bool:
    from shutil import which
    return which(name) is not None


# ---------------------------------------------------------------------------
# Convergence sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepGrid:
    points: list[tuple[float, int]]          # sorted unique (r, order)
    job_ids: dict[tuple[float, int], str] = field(default_factory=dict)


@dataclass
class SweepResult:
    grid: SweepGrid
    points: list[ConvergencePoint]
    failures: list[tuple[tuple[float, int], str]]
    jobs: list[Job]

    def table(self) -> str:
        """Deterministic results table, ordered by (r, order)."""
        lines = ["r,order,dofs,f (Hz),elapsed (s)"]
        for p in self.points:
            lines.append(f"{p.r:g},{p.order},{p.dofs},"
                         f"{format(p.frequency, '.10g')},{format(p.elapsed, '.6g')}")
        return "\n".join(lines) + "\n"


def _job_id(r: float, order: int) -> str:
    return f"r{r:g}_o{order}"


def run_sweep(layout: LayoutModel, controls_base: MeshControls,
              grid: list[tuple[float, int]], parallelism: int = 1,
              workroot: str | Path = "sweep", executable=None,
              materials: dict[str, Material] | None = None,
              target_count: int = 1, shift: float | None = None,
              timeout: float = DEFAULT_TIMEOUT, dry_run: bool = False) -> SweepResult:
    """Run one eigenmode job per (r, order) grid point and tabulate results.

    Jobs execute in parallel up to ``parallelism``; the result table is
    ordered by (r, order) regardless of completion order. Failed points
    are recorded, not fatal, unless every point fails.
    """
    if not grid:
        raise JobError("sweep grid is empty")
    if parallelism < 1:
        raise JobError("parallelism must be >= 1")
    points = sorted(set((float(r), int(order)) for r, order in grid))
    workroot = Path(workroot)

    def prepare(point) -> Job:
        r, order = point
        controls = controls_base.at(r, order)
        plan = build_plan(layout, controls)
        spec = make_eigenmode(plan, materials, target_count=target_count,
                              shift=shift, mesh_ref="mesh.geo")
        return Job(
            id=_job_id(r, order),
            kind="solve",
            inputs={"config.json": serialize_spec(spec),
                    "mesh.geo": emit_mesh_script(plan)},
            workdir=workroot / _job_id(r, order),
        )

    def execute(point):
        job = prepare(point)
        try:
            run_job(job, executable=executable, timeout=timeout, dry_run=dry_run)
            return point, job, None
        except JobError as exc:
            return point, job, str(exc)

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        outcomes = list(pool.map(execute, points))

    grid_obj = SweepGrid(points=points,
                         job_ids={point: job.id for point, job, _ in outcomes})
    results, failures, jobs = [], [], []
    for point, job, error in sorted(outcomes, key=lambda o: o[0]):
        jobs.append(job)
        if error is not None:
            failures.append((point, error))
            continue
        if dry_run:
            continue
        try:
            results.append(_read_point(point, job))
        except Exception as exc:  # corrupt artifacts count as point failures
            job.status = "failed"
            job.error = str(exc)
            failures.append((point, str(exc)))
    if not dry_run and len(failures) == len(points):
        raise JobError("all sweep points failed; first error: "
                       f"{failures[0][1]}")
    return SweepResult(grid=grid_obj, points=results, failures=failures, jobs=jobs)


def _read_point(point: tuple[float, int], job: Job) -> ConvergencePoint:
    r, order = point
    csv_dir = job.workdir / _CSV_DIR
    modes = load_modes(csv_dir / "eig.csv", csv_dir / "port-EPR.csv")
    if not modes:
        raise JobError(f"job {job.id}: eigenmode table is empty")
    dofs, elapsed = 0, 0.0
    meta = csv_dir / "meta.csv"
    if meta.exists():
        rows = meta.read_text().strip().splitlines()
        if len(rows) >= 2:
            cells = rows[1].split(",")
            dofs, elapsed = int(float(cells[0])), float(cells[1])
    return ConvergencePoint(r=r, order=order, dofs=dofs,
                            frequency=modes[0].frequency, elapsed=elapsed)
