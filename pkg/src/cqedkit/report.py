"""Comparison report: fitted resonator parameters against target values.

One row per resonator: simulated and target base frequency with relative
deviation, simulated and target external coupling with relative deviation.
Frequency deviations above 0.3% and coupling deviations above 16% are
flagged; flags are findings, not errors.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["ReportRow", "build_report", "render_report_csv", "render_report_text",
           "FREQ_FLAG_LIMIT", "COUPLING_FLAG_LIMIT"]

FREQ_FLAG_LIMIT = 0.003
COUPLING_FLAG_LIMIT = 0.16


@dataclass
class ReportRow:
    name: str
    f_sim: float               # Hz
    f_target: float | None     # Hz
    kappa_sim: float            # Hz
    kappa_target: float | None  # Hz

    @property
    def f_deviation(self) -> float | None:
        if self.f_target is None:
            return None
        return (self.f_sim - self.f_target) / self.f_target

    @property
    def kappa_deviation(self) -> float | None:
        if self.kappa_target is None:
            return None
        return (self.kappa_sim - self.kappa_target) / self.kappa_target

    @property
    def f_flag(self) -> bool:
        d = self.f_deviation
        return d is not None and abs(d) > FREQ_FLAG_LIMIT

    @property
    def kappa_flag(self) -> bool:
        d = self.kappa_deviation
        return d is not None and abs(d) > COUPLING_FLAG_LIMIT


def build_report(fits: dict[str, "FitResult"], targets: dict[str, dict]) -> list[ReportRow]:
    rows = []
    for name in sorted(fits):
        fit = fits[name]
        target = targets.get(name, {})
        rows.append(ReportRow(
            name=name,
            f_sim=fit.f_r,
            f_target=target.get("frequency"),
            kappa_sim=fit.kappa,
            kappa_target=target.get("coupling"),
        ))
    return rows


def _fmt_pct(x: float | None) -> str:
    return "" if x is None else f"{100.0 * x:+.3f}"


def _fmt_ghz(x: float | None) -> str:
    return "" if x is None else f"{x / 1e9:.4f}"


def _fmt_mhz(x: float | None) -> str:
    return "" if x is None else f"{x / 1e6:.4f}"


def render_report_csv(rows: list[ReportRow]) -> str:
    lines = ["resonator,f_sim (GHz),f_target (GHz),f_dev (%),"
             "kappa_sim (MHz),kappa_target (MHz),kappa_dev (%),flags"]
    for r in rows:
        flags = "+".join(
            n for n, on in (("freq", r.f_flag), ("coupling", r.kappa_flag)) if on)
        lines.append(",".join([
            r.name, _fmt_ghz(r.f_sim), _fmt_ghz(r.f_target), _fmt_pct(r.f_deviation),
            _fmt_mhz(r.kappa_sim), _fmt_mhz(r.kappa_target),
            _fmt_pct(r.kappa_deviation), flags,
        ]))
    return "\n".join(lines) + "\n"


def render_report_text(rows: list[ReportRow]) -> str:
    header = (f"{'resonator':<12}{'f_sim/GHz':>12}{'f_tgt/GHz':>12}{'df/%':>9}"
              f"{'k_sim/MHz':>12}{'k_tgt/MHz':>12}{'dk/%':>9}  flags")
    out = [header, "-" * len(header)]
    for r in rows:
        flags = " ".join(
            n for n, on in (("FREQ", r.f_flag), ("COUPLING", r.kappa_flag)) if on)
        out.append(
            f"{r.name:<12}{_fmt_ghz(r.f_sim):>12}{_fmt_ghz(r.f_target):>12}"
            f"{_fmt_pct(r.f_deviation):>9}{_fmt_mhz(r.kappa_sim):>12}"
            f"{_fmt_mhz(r.kappa_target):>12}{_fmt_pct(r.kappa_deviation):>9}"
            f"  {flags}")
    return "\n".join(out) + "\n"
