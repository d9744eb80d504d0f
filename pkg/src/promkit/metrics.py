"""Error metrics, speedup measurement and comparison tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .campaign import SnapshotSet, SolverReport
from .errors import InvalidInputError, UndefinedMetricError


def _as_matrix(s) -> np.ndarray:
    if isinstance(s, SnapshotSet):
        return s.matrix
    return np.asarray(s, dtype=float)


def relative_error_snapshot(u_approx, u_ref_sol) -> float:
    """Canonical per-snapshot error: squared 2-norm of the difference over
    the squared 2-norm of the reference."""
    u_approx = np.asarray(u_approx, dtype=float)
    u_ref_sol = np.asarray(u_ref_sol, dtype=float)
    if u_approx.shape != u_ref_sol.shape:
        raise InvalidInputError("snapshot vectors must have equal length")
    denom = float(np.dot(u_ref_sol, u_ref_sol))
    if denom == 0.0:
        raise UndefinedMetricError("reference snapshot has zero norm")
    diff = u_approx - u_ref_sol
    return float(np.dot(diff, diff) / denom)


def relative_l2_error(u_approx, u_ref_sol) -> float:
    """Unsquared variant of :func:`relative_error_snapshot`."""
    return float(np.sqrt(relative_error_snapshot(u_approx, u_ref_sol)))


def overall_error(s_approx, s_ref) -> float:
    """Relative Frobenius error between two matching snapshot sets."""
    a = _as_matrix(s_approx)
    r = _as_matrix(s_ref)
    if a.shape != r.shape:
        raise InvalidInputError("snapshot sets must have matching shapes")
    denom = float(np.linalg.norm(r))
    if denom == 0.0:
        raise UndefinedMetricError("reference snapshot set has zero norm")
    return float(np.linalg.norm(a - r) / denom)


@dataclass
class SpeedupResult:
    wall_time_ratio: float
    element_work_ratio: float


def measure_speedup(report_a: SolverReport, report_b: SolverReport) -> SpeedupResult:
    """Speed of ``report_b`` relative to baseline ``report_a``.

    The wall-clock ratio is informational only; the elements-touched ratio is
    deterministic and is the one asserted in CI.
    """
    wall_a, wall_b = report_a.total_wall_time, report_b.total_wall_time
    work_a, work_b = report_a.total_elements_touched, report_b.total_elements_touched
    wall = wall_a / wall_b if wall_b > 0.0 else float("inf")
    work = work_a / work_b if work_b > 0 else float("inf")
    return SpeedupResult(wall_time_ratio=float(wall), element_work_ratio=float(work))


@dataclass
class ComparisonReport:
    """Pairwise overall errors for one strategy, plus per-snapshot detail."""

    strategy: str
    variable: str
    fom_vs_rom: float
    rom_vs_hrom: float
    fom_vs_hrom: float
    per_snapshot_fom_vs_rom: list = field(default_factory=list)
    wall_time_ratio: float | None = None
    element_work_ratio: float | None = None


def compare_snapshot_sets(strategy: str, variable: str, fom: SnapshotSet,
                          rom: SnapshotSet, hrom: SnapshotSet | None = None) -> ComparisonReport:
    fom_m, rom_m = _as_matrix(fom), _as_matrix(rom)
    per_snapshot = []
    for j in range(fom_m.shape[1]):
        per_snapshot.append(relative_error_snapshot(rom_m[:, j], fom_m[:, j]))
    if hrom is not None:
        hrom_m = _as_matrix(hrom)
        rom_vs_hrom = overall_error(hrom_m, rom_m)
        fom_vs_hrom = overall_error(hrom_m, fom_m)
    else:
        rom_vs_hrom = float("nan")
        fom_vs_hrom = float("nan")
    return ComparisonReport(
        strategy=strategy,
        variable=variable,
        fom_vs_rom=overall_error(rom_m, fom_m),
        rom_vs_hrom=rom_vs_hrom,
        fom_vs_hrom=fom_vs_hrom,
        per_snapshot_fom_vs_rom=per_snapshot,
    )


_TABLE_COLUMNS = ("strategy", "variable", "fom_vs_rom", "rom_vs_hrom", "fom_vs_hrom")


def render_comparison_tables(reports) -> str:
    """CSV with one row per (strategy, variable) and the three pairwise
    overall errors. Floats use shortest round-trip formatting, lines end
    with a bare line feed."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_TABLE_COLUMNS)
    for r in reports:
        writer.writerow([r.strategy, r.variable, repr(float(r.fom_vs_rom)),
                         repr(float(r.rom_vs_hrom)), repr(float(r.fom_vs_hrom))])
    return out.getvalue()


def parse_comparison_tables(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != _TABLE_COLUMNS:
        raise InvalidInputError(f"unexpected table header {header}")
    reports = []
    for row in reader:
        reports.append(
            ComparisonReport(
                strategy=row[0],
                variable=row[1],
                fom_vs_rom=float(row[2]),
                rom_vs_hrom=float(row[3]),
                fom_vs_hrom=float(row[4]),
            )
        )
    return reports
