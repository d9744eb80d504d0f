"""Snapshot containers and per-run reports shared by all campaign drivers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArtifactError


@dataclass(frozen=True)
class SnapshotRecord:
    """Provenance of one snapshot column."""

    parameter_index: int
    timestep_index: int
    iterations: int


@dataclass
class SnapshotSet:
    """Column-stacked state snapshots, timestep-major within parameter-major.

    ``parameters`` and ``times`` echo the campaign inputs so that downstream
    stages can re-evaluate residuals along the stored trajectory.
    """

    matrix: np.ndarray  # (N, n_columns)
    provenance: list  # list[SnapshotRecord], one per column
    parameters: list  # list[tuple], campaign parameter vectors
    times: np.ndarray  # campaign time grid

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def column(self, parameter_index: int, timestep_index: int) -> np.ndarray:
        j = parameter_index * len(self.times) + timestep_index
        rec = self.provenance[j]
        assert (rec.parameter_index, rec.timestep_index) == (
            parameter_index,
            timestep_index,
        )
        return self.matrix[:, j]

    def manifest(self) -> dict:
        return {
            "columns": [
                [r.parameter_index, r.timestep_index, r.iterations]
                for r in self.provenance
            ],
            "parameters": [list(p) for p in self.parameters],
            "times": [float(t) for t in self.times],
        }

    @classmethod
    def from_manifest(cls, matrix: np.ndarray, manifest: dict) -> "SnapshotSet":
        records = [
            SnapshotRecord(parameter_index=c[0], timestep_index=c[1], iterations=c[2])
            for c in manifest["columns"]
        ]
        if len(records) != matrix.shape[1]:
            raise ArtifactError("snapshot manifest does not match the matrix shape")
        return cls(
            matrix=matrix,
            provenance=records,
            parameters=[tuple(p) for p in manifest["parameters"]],
            times=np.asarray(manifest["times"], dtype=float),
        )

    def iter_steps(self, problem):
        """Yield (parameter_index, mu, t, u_ref, u) along every trajectory.

        The reference of the first timestep of each parameter is the
        problem's initial state.
        """
        for j, mu in enumerate(self.parameters):
            u_ref = problem.initial_state(mu)
            for i, t in enumerate(self.times):
                u = self.column(j, i)
                yield j, mu, float(t), u_ref, u
                u_ref = u


@dataclass
class TimestepRecord:
    parameter_index: int
    timestep_index: int
    iterations: int
    residual_norm: float  # convergence norm at acceptance
    full_residual_norm: float
    wall_time: float
    elements_per_iteration: list = field(default_factory=list)


@dataclass
class SolverReport:
    """JSON-shaped summary of one campaign run."""

    kind: str
    problem: str
    timesteps: list = field(default_factory=list)
    quadrature_id: str | None = None
    complementary_size: int | None = None

    @property
    def total_wall_time(self) -> float:
        return float(sum(r.wall_time for r in self.timesteps))

    @property
    def total_elements_touched(self) -> int:
        return int(sum(sum(r.elements_per_iteration) for r in self.timesteps))

    @property
    def total_iterations(self) -> int:
        return int(sum(r.iterations for r in self.timesteps))

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "problem": self.problem,
            "quadrature_id": self.quadrature_id,
            "complementary_size": self.complementary_size,
            "timesteps": [
                {
                    "parameter_index": r.parameter_index,
                    "timestep_index": r.timestep_index,
                    "iterations": r.iterations,
                    "residual_norm": r.residual_norm,
                    "full_residual_norm": r.full_residual_norm,
                    "wall_time": r.wall_time,
                    "elements_per_iteration": list(r.elements_per_iteration),
                }
                for r in self.timesteps
            ],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str | Path) -> "SolverReport":
        if isinstance(text, Path):
            text = text.read_text()
        payload = json.loads(text)
        report = cls(
            kind=payload["kind"],
            problem=payload["problem"],
            quadrature_id=payload.get("quadrature_id"),
            complementary_size=payload.get("complementary_size"),
        )
        for r in payload["timesteps"]:
            report.timesteps.append(
                TimestepRecord(
                    parameter_index=r["parameter_index"],
                    timestep_index=r["timestep_index"],
                    iterations=r["iterations"],
                    residual_norm=r["residual_norm"],
                    full_residual_norm=r["full_residual_norm"],
                    wall_time=r["wall_time"],
                    elements_per_iteration=list(r["elements_per_iteration"]),
                )
            )
        return report


@dataclass
class CampaignResult:
    snapshots: SnapshotSet
    report: SolverReport


def run_campaign(problem, parameters, step_fn, kind: str) -> CampaignResult:
    """March ``step_fn`` over every (parameter, timestep) pair.

    ``step_fn(u_ref, t, mu)`` returns ``(u, trace)``; the reference state of
    each step is the converged state of the previous one.
    """
    parameters = [tuple(p) for p in parameters]
    columns = []
    provenance = []
    report = SolverReport(kind=kind, problem=problem.name)
    for j, mu in enumerate(parameters):
        u_ref = problem.initial_state(mu)
        for i, t in enumerate(problem.time_grid):
            u, trace = step_fn(u_ref, float(t), mu)
            columns.append(u)
            provenance.append(
                SnapshotRecord(
                    parameter_index=j, timestep_index=i, iterations=trace.iterations
                )
            )
            report.timesteps.append(
                TimestepRecord(
                    parameter_index=j,
                    timestep_index=i,
                    iterations=trace.iterations,
                    residual_norm=trace.residual_norms[-1],
                    full_residual_norm=trace.full_residual_norms[-1]
                    if trace.full_residual_norms
                    else trace.residual_norms[-1],
                    wall_time=trace.wall_time,
                    elements_per_iteration=list(trace.elements_touched),
                )
            )
            u_ref = u
    matrix = np.column_stack(columns) if columns else np.zeros((problem.n_dofs, 0))
    snapshots = SnapshotSet(
        matrix=matrix,
        provenance=provenance,
        parameters=parameters,
        times=problem.time_grid.copy(),
    )
    return CampaignResult(snapshots=snapshots, report=report)
