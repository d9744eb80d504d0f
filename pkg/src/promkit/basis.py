"""Reduced-basis construction.

The right (trial) basis comes from compressing full-order state snapshots.
The two invariant left (test) bases come from a second training pass that
re-solves the training campaign with the least-squares reduced solver while
harvesting either the converged Jacobian-times-trial-basis products or the
non-converged residual vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .campaign import SnapshotSet
from .errors import InvalidInputError
from .fom import NewtonSettings, solve_timestep_fom
from .linalg import truncated_svd
from .rom import run_rom_campaign

ROLE_RIGHT = "right-phi"
ROLE_LEFT_JACOBIAN = "left-psi-jacobian"
ROLE_LEFT_RESIDUAL = "left-psi-residual"
_ROLES = (ROLE_RIGHT, ROLE_LEFT_JACOBIAN, ROLE_LEFT_RESIDUAL)

_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal basis with its truncation tolerance and role tag."""

    matrix: np.ndarray
    tolerance: float
    role: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise InvalidInputError(f"unknown basis role {self.role!r}")
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[1] == 0:
            raise InvalidInputError("basis must hold at least one column")
        gram = m.T @ m
        if np.abs(gram - np.eye(m.shape[1])).max() > _ORTHO_TOL:
            raise InvalidInputError("basis columns are not orthonormal")

    @property
    def n_modes(self) -> int:
        return int(self.matrix.shape[1])


@dataclass
class TrainingLog:
    """Bookkeeping for one basis-training stage."""

    snapshot_count: int = 0
    retained_rank: int = 0
    spectrum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    columns_per_timestep: list = field(default_factory=list)


def _as_matrix(snapshots) -> np.ndarray:
    if isinstance(snapshots, SnapshotSet):
        return snapshots.matrix
    return np.asarray(snapshots, dtype=float)


def build_right_basis(snapshots, eps_u: float) -> ReducedBasis:
    """Compress state snapshots so the reconstruction error stays below
    ``eps_u`` in the relative Frobenius sense."""
    a = _as_matrix(snapshots)
    if a.size == 0:
        raise InvalidInputError("cannot build a basis from an empty snapshot set")
    svd = truncated_svd(a, eps_u)
    return ReducedBasis(matrix=svd.u, tolerance=eps_u, role=ROLE_RIGHT)


@dataclass
class LeftTrainingData:
    """Snapshots harvested from the second (reduced-solver) training pass."""

    s_jacobian: np.ndarray  # converged J @ phi blocks, (N, n * T * P)
    s_residual: np.ndarray  # non-converged residual vectors, (N, sum(K_i - 1))
    jacobian_log: TrainingLog
    residual_log: TrainingLog


def collect_left_training_data(problem, phi: ReducedBasis, settings: NewtonSettings = None,
                               parameters=None, source: str = "lspg") -> LeftTrainingData:
    """Run the training campaign once and harvest both left-basis snapshot sets.

    ``source`` selects the snapshot generator: the least-squares reduced
    solver (default) or the full-order solver (ablation switch).
    """
    settings = settings or NewtonSettings()
    if parameters is None:
        parameters = problem.parameter_space
    phi_m = phi.matrix
    jac_blocks = []
    res_columns = []
    res_per_step = []

    if source == "lspg":
        def observer(mu, t, u_ref, state, trace):
            jac = problem.assemble_jacobian(state.u_tilde, u_ref, t, mu)
            jac_blocks.append(jac @ phi_m)
            nonconv = trace.residual_vectors
            res_columns.extend(nonconv)
            res_per_step.append(len(nonconv))

        run_rom_campaign(problem, "lspg", phi, settings=settings,
                         parameters=parameters, step_observer=observer)
    elif source == "fom":
        for mu in [tuple(p) for p in parameters]:
            u_ref = problem.initial_state(mu)
            for t in problem.time_grid:
                u, _, trace = solve_timestep_fom(problem, u_ref, float(t), mu, settings,
                                                 keep_residual_history=True)
                jac = problem.assemble_jacobian(u, u_ref, float(t), mu)
                jac_blocks.append(jac @ phi_m)
                res_columns.extend(trace.residual_vectors)
                res_per_step.append(len(trace.residual_vectors))
                u_ref = u
    else:
        raise InvalidInputError(f"unknown training source {source!r}")

    n = problem.n_dofs
    s_j = np.hstack(jac_blocks) if jac_blocks else np.zeros((n, 0))
    s_r = np.column_stack(res_columns) if res_columns else np.zeros((n, 0))
    jac_log = TrainingLog(snapshot_count=s_j.shape[1],
                          columns_per_timestep=[phi.n_modes] * len(jac_blocks))
    res_log = TrainingLog(snapshot_count=s_r.shape[1], columns_per_timestep=res_per_step)
    return LeftTrainingData(s_jacobian=s_j, s_residual=s_r,
                            jacobian_log=jac_log, residual_log=res_log)


def collect_jacobian_snapshots(problem, phi: ReducedBasis, settings: NewtonSettings = None,
                               parameters=None) -> np.ndarray:
    """Converged Jacobian-times-trial-basis blocks, ``n * T * P`` columns."""
    return collect_left_training_data(problem, phi, settings, parameters).s_jacobian


def collect_residual_snapshots(problem, phi: ReducedBasis, settings: NewtonSettings = None,
                               parameters=None) -> np.ndarray:
    """Non-converged residual vectors; a step converging without corrections
    contributes no columns."""
    return collect_left_training_data(problem, phi, settings, parameters).s_residual


def _build_left_basis(snapshots: np.ndarray, eps: float, role: str,
                      min_modes: int | None) -> tuple:
    if snapshots.size == 0:
        raise InvalidInputError("cannot build a left basis from empty training data")
    svd = truncated_svd(snapshots, eps)
    rank = svd.retained_rank
    if min_modes is not None and rank < min_modes:
        # Keep enough modes for a well-posed rectangular projection, capped
        # by the numerical rank of the training data.
        full = truncated_svd(snapshots, 0.0)
        rank = min(min_modes, full.retained_rank)
        svd = full
    basis = ReducedBasis(matrix=svd.u[:, :rank], tolerance=eps, role=role)
    log = TrainingLog(snapshot_count=snapshots.shape[1], retained_rank=rank,
                      spectrum=svd.sigma.copy())
    return basis, log


def build_left_basis_jacobian(s_jacobian: np.ndarray, eps_psi: float,
                              min_modes: int | None = None) -> ReducedBasis:
    basis, _ = _build_left_basis(s_jacobian, eps_psi, ROLE_LEFT_JACOBIAN, min_modes)
    return basis


def build_left_basis_residual(s_residual: np.ndarray, eps_r: float,
                              min_modes: int | None = None) -> ReducedBasis:
    basis, _ = _build_left_basis(s_residual, eps_r, ROLE_LEFT_RESIDUAL, min_modes)
    return basis


def projection_defect(psi_outer: ReducedBasis, inner: np.ndarray) -> float:
    """Frobenius norm of the part of ``inner`` outside ``col(psi_outer)``,
    relative to ``||inner||_F``. Reported, not asserted, for the containment
    relation between the two left bases."""
    m = psi_outer.matrix
    inner = _as_matrix(inner)
    defect = inner - m @ (m.T @ inner)
    denom = np.linalg.norm(inner)
    return float(np.linalg.norm(defect) / denom) if denom > 0.0 else 0.0
