"""Full-order Newton-Raphson time marching and snapshot collection."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .campaign import CampaignResult, SnapshotSet, run_campaign
from .errors import DivergenceError, InvalidInputError, SingularSystemError


@dataclass(frozen=True)
class NewtonSettings:
    max_iterations: int = 25
    rel_tolerance: float = 1e-9
    abs_tolerance: float = 1e-12
    step_length: float = 1.0
    backtracking: bool = False
    max_halvings: int = 8

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be at least 1")
        if self.rel_tolerance <= 0.0 or self.abs_tolerance <= 0.0:
            raise InvalidInputError("tolerances must be positive")
        if not 0.0 < self.step_length <= 1.0:
            raise InvalidInputError("step length must lie in (0, 1]")


@dataclass
class IterationTrace:
    """Per-timestep iteration history.

    ``residual_norms`` holds the convergence norm at every visited state
    (initial state included), so ``iterations == len(residual_norms) - 1``
    corrective solves were taken. Reduced solvers additionally record the
    full residual norm, the search directions and, when hyper-reduced, the
    number of elements touched per pass.
    """

    residual_norms: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    wall_time: float = 0.0
    full_residual_norms: list = field(default_factory=list)
    search_directions: list = field(default_factory=list)
    residual_vectors: list = field(default_factory=list)
    elements_touched: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.step_norms)


def _solve_sparse(jac, rhs):
    try:
        lu = scipy.sparse.linalg.splu(jac.tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"singular full-order Jacobian: {exc}") from exc
    sol = lu.solve(rhs)
    if not np.isfinite(sol).all():
        raise SingularSystemError("singular full-order Jacobian (non-finite solve)")
    return sol


def solve_timestep_fom(problem, u_ref, t, mu, settings: NewtonSettings,
                       keep_residual_history: bool = False):
    """One Newton-Raphson solve of R(u_ref + du, t; mu) = 0.

    Returns ``(u, du, trace)`` with ``u = u_ref + du``. Convergence is
    declared when the residual norm falls below
    ``rel_tolerance * ||R(u_ref)|| + abs_tolerance``. With
    ``keep_residual_history`` the trace retains the residual vectors of the
    non-converged iterates.
    """
    start = time.perf_counter()
    u = np.array(u_ref, dtype=float)
    trace = IterationTrace()
    residual = problem.assemble_residual(u, u_ref, t, mu)
    rnorm = float(np.linalg.norm(residual))
    trace.residual_norms.append(rnorm)
    trace.elements_touched.append(problem.n_elements)
    tol = settings.rel_tolerance * rnorm + settings.abs_tolerance

    converged = rnorm <= tol
    for _ in range(settings.max_iterations):
        if converged:
            break
        if keep_residual_history:
            trace.residual_vectors.append(residual.copy())
        jac = problem.assemble_jacobian(u, u_ref, t, mu)
        step = _solve_sparse(jac, -residual)
        alpha = settings.step_length
        u_next = u + alpha * step
        residual_next = problem.assemble_residual(u_next, u_ref, t, mu)
        rnorm_next = float(np.linalg.norm(residual_next))
        if settings.backtracking:
            halvings = 0
            while rnorm_next > rnorm and halvings < settings.max_halvings:
                alpha *= 0.5
                halvings += 1
                u_next = u + alpha * step
                residual_next = problem.assemble_residual(u_next, u_ref, t, mu)
                rnorm_next = float(np.linalg.norm(residual_next))
        u, residual, rnorm = u_next, residual_next, rnorm_next
        trace.step_norms.append(float(alpha * np.linalg.norm(step)))
        trace.residual_norms.append(rnorm)
        trace.elements_touched.append(problem.n_elements)
        converged = rnorm <= tol
    trace.wall_time = time.perf_counter() - start
    if not converged:
        raise DivergenceError(
            f"Newton did not converge within {settings.max_iterations} iterations "
            f"(t={t}, mu={mu}, residual {rnorm:.3e} > {tol:.3e})",
            trace=trace,
        )
    return u, u - np.asarray(u_ref), trace


def run_fom_campaign(problem, settings: NewtonSettings, parameters=None) -> CampaignResult:
    """Solve every (parameter, timestep) pair and stack the states column-wise.

    Column order is timestep-major within parameter-major; per-column
    provenance records (parameter index, timestep index, iteration count).
    """
    if parameters is None:
        parameters = problem.parameter_space

    def step(u_ref, t, mu):
        try:
            u, _, trace = solve_timestep_fom(problem, u_ref, t, mu, settings)
        except DivergenceError as exc:
            raise DivergenceError(
                f"full-order solve failed at (mu={mu}, t={t}): {exc}", trace=exc.trace
            ) from exc
        except SingularSystemError as exc:
            raise SingularSystemError(
                f"full-order solve failed at (mu={mu}, t={t}): {exc}", column=exc.column
            ) from exc
        trace.full_residual_norms = list(trace.residual_norms)
        return u, trace

    return run_campaign(problem, parameters, step, kind="fom")


def snapshot_matrix(result: CampaignResult | SnapshotSet) -> np.ndarray:
    snapshots = result.snapshots if isinstance(result, CampaignResult) else result
    return snapshots.matrix
