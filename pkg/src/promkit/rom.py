"""Online reduced solvers: Galerkin, least-squares (Gauss-Newton) and fixed
left-basis Petrov-Galerkin projections sharing one Newton driver shape.

All three march the reduced coordinates of the state increment: the trial
state is always ``u_ref + phi @ q_hat``. They differ in the test space the
residual is projected onto and therefore in the reduced system solved per
iteration:

- Galerkin tests with the trial basis itself (square ``n x n`` system),
- the least-squares solver tests with the iteration-dependent ``J @ phi``
  (normal equations of the Gauss-Newton step),
- the Petrov-Galerkin solver tests with a fixed rectangular basis ``psi``
  (``m x n`` system, solved by QR when ``m != n``).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .campaign import CampaignResult, run_campaign
from .errors import ConfigError, DivergenceError, SingularSystemError
from .fom import IterationTrace, NewtonSettings
from .linalg import qr_least_squares


@dataclass
class RomState:
    """Reduced coordinates of the accumulated increment and the lifted state."""

    q_hat: np.ndarray
    u_tilde: np.ndarray


def _basis_matrix(basis) -> np.ndarray:
    return basis.matrix if hasattr(basis, "matrix") else np.asarray(basis, dtype=float)


def _solve_square(w, rhs):
    try:
        return scipy.linalg.solve(w, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"singular reduced system: {exc}") from exc


def _reduced_newton(problem, phi, u_ref, t, mu, settings, project, solve,
                    elements_per_pass=None):
    """Shared driver: ``project`` maps a state to (g, context); ``solve`` maps
    (context, g) to the search direction. Convergence is on ``||g||`` relative
    to the first pass with the absolute floor from ``settings``."""
    start = time.perf_counter()
    n = phi.shape[1]
    q_hat = np.zeros(n)
    u = np.array(u_ref, dtype=float)
    trace = IterationTrace()

    g, ctx, full_norm = project(u)
    gnorm = float(np.linalg.norm(g))
    trace.residual_norms.append(gnorm)
    trace.full_residual_norms.append(full_norm)
    if elements_per_pass is not None:
        trace.elements_touched.append(elements_per_pass)
    tol = settings.rel_tolerance * gnorm + settings.abs_tolerance

    converged = gnorm <= tol
    for _ in range(settings.max_iterations):
        if converged:
            break
        p = solve(ctx, g)
        trace.search_directions.append(p.copy())
        q_hat = q_hat + settings.step_length * p
        u = u_ref + phi @ q_hat
        g, ctx, full_norm = project(u)
        gnorm = float(np.linalg.norm(g))
        trace.residual_norms.append(gnorm)
        trace.full_residual_norms.append(full_norm)
        trace.step_norms.append(float(settings.step_length * np.linalg.norm(p)))
        if elements_per_pass is not None:
            trace.elements_touched.append(elements_per_pass)
        converged = gnorm <= tol
    trace.wall_time = time.perf_counter() - start
    if not converged:
        raise DivergenceError(
            f"reduced solve did not converge within {settings.max_iterations} "
            f"iterations (t={t}, mu={mu})",
            trace=trace,
        )
    return RomState(q_hat=q_hat, u_tilde=u), trace


def solve_timestep_galerkin(problem, phi, u_ref, t, mu, settings: NewtonSettings,
                            keep_residual_history: bool = False):
    """Galerkin projection: solve ``phi^T J phi p = -phi^T R`` per iteration."""
    phi = _basis_matrix(phi)
    trace_store = []

    def project(u):
        residual = problem.assemble_residual(u, u_ref, t, mu)
        if keep_residual_history:
            trace_store.append(residual.copy())
        return phi.T @ residual, (u, residual), float(np.linalg.norm(residual))

    def solve(ctx, g):
        u, _ = ctx
        jac = problem.assemble_jacobian(u, u_ref, t, mu)
        w = phi.T @ (jac @ phi)
        return _solve_square(w, -g)

    state, trace = _reduced_newton(
        problem, phi, u_ref, t, mu, settings, project, solve,
        elements_per_pass=problem.n_elements,
    )
    _attach_nonconverged(trace, trace_store)
    return state, trace


def solve_timestep_lspg(problem, phi, u_ref, t, mu, settings: NewtonSettings,
                        keep_residual_history: bool = False, use_qr: bool = False):
    """Least-squares projection: Gauss-Newton on ``min || J phi p + R ||_2``.

    The normal-equations form ``(J phi)^T (J phi) p = -(J phi)^T R`` is the
    default; ``use_qr`` solves the same minimization by QR factorization of
    the tall ``J phi`` for conditioning cross-checks. Convergence is on the
    stationarity vector ``(J phi)^T R``.
    """
    phi = _basis_matrix(phi)
    trace_store = []

    def project(u):
        residual = problem.assemble_residual(u, u_ref, t, mu)
        jac = problem.assemble_jacobian(u, u_ref, t, mu)
        jphi = jac @ phi
        if keep_residual_history:
            trace_store.append(residual.copy())
        return jphi.T @ residual, (jphi, residual), float(np.linalg.norm(residual))

    def solve(ctx, g):
        jphi, residual = ctx
        if use_qr:
            return qr_least_squares(jphi, -residual)
        return _solve_square(jphi.T @ jphi, -g)

    state, trace = _reduced_newton(
        problem, phi, u_ref, t, mu, settings, project, solve,
        elements_per_pass=problem.n_elements,
    )
    _attach_nonconverged(trace, trace_store)
    return state, trace


def solve_timestep_pg(problem, phi, psi, u_ref, t, mu, settings: NewtonSettings,
                      keep_residual_history: bool = False):
    """Fixed left-basis Petrov-Galerkin projection.

    Requires ``m = cols(psi) >= n = cols(phi)``. The square case solves
    ``psi^T J phi p = -psi^T R`` directly and converges on ``psi^T R``.
    For ``m != n`` each iteration minimizes
    ``|| psi^T J phi p + psi^T R ||_2`` via QR; the least-squares minimum of
    that over-determined system is nonzero in general, so convergence is
    declared on its stationarity vector ``(psi^T J phi)^T psi^T R``.
    """
    phi = _basis_matrix(phi)
    psi = _basis_matrix(psi)
    if psi.shape[1] < phi.shape[1]:
        raise ConfigError(
            f"left basis has {psi.shape[1]} columns but the trial basis has "
            f"{phi.shape[1]}; the reduced system would be under-determined"
        )
    square = psi.shape[1] == phi.shape[1]
    trace_store = []

    def project(u):
        residual = problem.assemble_residual(u, u_ref, t, mu)
        if keep_residual_history:
            trace_store.append(residual.copy())
        g = psi.T @ residual
        jac = problem.assemble_jacobian(u, u_ref, t, mu)
        w = psi.T @ (jac @ phi)
        conv = g if square else w.T @ g
        return conv, (w, g), float(np.linalg.norm(residual))

    def solve(ctx, conv):
        w, g = ctx
        if square:
            return _solve_square(w, -g)
        return qr_least_squares(w, -g)

    state, trace = _reduced_newton(
        problem, phi, u_ref, t, mu, settings, project, solve,
        elements_per_pass=problem.n_elements,
    )
    _attach_nonconverged(trace, trace_store)
    return state, trace


def _attach_nonconverged(trace: IterationTrace, residual_history: list):
    """Keep the residual vectors of states that failed the convergence check."""
    if residual_history:
        trace.residual_vectors = residual_history[: trace.iterations]


ROM_KINDS = ("galerkin", "lspg", "pg")


def make_rom_step(problem, kind: str, phi, psi=None, settings: NewtonSettings = None,
                  keep_residual_history: bool = False):
    settings = settings or NewtonSettings()
    if kind == "galerkin":
        return lambda u_ref, t, mu: solve_timestep_galerkin(
            problem, phi, u_ref, t, mu, settings,
            keep_residual_history=keep_residual_history)
    if kind == "lspg":
        return lambda u_ref, t, mu: solve_timestep_lspg(
            problem, phi, u_ref, t, mu, settings,
            keep_residual_history=keep_residual_history)
    if kind == "pg":
        if psi is None:
            raise ConfigError("Petrov-Galerkin runs require a left basis")
        return lambda u_ref, t, mu: solve_timestep_pg(
            problem, phi, psi, u_ref, t, mu, settings,
            keep_residual_history=keep_residual_history)
    raise ConfigError(f"unknown reduced solver kind {kind!r}; valid: {ROM_KINDS}")


def run_rom_campaign(problem, kind: str, phi, psi=None, settings: NewtonSettings = None,
                     parameters=None, step_observer=None) -> CampaignResult:
    """March a reduced solver over every (parameter, timestep) pair.

    ``step_observer(mu, t, u_ref, state, trace)`` is invoked after each
    converged timestep; basis-training passes use it to harvest snapshots.
    """
    if parameters is None:
        parameters = problem.parameter_space
    inner = make_rom_step(problem, kind, phi, psi=psi, settings=settings,
                          keep_residual_history=step_observer is not None)

    def step(u_ref, t, mu):
        state, trace = inner(u_ref, t, mu)
        if step_observer is not None:
            step_observer(mu, t, u_ref, state, trace)
        return state.u_tilde, trace

    return run_campaign(problem, parameters, step, kind=kind)
