"""Hyper-reduced online solvers assembling only over selected elements.

The Galerkin and fixed-left-basis solvers touch exactly the quadrature
elements. The least-squares solver needs the assembled residual restricted
to each selected element's DOFs, which pulls in every neighbor of a
selected element: it assembles over the complementary mesh (union of the
patches of the selection) and therefore touches strictly more elements
whenever the selection has uncovered neighbors.
"""

from __future__ import annotations

import time

import numpy as np

from .campaign import CampaignResult, run_campaign
from .ecm import EcmQuadrature
from .errors import ConfigError, DivergenceError
from .fom import IterationTrace, NewtonSettings
from .linalg import qr_least_squares
from .mesh import gather_rows, scatter_add
from .rom import RomState, _basis_matrix, _solve_square


def _sorted_quadrature(quadrature: EcmQuadrature):
    order = np.argsort(quadrature.z)
    return quadrature.z[order], quadrature.omega[order]


def _hrom_newton(problem, phi, u_ref, t, mu, settings, project, solve, elements_per_pass):
    start = time.perf_counter()
    q_hat = np.zeros(phi.shape[1])
    u = np.array(u_ref, dtype=float)
    trace = IterationTrace()

    g, ctx = project(u)
    gnorm = float(np.linalg.norm(g))
    trace.residual_norms.append(gnorm)
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
        g, ctx = project(u)
        gnorm = float(np.linalg.norm(g))
        trace.residual_norms.append(gnorm)
        trace.step_norms.append(float(settings.step_length * np.linalg.norm(p)))
        trace.elements_touched.append(elements_per_pass)
        converged = gnorm <= tol
    trace.wall_time = time.perf_counter() - start
    if not converged:
        raise DivergenceError(
            f"hyper-reduced solve did not converge within "
            f"{settings.max_iterations} iterations (t={t}, mu={mu})",
            trace=trace,
        )
    return RomState(q_hat=q_hat, u_tilde=u), trace


def solve_timestep_hrom_galerkin(problem, phi, quadrature: EcmQuadrature,
                                 u_ref, t, mu, settings: NewtonSettings):
    """Weighted Galerkin projection over the quadrature elements only."""
    return solve_timestep_hrom_pg(problem, phi, phi, quadrature, u_ref, t, mu, settings)


def solve_timestep_hrom_pg(problem, phi, psi, quadrature: EcmQuadrature,
                           u_ref, t, mu, settings: NewtonSettings):
    """Weighted fixed-left-basis projection over the quadrature elements only.

    Per iteration the reduced system is the weighted sum of the elementwise
    test-Jacobian-trial products; the rectangular case goes through QR and,
    as in the unreduced solver, converges on the stationarity vector of its
    least-squares objective.
    """
    phi = _basis_matrix(phi)
    psi = _basis_matrix(psi)
    if psi.shape[1] < phi.shape[1]:
        raise ConfigError("left basis must have at least as many columns as the trial basis")
    z, omega = _sorted_quadrature(quadrature)
    psi_loc = gather_rows(problem.assembly, z, psi)  # (|z|, nloc, m)
    phi_loc = gather_rows(problem.assembly, z, phi)
    square = psi.shape[1] == phi.shape[1]

    def project(u):
        res = problem.elemental_residuals(z, u, u_ref, t, mu)
        g = np.einsum("e,eam,ea->m", omega, psi_loc, res)
        jac = problem.elemental_jacobians(z, u, u_ref, t, mu)
        w = np.einsum("e,eam,eab,ebn->mn", omega, psi_loc, jac, phi_loc)
        conv = g if square else w.T @ g
        return conv, (w, g)

    def solve(ctx, conv):
        w, g = ctx
        if square:
            return _solve_square(w, -g)
        return qr_least_squares(w, -g)

    return _hrom_newton(problem, phi, u_ref, t, mu, settings, project, solve,
                        elements_per_pass=int(z.size))


def solve_timestep_hrom_lspg(problem, phi, quadrature: EcmQuadrature, complementary,
                             u_ref, t, mu, settings: NewtonSettings):
    """Weighted Gauss-Newton over the quadrature, assembled patch-wise.

    For each selected element the integrand is the trial-basis projection of
    the elementwise Jacobian transpose applied to the assembled residual
    restricted to that element's DOFs. Assembling those restrictions (and
    the matching rows of the assembled Jacobian-trial product) requires
    evaluating every element of the complementary mesh.
    """
    phi = _basis_matrix(phi)
    z, omega = _sorted_quadrature(quadrature)
    comp = np.sort(np.asarray(complementary, dtype=int))

    patches = problem.patches()
    required = set()
    for e in z:
        required.update(patches[e].patch)
    missing = required.difference(comp.tolist())
    if missing:
        raise ConfigError(
            f"complementary mesh is missing patch elements {sorted(missing)[:8]}"
        )

    phi_loc = gather_rows(problem.assembly, z, phi)  # (|z|, nloc, n)
    pos_in_comp = np.searchsorted(comp, z)
    dof_z = problem.assembly.element_dofs[z]
    dof_mask = dof_z >= 0
    dof_safe = np.maximum(dof_z, 0)
    n = phi.shape[1]

    def weighted_sums(u):
        res_c = problem.elemental_residuals(comp, u, u_ref, t, mu)
        jac_c = problem.elemental_jacobians(comp, u, u_ref, t, mu)
        assembled = scatter_add(problem.assembly, comp, res_c)
        # Rows of the assembled Jacobian-trial product at covered DOFs.
        jphi_rows = np.zeros((problem.n_dofs, n))
        contrib = np.einsum("eab,ebn->ean", jac_c,
                            gather_rows(problem.assembly, comp, phi))
        idx = problem.assembly.element_dofs[comp].ravel()
        keep = idx >= 0
        np.add.at(jphi_rows, idx[keep], contrib.reshape(-1, n)[keep])
        r_le = np.where(dof_mask, assembled[dof_safe], 0.0)  # (|z|, nloc)
        g_le = np.where(dof_mask[..., None], jphi_rows[dof_safe], 0.0)
        jac_z = jac_c[pos_in_comp]
        barred = np.einsum("eab,ea->eb", jac_z, r_le)
        barred_w = np.einsum("eab,ean->ebn", jac_z, g_le)
        g = np.einsum("e,ean,ea->n", omega, phi_loc, barred)
        w = np.einsum("e,eam,ean->mn", omega, phi_loc, barred_w)
        return g, w

    def project(u):
        g, w = weighted_sums(u)
        return g, (w,)

    def solve(ctx, g):
        (w,) = ctx
        return _solve_square(w, -g)

    return _hrom_newton(problem, phi, u_ref, t, mu, settings, project, solve,
                        elements_per_pass=int(comp.size))


HROM_KINDS = ("galerkin", "lspg", "pg")


def make_hrom_step(problem, kind: str, phi, quadrature: EcmQuadrature, psi=None,
                   complementary=None, settings: NewtonSettings = None):
    settings = settings or NewtonSettings()
    if kind == "galerkin":
        return lambda u_ref, t, mu: solve_timestep_hrom_galerkin(
            problem, phi, quadrature, u_ref, t, mu, settings)
    if kind == "pg":
        if psi is None:
            raise ConfigError("hyper-reduced Petrov-Galerkin runs require a left basis")
        return lambda u_ref, t, mu: solve_timestep_hrom_pg(
            problem, phi, psi, quadrature, u_ref, t, mu, settings)
    if kind == "lspg":
        if complementary is None:
            raise ConfigError("hyper-reduced least-squares runs require a complementary mesh")
        return lambda u_ref, t, mu: solve_timestep_hrom_lspg(
            problem, phi, quadrature, complementary, u_ref, t, mu, settings)
    raise ConfigError(f"unknown hyper-reduced solver kind {kind!r}; valid: {HROM_KINDS}")


def run_hrom_campaign(problem, kind: str, phi, quadrature: EcmQuadrature, psi=None,
                      complementary=None, settings: NewtonSettings = None,
                      parameters=None, quadrature_id: str | None = None) -> CampaignResult:
    if parameters is None:
        parameters = problem.parameter_space
    inner = make_hrom_step(problem, kind, phi, quadrature, psi=psi,
                           complementary=complementary, settings=settings)

    def step(u_ref, t, mu):
        state, trace = inner(u_ref, t, mu)
        return state.u_tilde, trace

    result = run_campaign(problem, parameters, step, kind=f"hrom-{kind}")
    result.report.quadrature_id = quadrature_id
    if complementary is not None:
        result.report.complementary_size = int(np.asarray(complementary).size)
    return result
