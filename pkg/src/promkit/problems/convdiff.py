"""Transient rotating-pulse convection-diffusion testbed on the unit square.

PDE: du/dt + a . grad(u) - div(eps * grad(u)) = s with velocity a = (-y, x),
homogeneous Dirichlet walls and zero initial condition. Discretized with
linear triangles, backward Euler in time and SUPG streamline stabilization,
which makes the tangent matrix nonsymmetric (the non-SPD branch of the
solver suite). The problem is linear in u, so Newton converges in a single
corrective step.

The parameter is an effective diffusivity obtained by normalizing material
triples (density, conductivity, specific heat); see
:func:`effective_diffusivity`.
"""

from __future__ import annotations

import numpy as np

from ..mesh import structured_triangle_mesh
from .base import Problem

#: density [kg/m^3], conductivity [W/(m K)], specific heat [J/(kg K)]
MATERIALS = {
    "ethylene-glycol": (1110.0, 0.253, 2412.0),
    "sae30-oil": (875.0, 0.15, 2092.0),
    "glycerol": (1260.0, 0.286, 2430.0),
}

#: Diffusivity rescaling that brings the material constants to coarse-mesh
#: Peclet numbers of order one.
DIFFUSIVITY_SCALE = 1.0e5


def effective_diffusivity(
    density: float, conductivity: float, specific_heat: float, scale: float = DIFFUSIVITY_SCALE
) -> float:
    """Collapse a material triple into the single diffusivity parameter."""
    return conductivity / (density * specific_heat) * scale


def material_diffusivity(name: str, scale: float = DIFFUSIVITY_SCALE) -> float:
    return effective_diffusivity(*MATERIALS[name], scale=scale)


def source_term_pulse(x, y):
    """Ring-shaped source: 10 * exp(-50 (x^2 + y^2 - 1/2)^2) inside the unit circle."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x**2 + y**2
    s = 10.0 * np.exp(-50.0 * (r2 - 0.5) ** 2)
    return np.where(np.sqrt(r2) < 1.0, s, 0.0)


def _tau_supg(speed, h, eps):
    """Streamline stabilization time scale from the element Peclet number."""
    peclet = speed * h / (2.0 * eps)
    small = peclet < 1.0e-4
    with np.errstate(over="ignore"):
        xi = np.where(
            small,
            peclet / 3.0,
            1.0 / np.tanh(np.maximum(peclet, 1.0e-30)) - 1.0 / np.maximum(peclet, 1.0e-30),
        )
    tau = np.empty_like(speed)
    moving = speed > 1.0e-12
    tau[moving] = h[moving] * xi[moving] / (2.0 * speed[moving])
    tau[~moving] = h[~moving] ** 2 / (12.0 * eps)
    return tau


class RotatingPulseConvectionDiffusion(Problem):
    name = "convdiff"
    state_label = "temperature"
    spd_flag = False

    def __init__(
        self,
        nx: int = 24,
        ny: int | None = None,
        dt: float = 0.1,
        t_final: float = 5.0,
        parameter_space=None,
        supg: bool = True,
        source=source_term_pulse,
    ):
        ny = nx if ny is None else ny
        if parameter_space is None:
            parameter_space = [
                (material_diffusivity("ethylene-glycol"),),
                (material_diffusivity("sae30-oil"),),
            ]
        mesh = structured_triangle_mesh(nx, ny)
        n_steps = int(round(t_final / dt))
        time_grid = dt * np.arange(1, n_steps + 1)
        super().__init__(mesh, parameter_space, time_grid)
        self.dt = float(dt)
        self.supg = bool(supg)
        self.source = source
        self._precompute_geometry()

    def _precompute_geometry(self):
        p = self.mesh.node_coords[self.mesh.elements]  # (L, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        twice_area = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
        self.area = 0.5 * twice_area
        # Gradients of the barycentric shape functions (constant per element).
        b = np.empty((p.shape[0], 3, 2))
        b[:, 0, 0] = p[:, 1, 1] - p[:, 2, 1]
        b[:, 0, 1] = p[:, 2, 0] - p[:, 1, 0]
        b[:, 1, 0] = p[:, 2, 1] - p[:, 0, 1]
        b[:, 1, 1] = p[:, 0, 0] - p[:, 2, 0]
        b[:, 2, 0] = p[:, 0, 1] - p[:, 1, 1]
        b[:, 2, 1] = p[:, 1, 0] - p[:, 0, 0]
        self.grad_n = b / twice_area[:, None, None]
        # Degree-2 quadrature: edge midpoints, weight area/3 each.
        self.qshape = np.array(
            [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
        )  # (q, i)
        qpts = np.einsum("qi,eid->eqd", self.qshape, p)
        self.velocity_q = np.stack([-qpts[..., 1], qpts[..., 0]], axis=-1)  # (L, q, 2)
        self.source_q = (
            np.asarray(self.source(qpts[..., 0], qpts[..., 1]), dtype=float)
            if self.source is not None
            else np.zeros(qpts.shape[:2])
        )
        centroid = p.mean(axis=1)
        self.velocity_c = np.stack([-centroid[:, 1], centroid[:, 0]], axis=-1)
        self.speed_c = np.linalg.norm(self.velocity_c, axis=1)
        self.h_elem = np.sqrt(2.0 * self.area)

    def _element_data(self, elems, u_loc, u_ref_loc, mu):
        eps = float(mu[0])
        grad_n = self.grad_n[elems]
        w = self.area[elems] / 3.0  # quadrature weight per point, (E,)
        u_q = u_loc @ self.qshape.T  # (E, q)
        udot_q = (u_q - u_ref_loc @ self.qshape.T) / self.dt
        grad_u = np.einsum("eia,ei->ea", grad_n, u_loc)
        conv_q = np.einsum("eqa,ea->eq", self.velocity_q[elems], grad_u)
        strong_q = udot_q + conv_q - self.source_q[elems]
        adv_n = np.einsum("eqa,eia->eqi", self.velocity_q[elems], grad_n)
        if self.supg:
            tau = _tau_supg(self.speed_c[elems], self.h_elem[elems], eps)
        else:
            tau = np.zeros(elems.shape[0])
        return eps, grad_n, w, grad_u, strong_q, adv_n, tau

    def local_residuals(self, elems, u_loc, u_ref_loc, t, mu):
        eps, grad_n, w, grad_u, strong_q, adv_n, tau = self._element_data(
            elems, u_loc, u_ref_loc, mu
        )
        galerkin = np.einsum("e,eq,qi->ei", w, strong_q, self.qshape)
        diffusion = eps * self.area[elems][:, None] * np.einsum(
            "eia,ea->ei", grad_n, grad_u
        )
        stab = np.einsum("e,eq,eqi->ei", w * tau, strong_q, adv_n)
        return galerkin + diffusion + stab

    def local_jacobians(self, elems, u_loc, u_ref_loc, t, mu):
        eps, grad_n, w, _, _, adv_n, tau = self._element_data(
            elems, u_loc, u_ref_loc, mu
        )
        # d(strong_q)/du_j = N_qj / dt + a . grad(N_j)
        dstrong = self.qshape[None, :, :] / self.dt + adv_n  # (E, q, j)
        galerkin = np.einsum("e,qi,eqj->eij", w, self.qshape, dstrong)
        diffusion = eps * self.area[elems][:, None, None] * np.einsum(
            "eia,eja->eij", grad_n, grad_n
        )
        stab = np.einsum("e,eqi,eqj->eij", w * tau, adv_n, dstrong)
        return galerkin + diffusion + stab
