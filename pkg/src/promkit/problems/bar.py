"""Geometrically nonlinear 1-D bar with a parametrized axial end load.

Total Lagrangian formulation with Green strain E = u' + (u')^2 / 2 and
second Piola stress S = E_young * E, derived from the stored-energy
functional, so the tangent is symmetric at every state. The end load
P = c * sqrt(alpha) is ramped over pseudo-time load steps; the reference
state of each step is the converged solution of the previous one.

The default modulus is graded along the axis. A homogeneous end-loaded bar
carries uniform strain, which collapses the whole response family onto a
single mode; grading makes the strain profile deform nonlinearly with the
load level so the snapshot spectrum behaves like a real structure's.
"""

from __future__ import annotations

import numpy as np

from ..mesh import interval_mesh
from .base import Problem

_DEFAULT_ALPHAS = ((0.1,), (0.5,), (1.0,), (1.5,), (2.0,))


def load_scaling(alpha: float, c: float) -> float:
    """End-load magnitude P = c * sqrt(alpha)."""
    return c * float(np.sqrt(alpha))


class SaintVenantBar(Problem):
    name = "bar"
    state_label = "axial displacement"
    spd_flag = True

    def __init__(
        self,
        n_elements: int = 64,
        length: float = 1.0,
        youngs_modulus: float = 1.0,
        modulus_gradient: float = 1.0,
        area: float = 1.0,
        load_magnitude: float = 0.25,
        n_load_steps: int = 10,
        parameter_space=_DEFAULT_ALPHAS,
    ):
        mesh = interval_mesh(n_elements, length=length, fix_left=True)
        # Load fractions play the role of time; the full load acts at t = 1.
        time_grid = np.linspace(1.0 / n_load_steps, 1.0, n_load_steps)
        super().__init__(mesh, parameter_space, time_grid)
        self.youngs_modulus = float(youngs_modulus)
        self.modulus_gradient = float(modulus_gradient)
        self.area = float(area)
        self.load_magnitude = float(load_magnitude)
        self.h = length / n_elements
        self._last_element = n_elements - 1
        mid = 0.5 * (
            self.mesh.node_coords[self.mesh.elements[:, 0], 0]
            + self.mesh.node_coords[self.mesh.elements[:, 1], 0]
        )
        # E(x) = E0 * (1 + gradient * x / L), evaluated at element midpoints.
        self.modulus = self.youngs_modulus * (1.0 + self.modulus_gradient * mid / length)

    def _strain_state(self, u_loc):
        du = (u_loc[:, 1] - u_loc[:, 0]) / self.h
        green = du + 0.5 * du**2
        return du, green

    def local_residuals(self, elems, u_loc, u_ref_loc, t, mu):
        du, green = self._strain_state(u_loc)
        ea = self.modulus[elems] * self.area
        axial = ea * green * (1.0 + du)  # first Piola force, constant per element
        res = np.empty_like(u_loc)
        res[:, 0] = -axial
        res[:, 1] = axial
        # The end traction enters through the last element's second node.
        end = np.asarray(elems) == self._last_element
        res[end, 1] -= float(t) * load_scaling(mu[0], self.load_magnitude)
        return res

    def local_jacobians(self, elems, u_loc, u_ref_loc, t, mu):
        du, green = self._strain_state(u_loc)
        ea_h = self.modulus[elems] * self.area / self.h
        stiff = ea_h * ((1.0 + du) ** 2 + green)
        jac = np.empty((u_loc.shape[0], 2, 2))
        jac[:, 0, 0] = stiff
        jac[:, 1, 1] = stiff
        jac[:, 0, 1] = -stiff
        jac[:, 1, 0] = -stiff
        return jac
