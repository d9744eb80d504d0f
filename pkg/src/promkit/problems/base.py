"""Problem abstraction: elemental residuals/Jacobians plus global assembly.

A concrete problem supplies vectorized local evaluations over a set of
elements; gathering, scattering and sparse assembly are shared here. The
global system is posed on free DOFs only (see :mod:`promkit.mesh`).
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
import scipy.sparse

from ..errors import InvalidInputError
from ..mesh import (
    AssemblyMap,
    Mesh,
    build_assembly_map,
    element_patches,
    gather_rows,
    scatter_add,
)


class Problem(ABC):
    """A parametric transient/pseudo-time nonlinear finite-element problem."""

    name: str = "problem"
    state_label: str = "state"
    spd_flag: bool = False

    def __init__(self, mesh: Mesh, parameter_space, time_grid):
        self.mesh = mesh
        self.assembly: AssemblyMap = build_assembly_map(mesh)
        self.parameter_space = [tuple(float(x) for x in mu) for mu in parameter_space]
        self.time_grid = np.asarray(time_grid, dtype=float)
        if self.time_grid.ndim != 1 or np.any(np.diff(self.time_grid) <= 0.0):
            raise InvalidInputError("time grid must be strictly increasing")
        lengths = {len(mu) for mu in self.parameter_space}
        if len(lengths) > 1:
            raise InvalidInputError("parameter vectors must share one length")
        self._patches = None

    # -- local evaluations (implemented by concrete problems) ---------------

    @abstractmethod
    def local_residuals(self, elems, u_loc, u_ref_loc, t, mu) -> np.ndarray:
        """Residual contributions, shape (n_elems, nloc), from local states."""

    @abstractmethod
    def local_jacobians(self, elems, u_loc, u_ref_loc, t, mu) -> np.ndarray:
        """Residual derivatives w.r.t. local state, shape (n_elems, nloc, nloc)."""

    # -- shared machinery ----------------------------------------------------

    @property
    def n_dofs(self) -> int:
        return self.assembly.n_free

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def nloc(self) -> int:
        return self.mesh.elements.shape[1]

    def initial_state(self, mu) -> np.ndarray:
        return np.zeros(self.n_dofs)

    def patches(self):
        if self._patches is None:
            self._patches = element_patches(self.mesh)
        return self._patches

    def _check_states(self, u, u_ref):
        if not (np.isfinite(u).all() and np.isfinite(u_ref).all()):
            raise InvalidInputError("state vectors contain non-finite entries")

    def elemental_residuals(self, elems, u, u_ref, t, mu) -> np.ndarray:
        self._check_states(u, u_ref)
        elems = np.asarray(elems, dtype=int)
        u_loc = gather_rows(self.assembly, elems, u)
        ref_loc = gather_rows(self.assembly, elems, u_ref)
        return self.local_residuals(elems, u_loc, ref_loc, t, mu)

    def elemental_residual(self, e: int, u, u_ref, t, mu) -> np.ndarray:
        return self.elemental_residuals(np.array([e]), u, u_ref, t, mu)[0]

    def elemental_jacobians(self, elems, u, u_ref, t, mu) -> np.ndarray:
        self._check_states(u, u_ref)
        elems = np.asarray(elems, dtype=int)
        u_loc = gather_rows(self.assembly, elems, u)
        ref_loc = gather_rows(self.assembly, elems, u_ref)
        return self.local_jacobians(elems, u_loc, ref_loc, t, mu)

    def elemental_jacobian(self, e: int, u, u_ref, t, mu) -> np.ndarray:
        return self.elemental_jacobians(np.array([e]), u, u_ref, t, mu)[0]

    def assemble_residual(self, u, u_ref, t, mu, elems=None) -> np.ndarray:
        """Scatter-sum elemental residuals over ``elems`` (default: all, ascending).

        Restricting ``elems`` to a patch reproduces the full assembly exactly
        on the DOFs interior to the patch; contributions are always summed in
        ascending element order.
        """
        if elems is None:
            elems = np.arange(self.n_elements)
        else:
            elems = np.sort(np.asarray(elems, dtype=int))
        local = self.elemental_residuals(elems, u, u_ref, t, mu)
        return scatter_add(self.assembly, elems, local)

    def assemble_jacobian(self, u, u_ref, t, mu) -> scipy.sparse.csr_matrix:
        elems = np.arange(self.n_elements)
        local = self.elemental_jacobians(elems, u, u_ref, t, mu)
        idx = self.assembly.element_dofs  # (L, nloc)
        nloc = self.nloc
        rows = np.repeat(idx, nloc, axis=1).ravel()
        cols = np.tile(idx, (1, nloc)).ravel()
        vals = local.ravel()
        keep = (rows >= 0) & (cols >= 0)
        n = self.n_dofs
        mat = scipy.sparse.coo_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(n, n)
        )
        return mat.tocsr()
