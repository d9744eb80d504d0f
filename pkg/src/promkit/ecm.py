"""Empirical cubature: pick an element subset and positive weights that
reproduce the projected elemental-residual sums of a training campaign.

The training matrix stacks, per converged trajectory state, the projection
of every element's residual contribution onto the left basis; its row space
is compressed by a truncated SVD and a greedy loop selects columns
(elements) whose nonnegative least-squares fit reproduces the row sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .campaign import SnapshotSet
from .errors import ArtifactError, InvalidInputError
from .linalg import nonneg_least_squares, truncated_svd
from .mesh import Mesh, element_patches, gather_rows

#: weights below this are pruned from the selection
_WEIGHT_PRUNE = 1e-12
#: relative fit target used when the caller asks for machine precision (0.0)
_MACHINE_FIT = 1e-14

INTEGRAND_PLAIN = "plain"
INTEGRAND_JACOBIAN_WEIGHTED = "jacobian-weighted"


@dataclass
class EcmTrainingMatrix:
    """Stacked projected elemental residuals.

    ``x`` has one column per element and one block of ``m`` rows per
    training snapshot; ``b = x @ 1`` stacks the projected assembled sums.
    """

    x: np.ndarray
    b: np.ndarray
    m: int
    n_snapshots: int

    def snapshot_block(self, s: int) -> np.ndarray:
        return self.x[s * self.m : (s + 1) * self.m, :]


@dataclass
class EcmQuadrature:
    """Selected elements, strictly positive weights and the achieved fit."""

    z: np.ndarray
    omega: np.ndarray
    fit_residual: float
    converged: bool = True
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=int)
        self.omega = np.asarray(self.omega, dtype=float)
        if self.z.size != self.omega.size:
            raise InvalidInputError("weights and element ids must align")
        if np.unique(self.z).size != self.z.size:
            raise InvalidInputError("duplicate element ids in the quadrature")
        if self.z.size and self.omega.min() <= 0.0:
            raise InvalidInputError("quadrature weights must be strictly positive")

    @property
    def n_elements(self) -> int:
        return int(self.z.size)

    def to_json(self) -> str:
        return json.dumps(
            {
                "elements": self.z.tolist(),
                "weights": self.omega.tolist(),
                "fit_residual": self.fit_residual,
                "converged": self.converged,
                "provenance": self.provenance,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str | Path) -> "EcmQuadrature":
        if isinstance(text, Path):
            text = text.read_text()
        try:
            payload = json.loads(text)
            return cls(
                z=np.asarray(payload["elements"], dtype=int),
                omega=np.asarray(payload["weights"], dtype=float),
                fit_residual=float(payload["fit_residual"]),
                converged=bool(payload["converged"]),
                provenance=payload.get("provenance", {}),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ArtifactError(f"malformed quadrature file: {exc}") from exc


def _basis_matrix(basis) -> np.ndarray:
    return basis.matrix if hasattr(basis, "matrix") else np.asarray(basis, dtype=float)


def build_ecm_training_matrix(
    problem,
    basis,
    trajectories: SnapshotSet,
    integrand: str = INTEGRAND_PLAIN,
    element_weights: np.ndarray | None = None,
) -> EcmTrainingMatrix:
    """Evaluate the projected elemental residuals along converged trajectories.

    ``integrand`` selects what each column holds per element e:

    - ``plain``: the basis-projected elemental residual (test basis rows
      restricted to e, applied to e's residual contribution),
    - ``jacobian-weighted``: the trial-basis projection of the elementwise
      Jacobian-transposed assembled residual, which is the quantity the
      least-squares hyper-reduced solver sums online.

    ``element_weights`` optionally scales the columns component-wise, e.g.
    by element volume; the default treats all elements alike.
    """
    if basis is None:
        raise InvalidInputError("a projection basis is required")
    psi = _basis_matrix(basis)
    if psi.shape[0] != problem.n_dofs:
        raise InvalidInputError("basis and problem sizes do not match")
    if trajectories.matrix.shape[0] != problem.n_dofs:
        raise InvalidInputError("trajectory and problem sizes do not match")
    if integrand not in (INTEGRAND_PLAIN, INTEGRAND_JACOBIAN_WEIGHTED):
        raise InvalidInputError(f"unknown integrand kind {integrand!r}")

    n_el = problem.n_elements
    elems = np.arange(n_el)
    psi_loc = gather_rows(problem.assembly, elems, psi)  # (L, nloc, m)
    m = psi.shape[1]
    blocks = []
    for _, mu, t, u_ref, u in trajectories.iter_steps(problem):
        if integrand == INTEGRAND_PLAIN:
            res = problem.elemental_residuals(elems, u, u_ref, t, mu)
            proj = np.einsum("eam,ea->me", psi_loc, res)
        else:
            assembled = problem.assemble_residual(u, u_ref, t, mu)
            r_le = gather_rows(problem.assembly, elems, assembled)
            jac = problem.elemental_jacobians(elems, u, u_ref, t, mu)
            barred = np.einsum("eab,ea->eb", jac, r_le)  # J^T applied locally
            proj = np.einsum("eam,ea->me", psi_loc, barred)
        blocks.append(proj)
    x = np.vstack(blocks) if blocks else np.zeros((0, n_el))
    if element_weights is not None:
        weights = np.asarray(element_weights, dtype=float)
        if weights.shape != (n_el,):
            raise InvalidInputError("element weight vector length must match the mesh")
        x = x * weights[None, :]
    return EcmTrainingMatrix(x=x, b=x @ np.ones(n_el), m=m, n_snapshots=len(blocks))


def compress_training_matrix(x, eps_ecm: float):
    """Orthonormal row-space compression ``x ~ U S theta`` with
    ``||x - U S theta||_F <= eps_ecm ||x||_F``; returns ``(theta, theta @ 1)``."""
    if isinstance(x, EcmTrainingMatrix):
        x = x.x
    svd = truncated_svd(np.asarray(x, dtype=float), eps_ecm)
    theta = svd.v.T  # (p, L), orthonormal rows
    return theta, theta @ np.ones(theta.shape[1])


def select_elements(theta: np.ndarray, b_theta: np.ndarray, eps_fit: float,
                    provenance: dict | None = None) -> EcmQuadrature:
    """Greedy element selection with a nonnegative least-squares weight solve.

    Each round appends the unselected column most positively correlated with
    the current fit residual, re-solves the weights, and prunes zero-weight
    elements. Terminates when the relative fit drops below ``eps_fit`` (a
    value of 0 means machine precision) or the selection reaches the row
    rank; in the latter case the best fit found is returned flagged as
    non-converged.
    """
    theta = np.asarray(theta, dtype=float)
    b_theta = np.asarray(b_theta, dtype=float)
    if theta.ndim != 2 or theta.size == 0:
        raise InvalidInputError("empty compressed training matrix")
    p, n_el = theta.shape
    bnorm = float(np.linalg.norm(b_theta))
    target = max(float(eps_fit), _MACHINE_FIT)
    if bnorm == 0.0:
        return EcmQuadrature(z=np.zeros(0, dtype=int), omega=np.zeros(0),
                             fit_residual=0.0, converged=True,
                             provenance=provenance or {})

    col_norms = np.linalg.norm(theta, axis=0)
    selectable = col_norms > 0.0
    selected: list[int] = []
    omega = np.zeros(0)
    residual = b_theta.copy()
    fit = 1.0
    best = (list(selected), omega, fit)

    max_rounds = 4 * p
    for _ in range(max_rounds):
        if fit <= target or len(selected) >= p:
            break
        mask = selectable.copy()
        mask[selected] = False
        if not mask.any():
            break
        scores = np.full(n_el, -np.inf)
        cand = np.flatnonzero(mask)
        scores[cand] = (theta[:, cand].T @ residual) / col_norms[cand]
        pick = int(np.argmax(scores))
        if scores[pick] <= 0.0:
            break  # no column can reduce the residual inside the cone
        selected.append(pick)
        omega_full = nonneg_least_squares(theta[:, selected], b_theta)
        keep = omega_full > _WEIGHT_PRUNE
        selected = [e for e, k in zip(selected, keep) if k]
        omega = omega_full[keep]
        residual = b_theta - theta[:, selected] @ omega
        fit = float(np.linalg.norm(residual) / bnorm)
        if fit < best[2]:
            best = (list(selected), omega.copy(), fit)

    selected, omega, fit = best
    return EcmQuadrature(
        z=np.asarray(selected, dtype=int),
        omega=omega,
        fit_residual=fit,
        converged=fit <= target,
        provenance=provenance or {},
    )


def build_complementary_mesh(z, mesh: Mesh) -> np.ndarray:
    """Union of the patches of the selected elements, sorted ascending."""
    patches = element_patches(mesh)
    members = set()
    for e in np.asarray(z, dtype=int):
        members.update(patches[e].patch)
    return np.asarray(sorted(members), dtype=int)
