"""Meshes, assembly index maps and element patches.

Global state vectors live in the free degree-of-freedom space: constrained
(Dirichlet) DOFs are eliminated from the system rather than penalized. The
per-element index lists realize the gather/scatter assembly operators, with
``-1`` marking a local slot whose global DOF is constrained. Gathering maps
constrained slots to 0.0 (homogeneous boundary values); scattering drops
them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Mesh:
    """Nodes, connectivity and the set of constrained global DOFs.

    Scalar fields carry one DOF per node, so global DOF indices coincide
    with node indices.
    """

    node_coords: np.ndarray  # (n_nodes, dim)
    elements: np.ndarray  # (L, nodes_per_element) int
    dirichlet_dofs: frozenset

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.node_coords, dtype=float))
        elements = np.asarray(self.elements, dtype=int)
        object.__setattr__(self, "node_coords", coords)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "dirichlet_dofs", frozenset(int(d) for d in self.dirichlet_dofs))
        if elements.min(initial=0) < 0 or elements.max(initial=-1) >= coords.shape[0]:
            raise InvalidInputError("element connectivity references unknown nodes")
        if any(d < 0 or d >= coords.shape[0] for d in self.dirichlet_dofs):
            raise InvalidInputError("Dirichlet DOF outside the global DOF range")
        self._check_nondegenerate()

    def _check_nondegenerate(self):
        if self.elements.shape[1] == 2:  # interval elements
            lengths = np.abs(
                self.node_coords[self.elements[:, 1], 0]
                - self.node_coords[self.elements[:, 0], 0]
            )
            if np.any(lengths <= 0.0):
                raise InvalidInputError("degenerate interval element (non-positive length)")
        elif self.elements.shape[1] == 3:  # linear triangles
            p = self.node_coords[self.elements]
            twice_area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
                p[:, 2, 0] - p[:, 0, 0]
            ) * (p[:, 1, 1] - p[:, 0, 1])
            if np.any(twice_area <= 0.0):
                raise InvalidInputError("degenerate or inverted triangle element")

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]


@dataclass(frozen=True)
class AssemblyMap:
    """Per-element free-DOF index lists plus the full/free DOF numbering maps."""

    element_dofs: np.ndarray  # (L, nloc) int, free index or -1 when constrained
    n_free: int
    free_to_full: np.ndarray
    full_to_free: np.ndarray


@dataclass(frozen=True)
class ElementPatch:
    """An element together with every element sharing at least one of its nodes."""

    element: int
    patch: frozenset


def build_assembly_map(mesh: Mesh) -> AssemblyMap:
    n_full = mesh.n_nodes
    constrained = np.zeros(n_full, dtype=bool)
    for d in mesh.dirichlet_dofs:
        constrained[d] = True
    full_to_free = np.full(n_full, -1, dtype=int)
    free_to_full = np.flatnonzero(~constrained)
    full_to_free[free_to_full] = np.arange(free_to_full.size)
    element_dofs = full_to_free[mesh.elements]
    return AssemblyMap(
        element_dofs=element_dofs,
        n_free=int(free_to_full.size),
        free_to_full=free_to_full,
        full_to_free=full_to_free,
    )


def gather_dofs(assembly: AssemblyMap, e: int, v: np.ndarray) -> np.ndarray:
    """Entries of the assembled vector ``v`` at element ``e``'s DOFs.

    This is the assembled-quantity restriction, not the elemental
    contribution: at a shared node it returns the summed value.
    """
    idx = assembly.element_dofs[e]
    out = np.where(idx >= 0, v[np.maximum(idx, 0)], 0.0)
    return out


def gather_rows(assembly: AssemblyMap, elems: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized gather of rows of ``v`` for several elements.

    For a vector input the result has shape (n_elems, nloc); for a matrix
    input (N, k) it has shape (n_elems, nloc, k). Constrained slots read as
    zero.
    """
    idx = assembly.element_dofs[np.asarray(elems, dtype=int)]
    mask = idx >= 0
    safe = np.maximum(idx, 0)
    out = v[safe]
    if out.ndim == 2:
        out = np.where(mask, out, 0.0)
    else:
        out = np.where(mask[..., None], out, 0.0)
    return out


def scatter_add(
    assembly: AssemblyMap, elems: np.ndarray, local_values: np.ndarray
) -> np.ndarray:
    """Sum local element vectors into a free-DOF global vector.

    ``elems`` must be sorted ascending; contributions are accumulated in that
    order so that restricting the element set to a patch reproduces the full
    assembly bit for bit on the covered DOFs.
    """
    elems = np.asarray(elems, dtype=int)
    idx = assembly.element_dofs[elems].ravel()
    vals = np.asarray(local_values, dtype=float).ravel()
    keep = idx >= 0
    out = np.zeros(assembly.n_free)
    np.add.at(out, idx[keep], vals[keep])
    return out


def element_patches(mesh: Mesh) -> list:
    """Patch of each element: all elements sharing at least one node, itself included."""
    node_to_elems = [[] for _ in range(mesh.n_nodes)]
    for e, nodes in enumerate(mesh.elements):
        for n in nodes:
            node_to_elems[n].append(e)
    patches = []
    for e, nodes in enumerate(mesh.elements):
        members = set()
        for n in nodes:
            members.update(node_to_elems[n])
        patches.append(ElementPatch(element=e, patch=frozenset(members)))
    return patches


def interval_mesh(n_elements: int, length: float = 1.0, fix_left: bool = True) -> Mesh:
    """Uniform 1-D mesh of linear two-node elements on [0, length]."""
    if n_elements < 1:
        raise InvalidInputError("need at least one element")
    coords = np.linspace(0.0, length, n_elements + 1)[:, None]
    elements = np.column_stack([np.arange(n_elements), np.arange(1, n_elements + 1)])
    dirichlet = frozenset({0}) if fix_left else frozenset()
    return Mesh(node_coords=coords, elements=elements, dirichlet_dofs=dirichlet)


def structured_triangle_mesh(nx: int, ny: int) -> Mesh:
    """Structured triangulation of the unit square, two triangles per cell.

    All boundary nodes are constrained (homogeneous Dirichlet).
    """
    if nx < 1 or ny < 1:
        raise InvalidInputError("need at least one cell per direction")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    coords = np.array([(x, y) for y in ys for x in xs])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    boundary = {
        nid(i, j)
        for j in range(ny + 1)
        for i in range(nx + 1)
        if i in (0, nx) or j in (0, ny)
    }
    return Mesh(
        node_coords=coords,
        elements=np.asarray(tris, dtype=int),
        dirichlet_dofs=frozenset(boundary),
    )


def mesh_to_json(mesh: Mesh) -> str:
    payload = {
        "node_coords": mesh.node_coords.tolist(),
        "elements": mesh.elements.tolist(),
        "dirichlet_dofs": sorted(mesh.dirichlet_dofs),
    }
    return json.dumps(payload, indent=2)


def mesh_from_json(text: str | Path) -> Mesh:
    if isinstance(text, Path):
        text = text.read_text()
    payload = json.loads(text)
    return Mesh(
        node_coords=np.asarray(payload["node_coords"], dtype=float),
        elements=np.asarray(payload["elements"], dtype=int),
        dirichlet_dofs=frozenset(payload["dirichlet_dofs"]),
    )
