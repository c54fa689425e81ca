"""Nested structured meshes (segments in 1D, bilinear quads in 2D).

Nodes are numbered lexicographically with x running fastest.  Degrees of
freedom are interleaved node-major: ``d`` displacement components followed by
one phase-field component per node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

NodePredicate = Callable[[np.ndarray], np.ndarray]

COORD_TOL = 1e-12


@dataclass(frozen=True)
class DofMap:
    """(node, field) -> global DOF index, node-major / field-minor."""

    n_nodes: int
    n_fields: int

    @property
    def n(self) -> int:
        return self.n_nodes * self.n_fields

    def dof(self, node, fld: int):
        return np.asarray(node) * self.n_fields + fld

    def field_dofs(self, fld: int) -> np.ndarray:
        return np.arange(self.n_nodes) * self.n_fields + fld

    def field_mask(self, fld: int) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[fld :: self.n_fields] = True
        return mask

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (u, c) views: u has shape (n_nodes, n_fields - 1)."""
        xr = np.asarray(x).reshape(self.n_nodes, self.n_fields)
        return xr[:, :-1], xr[:, -1]

    def join(self, u: np.ndarray, c: np.ndarray) -> np.ndarray:
        x = np.empty((self.n_nodes, self.n_fields))
        x[:, :-1] = np.asarray(u).reshape(self.n_nodes, self.n_fields - 1)
        x[:, -1] = c
        return x.ravel()


@dataclass(frozen=True, eq=False)
class MeshLevel:
    level_index: int
    dim: int
    origin: tuple[float, ...]
    extents: tuple[float, ...]
    cells: tuple[int, ...]
    node_coords: np.ndarray
    elements: np.ndarray
    boundary_sets: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.extents, dtype=float) / np.asarray(self.cells)

    @property
    def h(self) -> float:
        """Maximal element edge length."""
        return float(self.spacing.max())

    @property
    def dofs_per_node(self) -> int:
        return self.dim + 1

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def dofmap(self) -> DofMap:
        return DofMap(self.n_nodes, self.dofs_per_node)

    @property
    def n(self) -> int:
        return self.n_nodes * self.dofs_per_node

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def nodes_where(self, predicate: NodePredicate) -> np.ndarray:
        return np.flatnonzero(predicate(self.node_coords))

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Element index and reference coordinates in [-1, 1]^d of points.

        Points on an interior element face are assigned to the element with
        the higher index along that axis; points on the upper domain boundary
        go to the last element.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - np.asarray(self.origin)) / self.spacing
        cells = np.asarray(self.cells)
        idx = np.clip(np.floor(rel + COORD_TOL).astype(int), 0, cells - 1)
        # a point sitting exactly on a cell's upper face belongs to that cell
        on_face = np.abs(rel - idx - 1.0) < COORD_TOL
        local = rel - idx
        local = np.where(on_face, 1.0, local)
        xi = 2.0 * local - 1.0
        if self.dim == 1:
            elem = idx[:, 0]
        else:
            elem = idx[:, 1] * cells[0] + idx[:, 0]
        return elem, xi


def _structured(dim, origin, extents, cells, level, node_sets):
    axes = [
        np.linspace(o, o + e, n + 1) for o, e, n in zip(origin, extents, cells)
    ]
    if dim == 1:
        coords = axes[0][:, None].copy()
        i = np.arange(cells[0])
        elements = np.stack([i, i + 1], axis=1)
    else:
        nx, ny = cells
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        coords = np.stack([X.ravel(), Y.ravel()], axis=1)
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        ii, jj = ii.ravel(), jj.ravel()
        n0 = jj * (nx + 1) + ii
        # counterclockwise: (i,j) (i+1,j) (i+1,j+1) (i,j+1)
        elements = np.stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1], axis=1)

    lo = np.asarray(origin, dtype=float)
    hi = lo + np.asarray(extents, dtype=float)
    tol = COORD_TOL * max(1.0, float(np.max(np.abs(hi))))
    sets: dict[str, np.ndarray] = {
        "left": np.flatnonzero(np.abs(coords[:, 0] - lo[0]) < tol),
        "right": np.flatnonzero(np.abs(coords[:, 0] - hi[0]) < tol),
    }
    if dim == 2:
        sets["bottom"] = np.flatnonzero(np.abs(coords[:, 1] - lo[1]) < tol)
        sets["top"] = np.flatnonzero(np.abs(coords[:, 1] - hi[1]) < tol)
    for name, pred in (node_sets or {}).items():
        sets[name] = np.flatnonzero(pred(coords))
    for arr in sets.values():
        arr.setflags(write=False)
    coords.setflags(write=False)
    elements.setflags(write=False)
    return MeshLevel(
        level_index=level,
        dim=dim,
        origin=tuple(float(o) for o in origin),
        extents=tuple(float(e) for e in extents),
        cells=tuple(int(c) for c in cells),
        node_coords=coords,
        elements=elements,
        boundary_sets=sets,
    )


def build_hierarchy(
    extents: Sequence[float],
    cells: Sequence[int],
    levels: int,
    origin: Sequence[float] | None = None,
    node_sets: Mapping[str, NodePredicate] | None = None,
) -> list[MeshLevel]:
    """Build levels ``0..levels`` by uniform bisection of a coarse grid.

    ``node_sets`` maps a set name to a predicate on node coordinates; it is
    evaluated on every level so tags follow the geometry under refinement.
    """
    extents = tuple(float(e) for e in extents)
    cells = tuple(int(c) for c in cells)
    dim = len(extents)
    if dim not in (1, 2) or len(cells) != dim:
        raise ValueError("extents and cells must both have length 1 or 2")
    if any(e <= 0 for e in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(c < 1 for c in cells):
        raise ValueError(f"cell counts must be >= 1, got {cells}")
    if levels < 1:
        raise ValueError(f"need at least one refinement (L >= 1), got {levels}")
    origin = tuple(float(o) for o in (origin if origin is not None else [0.0] * dim))
    if len(origin) != dim:
        raise ValueError("origin has the wrong dimension")
    return [
        _structured(dim, origin, extents, tuple(c * 2**lvl for c in cells), lvl, node_sets)
        for lvl in range(levels + 1)
    ]


def level_length_scale(h: float) -> float:
    """Phase-field regularization length used on a level of mesh size h."""
    if h <= 0:
        raise ValueError("mesh size must be positive")
    return 2.0 * h
