"""Reference elements, Gauss quadrature and per-element geometric factors."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import MeshLevel

_G = 1.0 / np.sqrt(3.0)

# reference vertices of the Q1 quad, counterclockwise
_QUAD_VERTS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def gauss_rule(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-point Gauss rule per axis on [-1, 1]^dim."""
    pts1 = np.array([-_G, _G])
    if dim == 1:
        return pts1[:, None], np.ones(2)
    X, Y = np.meshgrid(pts1, pts1, indexing="xy")
    return np.stack([X.ravel(), Y.ravel()], axis=1), np.ones(4)


def shape_functions(dim: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values (npts, nen) and reference gradients (npts, nen, dim)."""
    xi = np.atleast_2d(xi)
    if dim == 1:
        s = xi[:, 0]
        N = np.stack([0.5 * (1 - s), 0.5 * (1 + s)], axis=1)
        dN = np.empty((xi.shape[0], 2, 1))
        dN[:, 0, 0] = -0.5
        dN[:, 1, 0] = 0.5
        return N, dN
    s, t = xi[:, 0:1], xi[:, 1:2]
    sv, tv = _QUAD_VERTS[:, 0], _QUAD_VERTS[:, 1]
    N = 0.25 * (1 + sv * s) * (1 + tv * t)
    dN = np.empty((xi.shape[0], 4, 2))
    dN[:, :, 0] = 0.25 * sv * (1 + tv * t)
    dN[:, :, 1] = 0.25 * tv * (1 + sv * s)
    return N, dN


def dual_shape_functions(dim: int, xi: np.ndarray) -> np.ndarray:
    """Biorthogonal multiplier basis on the reference element.

    Tensor product of the 1D pair ``2*phi_0 - phi_1``, ``2*phi_1 - phi_0``,
    which satisfies ``int psi_i phi_j = delta_ij int phi_j`` elementwise.
    """
    xi = np.atleast_2d(xi)
    if dim == 1:
        N, _ = shape_functions(1, xi)
        return np.stack([2 * N[:, 0] - N[:, 1], 2 * N[:, 1] - N[:, 0]], axis=1)
    s, t = xi[:, 0], xi[:, 1]
    a = [0.5 * (1 - s), 0.5 * (1 + s)]
    b = [0.5 * (1 - t), 0.5 * (1 + t)]
    da = [2 * a[0] - a[1], 2 * a[1] - a[0]]
    db = [2 * b[0] - b[1], 2 * b[1] - b[0]]
    # vertex k sits at (sv, tv) -> 1D indices ((sv+1)/2, (tv+1)/2)
    cols = []
    for sv, tv in _QUAD_VERTS:
        cols.append(da[int((sv + 1) // 2)] * db[int((tv + 1) // 2)])
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class ElementData:
    """Quadrature data for every element of a mesh level."""

    N: np.ndarray  # (nq, nen)
    dNdx: np.ndarray  # (ne, nq, nen, dim)
    wdet: np.ndarray  # (ne, nq)

    @property
    def dNdx_t(self) -> np.ndarray:
        return np.swapaxes(self.dNdx, -1, -2)


@lru_cache(maxsize=32)
def element_data(mesh: MeshLevel) -> ElementData:
    dim = mesh.dim
    xi, w = gauss_rule(dim)
    N, dN = shape_functions(dim, xi)
    X = mesh.node_coords[mesh.elements]  # (ne, nen, dim)
    J = np.einsum("aed,qek->aqdk", X, dN)  # (ne, nq, dim, dim): dx_d/dxi_k
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0):
        raise ValueError("non-positive Jacobian determinant in mesh")
    Jinv = np.linalg.inv(J)
    dNdx = np.einsum("qek,aqkd->aqed", dN, Jinv)
    data = ElementData(N=N, dNdx=dNdx, wdet=detJ * w[None, :])
    for a in (data.N, data.dNdx, data.wdet):
        a.setflags(write=False)
    return data
