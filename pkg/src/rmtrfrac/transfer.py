"""Inter-level transfer via pseudo-L2 projection with a dual multiplier basis.

For nested meshes the intersection of a master/slave pair is simply the finer
mesh, so every finer element is integrated once with the Gauss rule; all
integrands are products of two (bi)linear functions and are integrated
exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import dual_shape_functions, element_data, gauss_rule, shape_functions
from .mesh import MeshLevel


@dataclass(frozen=True, eq=False)
class TransferOperator:
    matrix: sp.csr_matrix
    from_level: int
    to_level: int
    kind: str  # "prolongation" | "restriction" | "projection"

    def __matmul__(self, v):
        return self.matrix @ v

    @property
    def shape(self):
        return self.matrix.shape


def _eval_basis(mesh: MeshLevel, points: np.ndarray, dual: bool = False):
    elem, xi = mesh.locate(points)
    if dual:
        vals = dual_shape_functions(mesh.dim, xi)
    else:
        vals, _ = shape_functions(mesh.dim, xi)
    return mesh.elements[elem], vals


def assemble_pseudo_l2(master: MeshLevel, slave: MeshLevel, check_diagonal: bool = True) -> sp.csr_matrix:
    """Scalar pseudo-L2 operator ``D^-1 B`` mapping master to slave coefficients.

    ``B[k, i] = int N_i^m psi_k`` and ``D[k, j] = int N_j^s psi_k`` where
    ``psi`` is the dual basis attached to the slave mesh.
    """
    if master.dim != slave.dim:
        raise ValueError("master and slave must share the spatial dimension")
    finer = master if master.n_elements >= slave.n_elements else slave
    xi, _ = gauss_rule(finer.dim)
    Nq, _ = shape_functions(finer.dim, xi)
    X = finer.node_coords[finer.elements]  # (ne, nen, d)
    pts = np.einsum("qe,ned->nqd", Nq, X).reshape(-1, finer.dim)
    w = element_data(finer).wdet.ravel()

    m_nodes, m_vals = _eval_basis(master, pts)
    s_nodes, s_vals = _eval_basis(slave, pts)
    q_nodes, q_vals = _eval_basis(slave, pts, dual=True)
    # the multiplier basis is tied to slave elements
    if not np.array_equal(q_nodes, s_nodes):
        raise AssertionError("dual basis must share the slave element")

    nen = m_vals.shape[1]
    Bv = w[:, None, None] * q_vals[:, :, None] * m_vals[:, None, :]
    rows = np.repeat(q_nodes[:, :, None], nen, axis=2)
    cols = np.repeat(m_nodes[:, None, :], nen, axis=1)
    B = sp.csr_matrix(
        (Bv.ravel(), (rows.ravel(), cols.ravel())),
        shape=(slave.n_nodes, master.n_nodes),
    )
    Dv = w[:, None, None] * q_vals[:, :, None] * s_vals[:, None, :]
    D = sp.csr_matrix(
        (Dv.ravel(), (rows.ravel(), np.repeat(s_nodes[:, None, :], nen, axis=1).ravel())),
        shape=(slave.n_nodes, slave.n_nodes),
    )
    d = D.diagonal()
    if np.any(d <= 0):
        raise ValueError("degenerate multiplier: non-positive entry on diag(D)")
    if check_diagonal:
        off = D - sp.diags(d)
        if off.nnz and np.abs(off.data).max() > 1e-12 * d.max():
            raise AssertionError("dual basis failed to diagonalize D")
    P = sp.diags(1.0 / d) @ B
    P.eliminate_zeros()
    return P.tocsr()


def interpolation_matrix(coarse: MeshLevel, fine: MeshLevel) -> sp.csr_matrix:
    """Standard FE interpolation: coarse shape functions evaluated at fine nodes."""
    nodes, vals = _eval_basis(coarse, fine.node_coords)
    nen = vals.shape[1]
    rows = np.repeat(np.arange(fine.n_nodes), nen)
    M = sp.csr_matrix(
        (vals.ravel(), (rows, nodes.ravel())), shape=(fine.n_nodes, coarse.n_nodes)
    )
    M.data[np.abs(M.data) < 1e-14] = 0.0
    M.eliminate_zeros()
    return M


def block(S: sp.spmatrix, n_fields: int) -> sp.csr_matrix:
    """Replicate a scalar nodal operator over interleaved fields."""
    return sp.kron(S, sp.identity(n_fields, format="csr"), format="csr")


class TransferHierarchy:
    """Prolongation, restriction and projection for every adjacent level pair.

    Assembled once at construction.  ``prolongation(l)`` maps level ``l`` to
    ``l+1``; ``restriction(l)`` and ``projection(l)`` map ``l+1`` to ``l``.
    """

    def __init__(self, meshes: Sequence[MeshLevel]):
        self.meshes = list(meshes)
        self.n_fields = self.meshes[0].dofs_per_node
        self._I, self._R, self._P = [], [], []
        for lvl in range(len(self.meshes) - 1):
            coarse, fine = self.meshes[lvl], self.meshes[lvl + 1]
            I_s = interpolation_matrix(coarse, fine)
            P_s = assemble_pseudo_l2(fine, coarse)
            I_b = block(I_s, self.n_fields)
            P_b = block(P_s, self.n_fields)
            R_b = I_b.T.tocsr()
            self._I.append(TransferOperator(I_b, lvl, lvl + 1, "prolongation"))
            self._R.append(TransferOperator(R_b, lvl + 1, lvl, "restriction"))
            self._P.append(TransferOperator(P_b, lvl + 1, lvl, "projection"))

    @property
    def n_levels(self) -> int:
        return len(self.meshes)

    def _check(self, lvl: int):
        if not 0 <= lvl < len(self._I):
            raise IndexError(f"no transfer pair ({lvl}, {lvl + 1}) in a {self.n_levels}-level hierarchy")

    def prolongation(self, lvl: int) -> TransferOperator:
        self._check(lvl)
        return self._I[lvl]

    def restriction(self, lvl: int) -> TransferOperator:
        self._check(lvl)
        return self._R[lvl]

    def projection(self, lvl: int) -> TransferOperator:
        self._check(lvl)
        return self._P[lvl]


def dump_operator(op: TransferOperator | sp.spmatrix, path) -> None:
    """Write an operator in Matrix Market coordinate format."""
    mat = op.matrix if isinstance(op, TransferOperator) else op
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat), precision=17)
