"""Phase-field fracture energy, gradient and Hessian on one mesh level.

The energy density is

    [g(c)(1-k) + k] psi+(eps(u)) + psi-(eps(u))
        + Gc [c^2 / (2 l_s) + l_s / 2 |grad c|^2]
        + (1-c)^2 p div u                       (pressurized variant)

with ``g(c) = (1-c)^2``.  The modified coarse-level energy uses the elastic
factor ``g(c) + k`` and multiplies the fracture term by the crack indicator.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .fem import element_data
from .mesh import MeshLevel, level_length_scale
from .split import _project, eig_sym, tangent_weights

DEFAULT_K = 1e-8


@dataclass(frozen=True)
class MaterialParams:
    lam: float
    mu: float
    Gc: float
    k: float = DEFAULT_K
    l_s: float | None = None  # None: use 2h of the level

    def __post_init__(self):
        if self.mu <= 0 or self.Gc <= 0:
            raise ValueError("need mu > 0 and Gc > 0")
        if not 0 < self.k < 1:
            raise ValueError("residual stiffness k must lie in (0, 1)")
        if self.l_s is not None and self.l_s <= 0:
            raise ValueError("l_s must be positive")

    def check_dim(self, dim: int):
        if self.lam <= -2.0 * self.mu / dim:
            raise ValueError("lambda must exceed -2 mu / d")

    def on_level(self, mesh: MeshLevel) -> "MaterialParams":
        """Copy with the level-dependent length scale filled in."""
        if self.l_s is not None:
            return self
        return replace(self, l_s=level_length_scale(mesh.h))


# Table 1 columns
FRACTURE_MODES = MaterialParams(lam=12.1, mu=7.9, Gc=5e-4)
PRESSURIZED = MaterialParams(lam=12.0, mu=8.0, Gc=1e-3)


class _Assembler:
    """Element DOF tables and a fixed CSR pattern for one mesh."""

    def __init__(self, mesh: MeshLevel):
        nf = mesh.dofs_per_node
        nen = mesh.elements.shape[1]
        self.n = mesh.n
        edofs = (mesh.elements[:, :, None] * nf + np.arange(nf)).reshape(mesh.n_elements, nen * nf)
        self.edofs = edofs
        m = edofs.shape[1]
        rows = np.repeat(edofs, m, axis=1).ravel()
        cols = np.tile(edofs, (1, m)).ravel()
        keys = rows.astype(np.int64) * self.n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self.scatter = inv
        self.nnz = uniq.size
        self.indices = (uniq % self.n).astype(np.int32)
        row_of = uniq // self.n
        self.indptr = np.searchsorted(row_of, np.arange(self.n + 1)).astype(np.int32)
        # position of each entry's transpose; the pattern is symmetric
        self.transpose = np.searchsorted(uniq, (uniq % self.n) * self.n + row_of)

    def vector(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.edofs.ravel(), weights=local.ravel(), minlength=self.n)

    def matrix(self, local: np.ndarray, symmetrize: bool = False) -> sp.csr_matrix:
        data = np.bincount(self.scatter, weights=local.ravel(), minlength=self.nnz)
        if symmetrize:
            # a + b == b + a in floating point, so the result is exactly symmetric
            data = 0.5 * (data + data[self.transpose])
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


@lru_cache(maxsize=32)
def assembler(mesh: MeshLevel) -> _Assembler:
    return _Assembler(mesh)


class _QuadState:
    """Field values at all quadrature points for a given coefficient vector."""

    def __init__(self, mesh: MeshLevel, x: np.ndarray):
        ed = element_data(mesh)
        d = mesh.dim
        xr = np.asarray(x, dtype=float).reshape(mesh.n_nodes, d + 1)
        ue = xr[mesh.elements, :d]  # (ne, nen, d)
        ce = xr[mesh.elements, d]  # (ne, nen)
        dNt = ed.dNdx_t  # (ne, nq, d, nen)
        self.c = ce @ ed.N.T  # (ne, nq)
        self.grad_c = np.matmul(dNt, ce[:, None, :, None])[..., 0]  # (ne, nq, d)
        gu = np.swapaxes(np.matmul(dNt, ue[:, None]), -1, -2)  # du_i/dx_j
        self.eps = 0.5 * (gu + np.swapaxes(gu, -1, -2))
        self.tr = np.trace(self.eps, axis1=-2, axis2=-1)
        self.vals, self.vecs = eig_sym(self.eps)


class PhaseFieldEnergy:
    """Objective ``f(x)`` for one level: value, gradient and sparse Hessian.

    ``modified=True`` selects the coarse-level variant with elastic factor
    ``g(c) + k`` and the fracture term scaled by ``chi1``.
    """

    def __init__(
        self,
        mesh: MeshLevel,
        params: MaterialParams,
        pressure: float | None = None,
        modified: bool = False,
        chi1: int = 1,
    ):
        params.check_dim(mesh.dim)
        self.mesh = mesh
        self.params = params.on_level(mesh)
        self.pressure = pressure
        self.modified = modified
        self.chi1 = int(chi1) if modified else 1
        if self.chi1 not in (0, 1):
            raise ValueError("chi1 must be 0 or 1")
        self._asm = assembler(mesh)
        self._ed = element_data(mesh)
        self._last: tuple[np.ndarray, _QuadState] | None = None

    def _state(self, x: np.ndarray) -> _QuadState:
        # value, gradient and Hessian are usually requested at the same point
        if self._last is not None and np.array_equal(self._last[0], x):
            return self._last[1]
        q = _QuadState(self.mesh, x)
        self._last = (np.array(x, dtype=float), q)
        return q

    @property
    def n(self) -> int:
        return self.mesh.n

    def with_pressure(self, pressure: float | None) -> "PhaseFieldEnergy":
        return PhaseFieldEnergy(self.mesh, self.params, pressure, self.modified, self.chi1)

    # degradation and its first two derivatives in c
    def _degradation(self, c):
        k = self.params.k
        if self.modified:
            return (1 - c) ** 2 + k, -2.0 * (1 - c), 2.0 * np.ones_like(c)
        return (1 - c) ** 2 * (1 - k) + k, -2.0 * (1 - c) * (1 - k), 2.0 * (1 - k) * np.ones_like(c)

    def _psi(self, q: _QuadState):
        lam, mu = self.params.lam, self.params.mu
        vp, vm = np.maximum(q.vals, 0.0), np.minimum(q.vals, 0.0)
        psi_p = 0.5 * lam * np.maximum(q.tr, 0.0) ** 2 + mu * np.sum(vp**2, axis=-1)
        psi_m = 0.5 * lam * np.minimum(q.tr, 0.0) ** 2 + mu * np.sum(vm**2, axis=-1)
        return psi_p, psi_m

    def _stresses(self, q: _QuadState):
        lam, mu = self.params.lam, self.params.mu
        eye = np.eye(self.mesh.dim)
        vp = np.maximum(q.vals, 0.0)
        sp_ = lam * np.maximum(q.tr, 0.0)[..., None, None] * eye + 2 * mu * _project(vp, q.vecs)
        # the two parts sum to the undegraded stress
        sm_ = lam * q.tr[..., None, None] * eye + 2 * mu * q.eps - sp_
        return sp_, sm_

    def energy_parts(self, x: np.ndarray) -> dict[str, float]:
        q = self._state(x)
        w = self._ed.wdet
        psi_p, psi_m = self._psi(q)
        degr, _, _ = self._degradation(q.c)
        Gc, ls = self.params.Gc, self.params.l_s
        elastic = float(np.sum(w * (degr * psi_p + psi_m)))
        frac_density = Gc * (q.c**2 / (2 * ls) + 0.5 * ls * np.sum(q.grad_c**2, axis=-1))
        fracture = float(self.chi1 * np.sum(w * frac_density))
        parts = {"elastic": elastic, "fracture": fracture}
        if self.pressure is not None:
            parts["pressure"] = float(np.sum(w * (1 - q.c) ** 2 * self.pressure * q.tr))
        return parts

    def value(self, x: np.ndarray) -> float:
        return float(sum(self.energy_parts(x).values()))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        q = self._state(x)
        ed, w = self._ed, self._ed.wdet
        d = self.mesh.dim
        Gc, ls = self.params.Gc, self.params.l_s
        psi_p, _ = self._psi(q)
        sig_p, sig_m = self._stresses(q)
        degr, ddegr, _ = self._degradation(q.c)
        sig = degr[..., None, None] * sig_p + sig_m
        coef_c = ddegr * psi_p + self.chi1 * Gc / ls * q.c
        if self.pressure is not None:
            p = self.pressure
            sig = sig + (p * (1 - q.c) ** 2)[..., None, None] * np.eye(d)
            coef_c = coef_c - 2.0 * (1 - q.c) * p * q.tr
        ne, nen = self.mesh.elements.shape
        nq = w.shape[1]
        local = np.empty((ne, nen, d + 1))
        # sum_q sum_j dN_e/dx_j * w sig_ij  as one batched product
        dN_flat = ed.dNdx.transpose(0, 2, 1, 3).reshape(ne, nen, nq * d)
        sig_w = (sig * w[..., None, None]).transpose(0, 1, 3, 2).reshape(ne, nq * d, d)
        local[:, :, :d] = np.matmul(dN_flat, sig_w)
        flux = self.chi1 * Gc * ls * w[..., None] * q.grad_c
        local[:, :, d] = (w * coef_c) @ ed.N + np.matmul(dN_flat, flux.reshape(ne, nq * d, 1))[..., 0]
        return self._asm.vector(local)

    def hessian(self, x: np.ndarray) -> sp.csr_matrix:
        q = self._state(x)
        ed, w = self._ed, self._ed.wdet
        d = self.mesh.dim
        lam, mu = self.params.lam, self.params.mu
        Gc, ls = self.params.Gc, self.params.l_s
        ne, nen = self.mesh.elements.shape
        nq = w.shape[1]
        nf = d + 1
        psi_p, _ = self._psi(q)
        sig_p, _ = self._stresses(q)
        degr, ddegr, d2degr = self._degradation(q.c)
        H, theta = tangent_weights(q.vals)
        Htr = (q.tr >= 0.0).astype(float)
        dN = ed.dNdx  # (ne, nq, nen, d)

        # each block is sum over quadrature points and modes of coef * m m^T,
        # with modes m being local vectors over the nodes of one field group
        n_u = d + (1 if d == 2 else 0)
        Lu = np.empty((ne, nq, n_u, nen, d))
        Cu = np.empty((ne, nq, n_u))
        gn = np.matmul(dN, q.vecs)  # grad N_a . n_k, (ne, nq, nen, d)
        for kk in range(d):
            Lu[:, :, kk] = q.vecs[:, :, None, :, kk] * gn[..., kk, None]
            Cu[:, :, kk] = 2 * mu * (degr * H[..., kk] + (1.0 - H[..., kk]))
        if d == 2:
            n1, n2 = q.vecs[..., :, 0], q.vecs[..., :, 1]
            Lu[:, :, 2] = 0.5 * (n1[:, :, None, :] * gn[..., 1, None] + n2[:, :, None, :] * gn[..., 0, None])
            Cu[:, :, 2] = 4 * mu * (degr * theta + (1.0 - theta))
        Lu = Lu.reshape(ne, nq * n_u, nen * d)
        Cu = (Cu * w[:, :, None]).reshape(ne, nq * n_u, 1)
        Ltr = dN.reshape(ne, nq, nen * d)  # trace of sym(e_i (x) grad N_a)
        Ctr = (lam * (degr * Htr + (1.0 - Htr)) * w)[..., None]
        Kuu = np.matmul(np.swapaxes(Lu * Cu, 1, 2), Lu) + np.matmul(np.swapaxes(Ltr * Ctr, 1, 2), Ltr)

        coef_cc = d2degr * psi_p + self.chi1 * Gc / ls
        cu = ddegr[..., None, None] * np.matmul(dN, np.swapaxes(sig_p, -1, -2))  # sig+ : B_(e,i)
        if self.pressure is not None:
            p = self.pressure
            cu = cu - (2.0 * (1 - q.c) * p)[..., None, None] * dN
            coef_cc = coef_cc + 2.0 * p * q.tr
        Lc = np.concatenate([np.broadcast_to(ed.N[None, :, None], (ne, nq, 1, nen)), np.swapaxes(dN, -1, -2)], axis=2)
        Cc = np.empty((ne, nq, d + 1))
        Cc[:, :, 0] = coef_cc * w
        Cc[:, :, 1:] = (self.chi1 * Gc * ls * w)[..., None]
        Lc = Lc.reshape(ne, nq * (d + 1), nen)
        Kcc = np.matmul(np.swapaxes(Lc * Cc.reshape(ne, -1, 1), 1, 2), Lc)
        Kuc = np.matmul(np.swapaxes((cu * w[..., None, None]).reshape(ne, nq, nen * d), 1, 2), ed.N)

        K = np.empty((ne, nen, nf, nen, nf))
        K[:, :, :d, :, :d] = Kuu.reshape(ne, nen, d, nen, d)
        K[:, :, d, :, d] = Kcc
        K[:, :, :d, :, d] = Kuc.reshape(ne, nen, d, nen)
        K[:, :, d, :, :d] = Kuc.reshape(ne, nen, d, nen).transpose(0, 3, 1, 2)
        return self._asm.matrix(K, symmetrize=True)


def energy(mesh, x, params, pressure=None) -> float:
    return PhaseFieldEnergy(mesh, params, pressure).value(x)


def gradient(mesh, x, params, pressure=None) -> np.ndarray:
    return PhaseFieldEnergy(mesh, params, pressure).gradient(x)


def hessian(mesh, x, params, pressure=None) -> sp.csr_matrix:
    return PhaseFieldEnergy(mesh, params, pressure).hessian(x)


def modified_energy(mesh, x, params, chi1, pressure=None) -> float:
    return PhaseFieldEnergy(mesh, params, pressure, modified=True, chi1=chi1).value(x)


def indicator_chi1(c_fine: np.ndarray, threshold: float = 0.85) -> int:
    """0 once any fine-level phase value exceeds the threshold, else 1."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    c_fine = np.asarray(c_fine)
    if c_fine.size == 0:
        return 1
    return 0 if float(np.max(c_fine)) > threshold else 1


def nodal_principal_stress(mesh: MeshLevel, x: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Principal Cauchy stresses averaged from quadrature points to nodes, (n_nodes, d)."""
    from .split import stress

    p = params.on_level(mesh)
    qs = _QuadState(mesh, x)
    sig = stress(qs.eps, qs.c, p.lam, p.mu, p.k)
    vals, _ = eig_sym(sig)
    elem_mean = vals.mean(axis=1)  # (ne, d)
    acc = np.zeros((mesh.n_nodes, mesh.dim))
    cnt = np.zeros(mesh.n_nodes)
    for e in range(mesh.elements.shape[1]):
        np.add.at(acc, mesh.elements[:, e], elem_mean)
        np.add.at(cnt, mesh.elements[:, e], 1.0)
    return acc / cnt[:, None]
