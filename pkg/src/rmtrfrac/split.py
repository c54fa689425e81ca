"""Spectral tension/compression split of the small-strain elastic energy.

All routines are vectorized over leading axes.  The compressive parts are
returned *signed* (``eps_minus = sum_i min(eps_i, 0) n_i n_i``) so that
``eps_plus + eps_minus == eps``; the energies use squares and are unaffected
by that convention.  Zero brackets are assigned to the tension branch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COINCIDENT_TOL = 1e-10


def heaviside(x):
    return (np.asarray(x) >= 0.0).astype(float)


def eig_sym(eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (columns) of symmetric d x d tensors."""
    eps = np.asarray(eps, dtype=float)
    d = eps.shape[-1]
    if d == 1:
        return eps[..., 0, :].copy(), np.ones_like(eps)
    if d != 2:
        raise ValueError("only 1x1 and 2x2 strain tensors are supported")
    a, b, dd = eps[..., 0, 0], 0.5 * (eps[..., 0, 1] + eps[..., 1, 0]), eps[..., 1, 1]
    m = 0.5 * (a + dd)
    r = np.hypot(0.5 * (a - dd), b)
    vals = np.stack([m + r, m - r], axis=-1)
    theta = 0.5 * np.arctan2(2.0 * b, a - dd)
    cs, sn = np.cos(theta), np.sin(theta)
    vecs = np.empty(eps.shape)
    vecs[..., 0, 0], vecs[..., 1, 0] = cs, sn
    vecs[..., 0, 1], vecs[..., 1, 1] = -sn, cs
    return vals, vecs


@dataclass
class StrainSplit:
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    eps_plus: np.ndarray
    eps_minus: np.ndarray
    principal_values: np.ndarray
    principal_dirs: np.ndarray


def _project(vals, vecs):
    # sum_i vals_i n_i (x) n_i; explicit sum beats batched 2x2 matmul
    out = 0.0
    for k in range(vals.shape[-1]):
        n = vecs[..., :, k]
        out = out + vals[..., k, None, None] * (n[..., :, None] * n[..., None, :])
    return out


def split_energy(eps, lam: float, mu: float) -> StrainSplit:
    eps = np.asarray(eps, dtype=float)
    vals, vecs = eig_sym(eps)
    tr = np.trace(eps, axis1=-2, axis2=-1)
    vp, vm = np.maximum(vals, 0.0), np.minimum(vals, 0.0)
    psi_p = 0.5 * lam * np.maximum(tr, 0.0) ** 2 + mu * np.sum(vp**2, axis=-1)
    psi_m = 0.5 * lam * np.minimum(tr, 0.0) ** 2 + mu * np.sum(vm**2, axis=-1)
    return StrainSplit(
        psi_plus=psi_p,
        psi_minus=psi_m,
        eps_plus=_project(vp, vecs),
        eps_minus=_project(vm, vecs),
        principal_values=vals,
        principal_dirs=vecs,
    )


def split_stresses(eps, lam: float, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Tensile and (signed) compressive stresses, dpsi+/deps and dpsi-/deps."""
    eps = np.asarray(eps, dtype=float)
    d = eps.shape[-1]
    vals, vecs = eig_sym(eps)
    tr = np.trace(eps, axis1=-2, axis2=-1)
    eye = np.eye(d)
    sp = lam * np.maximum(tr, 0.0)[..., None, None] * eye + 2 * mu * _project(np.maximum(vals, 0.0), vecs)
    sm = lam * np.minimum(tr, 0.0)[..., None, None] * eye + 2 * mu * _project(np.minimum(vals, 0.0), vecs)
    return sp, sm


def stress(eps, c, lam: float, mu: float, k: float) -> np.ndarray:
    """Cauchy stress ``[(1-c)^2 (1-k) + k] sigma+ + sigma-`` (sigma- signed)."""
    sp, sm = split_stresses(eps, lam, mu)
    degr = (1.0 - np.asarray(c)) ** 2 * (1.0 - k) + k
    return np.asarray(degr)[..., None, None] * sp + sm


def tangent_weights(vals: np.ndarray):
    """Branch indicators for the split tangent.

    Returns ``(H_i, theta)`` where ``H_i`` flags tensile principal strains and
    ``theta = (<e1>+ - <e2>+) / (e1 - e2)`` weights the eigenvector-rotation
    term (2D only).  For coincident eigenvalues both fall back to the branch of
    their mean, which gives the isotropic tensor on that branch.
    """
    H = heaviside(vals)
    if vals.shape[-1] == 1:
        return H, None
    e1, e2 = vals[..., 0], vals[..., 1]
    gap = e1 - e2
    close = gap < COINCIDENT_TOL
    safe = np.where(close, 1.0, gap)
    theta = (np.maximum(e1, 0.0) - np.maximum(e2, 0.0)) / safe
    hm = heaviside(0.5 * (e1 + e2))
    theta = np.where(close, hm, theta)
    H = np.where(close[..., None], hm[..., None], H)
    return H, theta
